"""Exception hierarchy shared by every module."""


class ContactReduceError(Exception):
    """Base class for all package errors."""


class DomainError(ContactReduceError, ValueError):
    """Evaluation requested at a point outside the admissible set."""


class NumericalError(ContactReduceError, ArithmeticError):
    """A computation produced a non-finite or otherwise unusable number."""


class RegularityError(NumericalError):
    """A Hessian or Jacobian that must be invertible is (nearly) singular."""

    def __init__(self, message, condition=float("inf")):
        super().__init__(message)
        self.condition = condition


class ContractError(ContactReduceError):
    """An operation was called with inputs that violate its contract."""


class ValidationError(ContactReduceError):
    """A numerical certificate failed; ``details`` holds the residuals."""

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = dict(details or {})


class ParseError(ContactReduceError, ValueError):
    """Expression text could not be parsed; ``offset`` is a byte offset."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset
        self.reason = message


class ConfigError(ContactReduceError):
    """Scenario configuration failed schema or semantic validation."""

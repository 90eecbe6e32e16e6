"""Contact reduction of Hamiltonian systems by scaling symmetries."""

from .core import ContactSystem, SymplecticSystem, VectorField, contact_vf, lambda_vf, symplectic_vf
from .errors import (ConfigError, ContactReduceError, ContractError, DomainError, NumericalError,
                     ParseError, RegularityError, ValidationError)
from .expr import Expression, parse
from .integrate import IntegratorConfig, Trajectory, integrate, reparametrize
from .reduction import AdaptedChart, ReducedContactSystem, contact_reduce, normalized_reduction
from .scaling import ScalingFunction, ScalingSymmetry, check_scaling_symmetry
from .systems import instantiate, reference_scenarios

__version__ = "0.1.0"

__all__ = [
    "AdaptedChart", "ConfigError", "ContactReduceError", "ContactSystem", "ContractError",
    "DomainError", "Expression", "IntegratorConfig", "NumericalError", "ParseError",
    "ReducedContactSystem", "RegularityError", "ScalingFunction", "ScalingSymmetry",
    "SymplecticSystem", "Trajectory", "ValidationError", "VectorField", "check_scaling_symmetry",
    "contact_reduce", "contact_vf", "instantiate", "integrate", "lambda_vf", "normalized_reduction",
    "parse", "reference_scenarios", "reparametrize", "symplectic_vf",
]

"""Phase-space types and the symplectic, contact and Λ-Hamiltonian vector fields.

Conventions: points are flat arrays ``(q_1..q_n, p_1..p_n)`` on the
symplectic side and ``(q_1..q_n, p_1..p_n, S)`` on the contact side,
with ``ω = dp∧dq`` and ``η = dS − p·dq``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional

import numpy as np

from . import dual
from .errors import ContractError, DomainError, NumericalError

FD_REL_STEP = 1e-6


def darboux_matrix(n):
    """Ω with ω(u, v) = uᵀ Ω v for ω = dp∧dq in (q, p) layout."""
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, -eye], [eye, zero]])


def phase_point(coords, n_dof=None):
    x = np.asarray(coords, dtype=float)
    if x.ndim != 1 or x.size % 2:
        raise DomainError(f"phase point needs an even-length vector, got shape {x.shape}")
    if n_dof is not None and x.size != 2 * n_dof:
        raise DomainError(f"phase point has length {x.size}, system expects {2 * n_dof}")
    if not np.all(np.isfinite(x)):
        raise DomainError("phase point has non-finite entries")
    return x


def contact_point(coords, n_dof=None):
    z = np.asarray(coords, dtype=float)
    if z.ndim != 1 or z.size % 2 == 0:
        raise DomainError(f"contact point needs an odd-length vector, got shape {z.shape}")
    if n_dof is not None and z.size != 2 * n_dof + 1:
        raise DomainError(f"contact point has length {z.size}, system expects {2 * n_dof + 1}")
    if not np.all(np.isfinite(z)):
        raise DomainError("contact point has non-finite entries")
    return z


@dataclass(frozen=True)
class VectorField:
    """A vector field given by a function generic over floats and duals."""

    func: Callable
    jac: Optional[Callable] = None
    name: str = ""

    def __call__(self, x):
        return np.array([dual.value(c) for c in self.func(np.asarray(x, dtype=float))])

    def generic(self, x):
        return self.func(x)

    def jacobian(self, x):
        if self.jac is not None:
            return np.asarray(self.jac(np.asarray(x, dtype=float)), dtype=float)
        return dual.jacobian(self.func, x)[1]


class _HamiltonianBase:
    """Shared evaluation logic for symplectic and contact systems."""

    def _check(self, x):
        raise NotImplementedError

    def admissible(self, x) -> bool:
        try:
            self._check(x)
        except DomainError:
            return False
        return True

    def value(self, x):
        x = self._check(x)
        return dual.value(self.hamiltonian(x, self.params))

    def generic(self, x):
        """Hamiltonian evaluated without guard checks (for dual inputs)."""
        return self.hamiltonian(x, self.params)

    def grad(self, x):
        x = self._check(x)
        mode = self.gradient_mode
        if mode == "auto":
            mode = "analytic" if self.gradient is not None else "ad"
        if mode == "analytic":
            if self.gradient is None:
                raise ContractError(f"{self.name or 'system'} has no analytic gradient")
            g = np.asarray(self.gradient(x, self.params), dtype=float)
        elif mode == "ad":
            g = dual.gradient(lambda y: self.hamiltonian(y, self.params), x)[1]
        elif mode == "fd":
            g = self.fd_grad(x)
        else:
            raise ContractError(f"unknown gradient mode {mode!r}")
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient at {x}")
        return g

    def fd_grad(self, x):
        return dual.central_gradient(
            lambda y: dual.value(self.hamiltonian(y, self.params)), x, FD_REL_STEP)

    def hessian(self, x):
        x = self._check(x)
        return dual.hessian(lambda y: self.hamiltonian(y, self.params), x)[2]

    def with_params(self, **params):
        merged = dict(self.params)
        merged.update(params)
        return replace(self, params=merged)


@dataclass(frozen=True)
class SymplecticSystem(_HamiltonianBase):
    """Hamiltonian system on T*R^n with ω = dp∧dq.

    ``hamiltonian(x, params)`` must be written against :mod:`dual` so it
    accepts dual numbers; ``gradient(x, params)`` is optional and, when
    given, is used in preference to automatic differentiation.
    """

    n_dof: int
    hamiltonian: Callable
    gradient: Optional[Callable] = None
    params: Mapping = field(default_factory=dict)
    guard: Optional[Callable] = None
    separable: bool = False
    names: tuple = ()
    name: str = ""
    gradient_mode: str = "auto"

    def __post_init__(self):
        if self.n_dof < 1:
            raise ContractError("n_dof must be positive")
        if not self.names:
            n = self.n_dof
            object.__setattr__(self, "names", tuple(
                [f"q{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)]))

    @property
    def dim(self):
        return 2 * self.n_dof

    def _check(self, x):
        x = phase_point(x, self.n_dof)
        if self.guard is not None and not self.guard(x, self.params):
            raise DomainError(f"{self.name or 'system'}: point outside guard {x}")
        return x


@dataclass(frozen=True)
class ContactSystem(_HamiltonianBase):
    """Contact Hamiltonian ℋ(q, p, S) with a declared degree Λ."""

    n_dof: int
    hamiltonian: Callable
    gradient: Optional[Callable] = None
    degree: float = 1.0
    params: Mapping = field(default_factory=dict)
    guard: Optional[Callable] = None
    names: tuple = ()
    name: str = ""
    gradient_mode: str = "auto"

    def __post_init__(self):
        if self.n_dof < 0:
            raise ContractError("n_dof must be non-negative")
        if not self.names:
            n = self.n_dof
            object.__setattr__(self, "names", tuple(
                [f"q{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)] + ["S"]))

    @property
    def dim(self):
        return 2 * self.n_dof + 1

    def _check(self, z):
        z = contact_point(z, self.n_dof)
        if self.guard is not None and not self.guard(z, self.params):
            raise DomainError(f"{self.name or 'contact system'}: point outside guard {z}")
        return z


# ----------------------------------------------------------------------
# vector fields
# ----------------------------------------------------------------------

def symplectic_vf(sys: SymplecticSystem, x) -> np.ndarray:
    """(∂H/∂p, −∂H/∂q)."""
    g = sys.grad(x)
    n = sys.n_dof
    return np.concatenate([g[n:], -g[:n]])


def symplectic_vf_jacobian(sys: SymplecticSystem, x) -> np.ndarray:
    n = sys.n_dof
    hess = sys.hessian(x)
    return np.vstack([hess[n:], -hess[:n]])


def hamiltonian_field(sys: SymplecticSystem) -> VectorField:
    """X_H as a VectorField, with the Jacobian built from the exact Hessian."""
    return VectorField(lambda x: symplectic_vf(sys, x),
                       lambda x: symplectic_vf_jacobian(sys, x), name="X_H")


def lambda_vf(sys: ContactSystem, z) -> np.ndarray:
    """Λ-Hamiltonian field (ℋ_p, −ℋ_q − pℋ_S, p·ℋ_p − Λℋ)."""
    z = sys._check(z)
    n = sys.n_dof
    g = sys.grad(z)
    h = dual.value(sys.hamiltonian(z, sys.params))
    if not np.isfinite(h):
        raise NumericalError(f"non-finite contact Hamiltonian at {z}")
    p = z[n:2 * n]
    hq, hp, hs = g[:n], g[n:2 * n], g[2 * n]
    return np.concatenate([hp, -hq - p * hs, [p @ hp - sys.degree * h]])


def contact_vf(sys: ContactSystem, z) -> np.ndarray:
    """Contact Hamiltonian field; only defined for degree-one systems."""
    if sys.degree != 1.0:
        raise ContractError(
            f"contact_vf requires degree 1, system has degree {sys.degree}; use lambda_vf")
    return lambda_vf(sys, z)


def reeb_field(n_dof) -> np.ndarray:
    e = np.zeros(2 * n_dof + 1)
    e[-1] = 1.0
    return e


def dissipation_rate(sys: ContactSystem, z) -> float:
    """dℋ/dτ predicted by the identity dℋ/dτ = −Λℋ ∂_Sℋ."""
    z = sys._check(z)
    h = dual.value(sys.hamiltonian(z, sys.params))
    return -sys.degree * h * sys.grad(z)[-1]


def gradient_fd_residual(system, samples) -> float:
    """Max relative disagreement of the gradient provider with central differences."""
    worst = 0.0
    for x in samples:
        g = system.grad(x)
        fd = system.fd_grad(np.asarray(x, dtype=float))
        scale = max(1.0, float(np.max(np.abs(g))))
        worst = max(worst, float(np.max(np.abs(g - fd))) / scale)
    return worst

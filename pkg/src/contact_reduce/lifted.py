"""Lifted systems: couplings promoted to phase-space variables.

For H_a = Σ a_i H_i with L_D H_i = Λ_i H_i, the lifted phase space carries
positions (q, b) and momenta (p, a), so ω̂ = ω + da∧db and the couplings a
are first integrals. The lifted symmetry

    D̂ = D + Σ (Λ − Λ_i) a_i ∂_{a_i} + Σ (1 − Λ + Λ_i) b_i ∂_{b_i}

has degree Λ (default 1). Downstairs the rescaled couplings become
dissipated quantities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import dual
from .core import ContactSystem, SymplecticSystem, VectorField, symplectic_vf
from .errors import ContractError, ValidationError
from .reduction import AdaptedChart, ReducedContactSystem, contact_reduce
from .scaling import ScalingFunction, ScalingSymmetry, sample_points


@dataclass(frozen=True)
class CouplingSpec:
    name: str
    degree: float
    value: float = 1.0
    momentum: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.degree):
            raise ContractError(f"coupling {self.name!r} needs a finite degree")


def coupling_coefficients(couplings: Sequence[CouplingSpec], target_degree=1.0,
                          power_form=False):
    """Coefficients (c_a, c_b) of a_i∂_{a_i} and b_i∂_{b_i} in D̂."""
    if power_form:
        if target_degree != 1.0:
            raise ContractError("the |a|^{1−Λ} variant is defined for target degree 1")
        k = len(couplings)
        return np.ones(k), np.zeros(k)
    ca = np.array([target_degree - c.degree for c in couplings], dtype=float)
    return ca, 1.0 - ca


@dataclass(frozen=True)
class LiftedSystem:
    """Assembled lifted system with layout (q, b, p, a)."""

    base_n_dof: int
    terms: tuple
    couplings: tuple
    system: SymplecticSystem
    symmetry: ScalingSymmetry
    base_symmetry: ScalingSymmetry
    base_guard: Optional[Callable] = None
    power_form: bool = False
    term_residuals: dict = field(default_factory=dict)

    @property
    def k(self):
        return len(self.couplings)

    @property
    def names(self):
        return self.system.names

    def split(self, xh):
        n, k = self.base_n_dof, self.k
        xh = np.asarray(xh)
        q, b = xh[:n], xh[n:n + k]
        p, a = xh[n + k:2 * n + k], xh[2 * n + k:]
        return np.concatenate([q, p]), a, b

    def join(self, x, a=None, b=None):
        n = self.base_n_dof
        a = np.array([c.value for c in self.couplings]) if a is None else np.asarray(a)
        b = np.array([c.momentum for c in self.couplings]) if b is None else np.asarray(b)
        x = np.asarray(x, dtype=float)
        return np.concatenate([x[:n], b, x[n:], a])

    def at_couplings(self, a=None) -> SymplecticSystem:
        """The base system H_a with frozen couplings."""
        a = np.array([c.value for c in self.couplings]) if a is None else np.asarray(a)
        factors = [self._factor(ai, i) for i, ai in enumerate(a)]
        terms = self.terms

        def ham(x, params):
            return sum(f * t(x, params) for f, t in zip(factors, terms))

        guard = None
        if self.base_guard is not None:
            guard = self.base_guard
        return SymplecticSystem(self.base_n_dof, ham, None, self.system.params, guard,
                                False, name=f"{self.system.name}@a")

    def _factor(self, ai, i):
        if not self.power_form:
            return ai
        c = self.couplings[i]
        sgn = np.sign(c.value)
        return sgn * abs(float(ai)) ** (1.0 - c.degree)

    def rhs(self, xh):
        return symplectic_vf(self.system, xh)


def term_degree_residual(H_i, Lambda_i, D: ScalingSymmetry, samples, params=None) -> float:
    """max |D(H_i) − Λ_i H_i| / max(1, |H_i|)."""
    params = params or {}
    worst = 0.0
    for x in samples:
        val, g = dual.gradient(lambda y: H_i(y, params), x)
        worst = max(worst, abs(float(g @ D(x)) - Lambda_i * val) / max(1.0, abs(val)))
    return worst


def lift(terms: Sequence[Callable], couplings: Sequence[CouplingSpec], symmetry: ScalingSymmetry,
         base_n_dof: int, guard: Callable | None = None, params=None, target_degree=1.0,
         power_form=False, samples=None, tol=1e-6, name="lifted") -> LiftedSystem:
    """Assemble Ĥ(q, b, p, a) = Σ a_i H_i(q, p) and its symmetry D̂."""
    if len(terms) != len(couplings):
        raise ContractError("one coupling per term is required")
    params = dict(params or {})
    n, k = base_n_dof, len(couplings)
    if samples is None:
        ok = (lambda x: guard(x, params)) if guard is not None else None
        samples = sample_points(2 * n, 100, 42, accept=ok)
    residuals = {}
    for H_i, c in zip(terms, couplings):
        residuals[c.name] = term_degree_residual(H_i, c.degree, symmetry, samples, params)
    bad = {kk: v for kk, v in residuals.items() if v > tol}
    if bad:
        raise ValidationError(f"terms are not homogeneous under {symmetry.name}: {bad}", residuals)

    terms = tuple(terms)
    couplings = tuple(couplings)
    signs = [np.sign(c.value) if c.value != 0 else 1.0 for c in couplings]
    expo = [1.0 - c.degree for c in couplings]

    def ham(xh, prm):
        q, b = xh[:n], xh[n:n + k]
        p, a = xh[n + k:2 * n + k], xh[2 * n + k:]
        x = list(q) + list(p)
        total = 0.0
        for i, H_i in enumerate(terms):
            if power_form:
                coef = signs[i] * dual.power(dual.fabs(a[i]), expo[i])
            else:
                coef = a[i]
            total = total + coef * H_i(x, prm)
        return total

    def lifted_guard(xh, prm):
        x = np.concatenate([xh[:n], xh[n + k:2 * n + k]])
        if guard is not None and not guard(x, prm):
            return False
        if power_form:
            a = xh[2 * n + k:]
            if np.any(a * np.array(signs) <= 0):
                return False
        return True

    names = ([f"q{i + 1}" for i in range(n)] + [f"b_{c.name}" for c in couplings]
             + [f"p{i + 1}" for i in range(n)] + [c.name for c in couplings])
    system = SymplecticSystem(n + k, ham, None, params, lifted_guard, False, tuple(names), name)
    D_hat = lifted_scaling_symmetry(symmetry, couplings, n, target_degree, power_form)
    return LiftedSystem(n, terms, couplings, system, D_hat, symmetry, guard, power_form,
                        residuals)


def lifted_scaling_symmetry(D: ScalingSymmetry, couplings: Sequence[CouplingSpec], base_n_dof: int,
                            target_degree=1.0, power_form=False) -> ScalingSymmetry:
    n, k = base_n_dof, len(couplings)
    ca, cb = coupling_coefficients(couplings, target_degree, power_form)

    def func(xh):
        x = list(xh[:n]) + list(xh[n + k:2 * n + k])
        d = list(D.generic(x))
        b = xh[n:n + k]
        a = xh[2 * n + k:]
        return (d[:n] + [cb[i] * b[i] for i in range(k)]
                + d[n:] + [ca[i] * a[i] for i in range(k)])

    return ScalingSymmetry(VectorField(func), float(target_degree), f"{D.name}^")


def lifted_vf(lifted: LiftedSystem, xh) -> np.ndarray:
    return symplectic_vf(lifted.system, xh)


# ----------------------------------------------------------------------
# reduction of lifted systems
# ----------------------------------------------------------------------

def lift_chart(base: AdaptedChart, couplings: Sequence[CouplingSpec], target_degree=1.0,
               power_form=False) -> AdaptedChart:
    """Adapted chart for D̂ built from an adapted chart for D.

    ã = a/ρ^{c_a}, b̃ = b/ρ^{c_b}, S = S₀ − Σ c_b ã b̃,
    q̄ = (q̄₀, b̃), p̄ = (p̄₀, −ã).
    """
    n, k, m = base.n_dof, len(couplings), base.n_dof - 1
    ca, cb = coupling_coefficients(couplings, target_degree, power_form)

    def forward(xh):
        x = list(xh[:n]) + list(xh[n + k:2 * n + k])
        b = xh[n:n + k]
        a = xh[2 * n + k:]
        y = list(base.forward(x))
        r = y[0]
        at = [a[i] / dual.power(r, ca[i]) for i in range(k)]
        bt = [b[i] / dual.power(r, cb[i]) for i in range(k)]
        s = y[1]
        for i in range(k):
            s = s - cb[i] * at[i] * bt[i]
        return [r, s] + y[2:2 + m] + bt + y[2 + m:2 + 2 * m] + [-v for v in at]

    def inverse(y):
        r, s = y[0], y[1]
        qb, bt = list(y[2:2 + m]), list(y[2 + m:2 + m + k])
        pb, mat = list(y[2 + m + k:2 + 2 * m + k]), list(y[2 + 2 * m + k:])
        at = [-v for v in mat]
        s0 = s
        for i in range(k):
            s0 = s0 + cb[i] * at[i] * bt[i]
        x = list(base.inverse([r, s0] + qb + pb))
        a = [dual.power(r, ca[i]) * at[i] for i in range(k)]
        b = [dual.power(r, cb[i]) * bt[i] for i in range(k)]
        return x[:n] + b + x[n:] + a

    base_names = list(base.reduced_names)
    names = (base_names[:m] + [f"bt_{c.name}" for c in couplings]
             + base_names[m:2 * m] + [f"mat_{c.name}" for c in couplings] + ["S"])

    def domain(xh):
        x = np.concatenate([xh[:n], xh[n + k:2 * n + k]])
        return base.in_domain(x)

    return AdaptedChart(n + k, forward, inverse, f"{base.name}^", base.angles, domain,
                        base.level, tuple(names))


def reduce_lifted(lifted: LiftedSystem, base_chart: AdaptedChart, rho: ScalingFunction | None = None,
                  closed_form: ContactSystem | None = None, samples=None) -> ReducedContactSystem:
    """Degree-one reduction of a lifted system, couplings become state variables."""
    chart = lift_chart(base_chart, lifted.couplings, lifted.symmetry.degree, lifted.power_form)
    n, k = lifted.base_n_dof, lifted.k

    def rho_hat(xh):
        x = list(xh[:n]) + list(xh[n + k:2 * n + k])
        return base_chart.forward(x)[0]

    rho = ScalingFunction(rho_hat, lifted.symmetry, "rho^") if rho is None else rho
    if samples is None:
        samples = lifted_samples(lifted, chart)
    return contact_reduce(lifted.system, lifted.symmetry, rho, chart, samples,
                          closed_form=closed_form)


def lifted_samples(lifted: LiftedSystem, chart: AdaptedChart, n=100, seed=42):
    nb, k = lifted.base_n_dof, lifted.k
    blocks = [list(range(nb)), list(range(nb, nb + k)), list(range(nb + k, 2 * nb + k)),
              list(range(2 * nb + k, 2 * nb + 2 * k))]

    signs = np.array([np.sign(c.value) or 1.0 for c in lifted.couplings])

    def ok(xh):
        if lifted.power_form and not np.all(xh[2 * nb + k:] * signs > 0):
            return False
        return lifted.system.admissible(xh) and chart.in_domain(xh)

    return sample_points(2 * (nb + k), n, seed, blocks=blocks, accept=ok)


def dissipated_couplings(lifted: LiftedSystem, z, target_degree=None) -> dict:
    """ā_i = |ã_i|^{1/c_a,i} for couplings with c_a,i ≠ 0 (reduced-state input)."""
    t = lifted.symmetry.degree if target_degree is None else target_degree
    ca, _ = coupling_coefficients(lifted.couplings, t, lifted.power_form)
    m = lifted.base_n_dof - 1
    k = lifted.k
    mat = np.asarray(z)[2 * m + k:2 * m + 2 * k]
    out = {}
    for i, c in enumerate(lifted.couplings):
        if ca[i] == 0:
            continue
        out[c.name] = abs(float(mat[i])) ** (1.0 / ca[i])
    return out


def dissipation_residual(red: ReducedContactSystem, lifted: LiftedSystem, z) -> dict:
    """|X_ℋ(ā) + (∂ℋ/∂S) ā| for every dissipated coupling at z."""
    t = lifted.symmetry.degree
    ca, _ = coupling_coefficients(lifted.couplings, t, lifted.power_form)
    m = lifted.base_n_dof - 1
    k = lifted.k
    v = red.vf(z)
    hs = red.system.grad(z)[-1]
    out = {}
    for i, c in enumerate(lifted.couplings):
        if ca[i] == 0:
            continue
        idx = 2 * m + k + i
        at = -float(z[idx])
        abar = abs(at) ** (1.0 / ca[i])
        dabar = (1.0 / ca[i]) * abar / at * (-v[idx])
        out[c.name] = abs(dabar + hs * abar)
    return out

"""Contact reduction by a scaling symmetry in a user-supplied adapted chart.

An adapted chart maps a phase point to ``(ρ, S, q̄, p̄)`` such that D
becomes ρ∂_ρ and λ = i_Dω pulls back to ρ(dS − p̄·dq̄). The reduced
Hamiltonian is ℋ₀ = −H/ρ^Λ restricted to ρ = 1, and the reduced motion is
the Λ-Hamiltonian field of ℋ₀.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import dual
from .core import ContactSystem, SymplecticSystem, darboux_matrix, lambda_vf
from .errors import DomainError, ValidationError
from .expr import BinOp, Const, Expression, Neg
from .scaling import ScalingFunction, ScalingSymmetry, check_scaling_function, system_samples

ROUNDTRIP_TOL = 1e-10
PUSHFORWARD_TOL = 1e-8
PULLBACK_TOL = 1e-8
HAMILTONIAN_TOL = 1e-8
SIGMA0_EPS = 1e-6


@dataclass(frozen=True)
class AdaptedChart:
    """Chart (ρ, S, q̄, p̄) on a region of a 2n-dimensional phase space.

    ``forward(x)`` returns the sequence ``[ρ, S, q̄_1.., p̄_1..]`` and
    ``inverse(y)`` maps it back; both must accept dual numbers.
    ``angles`` lists reduced coordinates (in (q̄, p̄, S) order) living on
    a circle, ``domain`` optionally restricts the region of validity.
    """

    n_dof: int
    forward: Callable
    inverse: Callable
    name: str = "chart"
    angles: tuple = ()
    domain: Optional[Callable] = None
    level: float = 1.0
    reduced_names: tuple = ()

    def __post_init__(self):
        if not self.reduced_names:
            m = self.n_dof - 1
            names = [f"qbar{i + 1}" for i in range(m)] + [f"pbar{i + 1}" for i in range(m)]
            object.__setattr__(self, "reduced_names", tuple(names) + ("S",))

    @property
    def reduced_dof(self):
        return self.n_dof - 1

    def in_domain(self, x) -> bool:
        return self.domain is None or bool(self.domain(np.asarray(x, dtype=float)))

    def to_chart(self, x):
        return np.array([dual.value(v) for v in self.forward(np.asarray(x, dtype=float))])

    def from_chart(self, y):
        return np.array([dual.value(v) for v in self.inverse(np.asarray(y, dtype=float))])

    def reduce_generic(self, x):
        y = self.forward(x)
        m = self.reduced_dof
        return list(y[2:2 + 2 * m]) + [y[1]]

    def reduce(self, x):
        """Invariant coordinates (q̄, p̄, S) of a phase point."""
        return np.array([dual.value(v) for v in self.reduce_generic(np.asarray(x, dtype=float))])

    def embed_generic(self, z, rho=None):
        m = self.reduced_dof
        rho = self.level if rho is None else rho
        y = [rho, z[2 * m]] + list(z[:2 * m])
        return self.inverse(y)

    def embed(self, z, rho=None):
        """Phase point on the level set ρ = ``rho`` (default: the chart level)."""
        return np.array([dual.value(v) for v in self.embed_generic(np.asarray(z, dtype=float), rho)])

    def rho(self, x):
        return dual.value(self.forward(np.asarray(x, dtype=float))[0])

    @classmethod
    def from_expressions(cls, forward: Sequence[Expression], inverse: Sequence[Expression],
                         params=None, **kw):
        """Chart backed by parsed expressions (forward over phase names,
        inverse over chart names ``rho, S, qbar.., pbar..``)."""
        params = dict(params or {})
        n = len(inverse) // 2

        def fwd(x):
            return [e(list(x), params) for e in forward]

        def inv(y):
            return [e(list(y), params) for e in inverse]

        return cls(n, fwd, inv, **kw)


@dataclass
class ChartReport:
    roundtrip: float
    pushforward: float
    pullback: float
    samples: int

    def ok(self):
        return (self.roundtrip <= ROUNDTRIP_TOL and self.pushforward <= PUSHFORWARD_TOL
                and self.pullback <= PULLBACK_TOL)

    def as_dict(self):
        return {"chart_roundtrip": self.roundtrip, "chart_pushforward": self.pushforward,
                "chart_pullback": self.pullback}


def validate_chart(chart: AdaptedChart, D: ScalingSymmetry, samples) -> ChartReport:
    """Check inverse∘forward = id, D ↦ ρ∂_ρ and λ = ρ(dS − p̄·dq̄)."""
    n = chart.n_dof
    m = n - 1
    omega = darboux_matrix(n)
    rt = pf = pb = 0.0
    for x in samples:
        x = np.asarray(x, dtype=float)
        y, J = dual.jacobian(chart.forward, x)
        back = chart.from_chart(y)
        diff = back - x
        rt = max(rt, float(np.abs(diff).max()) / max(1.0, float(np.abs(x).max())))
        d = D(x)
        target = np.zeros(2 * n)
        target[0] = y[0]
        scale = max(1.0, abs(y[0]))
        pf = max(pf, float(np.abs(J @ d - target).max()) / scale)
        lam = d @ omega
        pbar = y[2 + m:2 + 2 * m]
        pull = y[0] * (J[1] - pbar @ J[2:2 + m])
        pb = max(pb, float(np.abs(lam - pull).max()) / max(1.0, float(np.abs(lam).max())))
    return ChartReport(rt, pf, pb, len(samples))


@dataclass(frozen=True)
class ReducedContactSystem:
    """Λ-contact system ℋ₀ together with its provenance."""

    system: ContactSystem
    parent: Optional[SymplecticSystem] = None
    symmetry: Optional[ScalingSymmetry] = None
    rho: Optional[ScalingFunction] = None
    chart: Optional[AdaptedChart] = None
    report: dict = field(default_factory=dict)

    @property
    def degree(self):
        return self.system.degree

    @property
    def names(self):
        return self.system.names

    @property
    def n_dof(self):
        return self.system.n_dof

    def hamiltonian(self, z):
        return self.system.value(z)

    def vf(self, z):
        return lambda_vf(self.system, z)

    rhs = vf

    def reduce(self, x):
        return self.chart.reduce(x)


def contact_reduce(sys: SymplecticSystem, D: ScalingSymmetry, rho: ScalingFunction,
                   chart: AdaptedChart, samples=None, closed_form: ContactSystem | None = None,
                   n_samples=100, seed=42) -> ReducedContactSystem:
    """Build ℋ₀ = −H∘inverse(1, ·) after validating the chart.

    When ``closed_form`` is given it must agree with −H/ρ^Λ on the samples
    and is used for evaluation (typically much faster than composing
    through the chart).
    """
    if samples is None:
        samples = system_samples(sys, n_samples, seed, accept=chart.in_domain)
    lam = D.degree
    rep = validate_chart(chart, D, samples)
    details = rep.as_dict()
    details["scaling_function"] = check_scaling_function(D, rho, samples)
    details["rho_matches_chart"] = max(abs(rho(x) - chart.rho(x)) for x in samples)
    if not rep.ok() or details["scaling_function"] > PUSHFORWARD_TOL \
            or details["rho_matches_chart"] > PUSHFORWARD_TOL:
        raise ValidationError(f"chart {chart.name!r} failed validation", details)

    level = chart.level

    def h0(z, params):
        x = chart.embed_generic(z)
        return -sys.hamiltonian(x, params) / level**lam

    def guard(z, params):
        try:
            x = chart.embed(z)
        except DomainError:
            return False
        return sys.admissible(x)

    if closed_form is None:
        contact = ContactSystem(chart.reduced_dof, h0, None, lam, sys.params, guard,
                                chart.reduced_names, f"{sys.name}/{chart.name}")
    else:
        contact = closed_form
        worst = 0.0
        for x in samples:
            r = chart.rho(x)
            expected = -sys.value(x) / abs(r) ** lam
            got = contact.value(chart.reduce(x))
            worst = max(worst, abs(got - expected) / max(1.0, abs(expected)))
        details["closed_form"] = worst
        if worst > HAMILTONIAN_TOL:
            raise ValidationError("closed-form reduced Hamiltonian disagrees with −H/ρ^Λ",
                                  details)
    return ReducedContactSystem(contact, sys, D, rho, chart, details)


# ----------------------------------------------------------------------
# case (ii), scaling-function change, symplectic lift
# ----------------------------------------------------------------------

def normalized_reduction(red: ReducedContactSystem, eps=SIGMA0_EPS) -> ContactSystem:
    """Degree-one system ℋ = −|ℋ₀|^{1/Λ}, defined away from Σ₀ = {ℋ₀ = 0}."""
    base = red.system
    lam = base.degree
    if lam == 0:
        raise DomainError("normalization needs a non-zero degree")

    def band(z, params):
        if base.guard is not None and not base.guard(z, params):
            return False
        h = dual.value(base.hamiltonian(z, params))
        if abs(h) <= eps:
            raise DomainError(f"point inside the Σ₀ exclusion band |ℋ₀| = {abs(h):.2e} <= {eps:g}")
        return True

    def ham(z, params):
        return -dual.power(dual.fabs(base.hamiltonian(z, params)), 1.0 / lam)

    def grad(z, params):
        h = dual.value(base.hamiltonian(z, params))
        return -normalization_slope(h, lam) * base.grad(z)

    return ContactSystem(base.n_dof, ham, grad, 1.0, base.params, band, base.names,
                         f"{base.name}/normalized")


def normalization_slope(h0, lam):
    """f′(ℋ₀) for f(h) = |h|^{1/Λ}."""
    return (1.0 / lam) * abs(h0) ** (1.0 / lam - 1.0) * np.sign(h0)


def normalization_factor(h0, lam):
    """c with X_ℋ = c · X^Λ_{ℋ₀} for ℋ = −|ℋ₀|^{1/Λ}."""
    return -normalization_slope(h0, lam)


def scaling_change_factor(rho, rho_tilde, Lambda, x) -> float:
    """σ^{1−Λ} with σ = ρ̃(x)/ρ(x)."""
    r, rt = float(rho(x)), float(rho_tilde(x))
    if r == 0 or rt == 0:
        raise DomainError("scaling function vanishes at the evaluation point")
    return float(dual.power(rt / r, 1.0 - Lambda))


@dataclass
class ParallelCheck:
    factor: float
    ratio: float
    residual: float


def parallel_check(red_a: ReducedContactSystem, red_b: ReducedContactSystem, x) -> ParallelCheck:
    """Compare the reduced fields of two scaling functions at a phase point.

    The field of ``red_b`` is pushed into the coordinates of ``red_a`` by
    the transition map z_b ↦ reduce_a(embed_b(z_b)).
    """
    ca, cb = red_a.chart, red_b.chart
    za, zb = ca.reduce(x), cb.reduce(x)
    xa = red_a.vf(za)
    xb = red_b.vf(zb)
    _, T = dual.jacobian(lambda z: ca.reduce_generic(cb.embed_generic(z)), zb)
    mapped = T @ xb
    factor = scaling_change_factor(ca.rho, cb.rho, red_a.degree, x)
    na = float(np.linalg.norm(xa))
    ratio = float(mapped @ xa) / na**2 if na > 0 else np.nan
    residual = float(np.linalg.norm(mapped - factor * xa)) / max(abs(factor) * na, 1e-300)
    return ParallelCheck(factor, ratio, residual)


def lift_coordinates(chart: AdaptedChart, x) -> np.ndarray:
    """(Q0, Q, P0, P) = (S, q̄, ρ, −ρp̄)."""
    y = chart.to_chart(x)
    m = chart.reduced_dof
    r, s, qb, pb = y[0], y[1], y[2:2 + m], y[2 + m:]
    return np.concatenate([[s], qb, [r], -r * pb])


def symplectic_lift(red: ReducedContactSystem) -> SymplecticSystem:
    """H(Q0, Q, P0, P) = −P0^Λ ℋ₀(Q, −P/P0, Q0) on the half-space P0 > 0."""
    base = red.system
    m = base.n_dof
    lam = base.degree

    def ham(X, params):
        Q0, Q, P0, P = X[0], X[1:m + 1], X[m + 1], X[m + 2:]
        z = list(Q) + [-Pi / P0 for Pi in P] + [Q0]
        return -dual.power(P0, lam) * base.hamiltonian(z, params)

    def guard(X, params):
        return X[m + 1] > 0

    names = ("Q0",) + tuple(f"Q{i + 1}" for i in range(m)) + ("P0",) + tuple(
        f"P{i + 1}" for i in range(m))
    return SymplecticSystem(m + 1, ham, None, base.params, guard, False, names,
                            f"{base.name}/lift")


# ----------------------------------------------------------------------
# expression-backed reduction
# ----------------------------------------------------------------------

def reduce_expression(H: Expression, inverse: dict, chart_names: Sequence[str],
                      degree: float, rho_name="rho", level=1.0) -> Expression:
    """Textual ℋ₀ = −H(inverse(ρ=level, ...)) / level^Λ over the reduced names."""
    sub = H.substitute(inverse, variables=tuple(chart_names), parameters=H.parameters)
    sub = sub.substitute({rho_name: Const(float(level))},
                         variables=tuple(n for n in chart_names if n != rho_name),
                         parameters=H.parameters)
    tree = Neg(sub.tree)
    if level != 1.0:
        tree = BinOp("/", tree, Const(float(level) ** degree))
    return Expression(tree, sub.variables, sub.parameters)

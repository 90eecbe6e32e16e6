"""Catalogue of validated model bundles.

Every bundle hard-codes closed forms (reduced Hamiltonians, charts, fixed
points, table equations) and checks them against the generic machinery at
construction, so the catalogue doubles as a regression oracle.

Bundles: ``kepler``, ``oscillator2d``, ``kepler_hooke``, ``laurent``,
``flrw`` and ``nbody_blowup``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping, Optional

import numpy as np

from . import dual
from .core import ContactSystem, SymplecticSystem, VectorField
from .errors import ConfigError, ValidationError
from .expr import Expression, Neg, Var, parse
from .herglotz import (HerglotzSystem, LagrangianSystem, LiftedLagrangian, lagrangian_scale_reduce,
                       lift_lagrangian)
from .lifted import (CouplingSpec, LiftedSystem, coupling_coefficients, lift, lift_chart,
                     lifted_samples, reduce_lifted)
from .reduction import AdaptedChart, ReducedContactSystem, contact_reduce
from .scaling import (ScalingFunction, ScalingSymmetry, check_scaling_symmetry, sample_points,
                      system_samples)

TABLE_TOL = 1e-10
SYMMETRY_TOL = 1e-6
HERGLOTZ_TOL = 1e-8
SQRT2 = float(np.sqrt(2.0))


# ----------------------------------------------------------------------
# bundle types
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class TableForm:
    """Reduced equations written in hand-picked variables w = w(z)."""

    names: tuple
    from_reduced: Callable
    rhs: Callable

    def variables(self, z):
        return np.array([dual.value(c) for c in self.from_reduced(np.asarray(z, dtype=float))])

    def residual(self, red: ReducedContactSystem, z) -> float:
        """|∂w/∂z · X(z) − rhs(w(z))| / max(1, |rhs|)."""
        w, J = dual.jacobian(self.from_reduced, np.asarray(z, dtype=float))
        expected = np.asarray(self.rhs(w), dtype=float)
        got = J @ red.vf(z)
        return float(np.abs(got - expected).max()) / max(1.0, float(np.abs(expected).max()))


@dataclass(frozen=True)
class Reduction:
    name: str
    rho: ScalingFunction
    chart: AdaptedChart
    reduced: ReducedContactSystem
    hamiltonian_text: str = ""
    table: Optional[TableForm] = None
    fixed_points: tuple = ()
    diagnostics: Mapping = field(default_factory=dict)

    @property
    def names(self):
        return self.chart.reduced_names


@dataclass(frozen=True)
class NBodyBlowup:
    """Blown-up total-collision dynamics of n unit masses in d dimensions.

    State (s, y) with s = q/‖q‖, y = ρp, ρ = ‖q‖^{1/2}; the time is
    dτ = ρ^{−3} dt.
    """

    n: int
    d: int

    @property
    def dim(self):
        return self.n * self.d

    def potential(self, s):
        """U(s) = Σ_{i<j} 1/|s_i − s_j| (homogeneous of degree −1)."""
        n, d = self.n, self.d
        total = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                sq = 0.0
                for k in range(d):
                    diff = s[i * d + k] - s[j * d + k]
                    sq = sq + diff * diff
                total = total + dual.reciprocal(dual.sqrt(sq), "pair distance")
        return total

    def grad_potential(self, s):
        return dual.gradient(self.potential, np.asarray(s, dtype=float))[1]

    def hamiltonian(self, state):
        """ℋ = U(s) − ‖y‖²/2."""
        m = self.dim
        s, y = state[:m], state[m:]
        return self.potential(s) - 0.5 * sum(c * c for c in y)

    def nu(self, state):
        m = self.dim
        return float(np.dot(state[:m], state[m:]))

    def rhs(self, state):
        """s′ = y − νs, y′ = νy/2 + ∇U(s)."""
        state = np.asarray(state, dtype=float)
        m = self.dim
        s, y = state[:m], state[m:]
        nu = float(s @ y)
        return np.concatenate([y - nu * s, 0.5 * nu * y + self.grad_potential(s)])

    def from_phase(self, x):
        """(s, y) of a phase point (generic over duals)."""
        m = self.dim
        q, p = list(x[:m]), list(x[m:])
        r = dual.sqrt(sum(c * c for c in q))
        rho = dual.sqrt(r)
        return [c / r for c in q] + [rho * c for c in p]


@dataclass(frozen=True)
class SystemBundle:
    id: str
    system: SymplecticSystem
    symmetries: tuple
    reductions: Mapping
    params: Mapping = field(default_factory=dict)
    herglotz: Optional[HerglotzSystem] = None
    lifted: Optional[LiftedSystem] = None
    lifted_reduction: Optional[Reduction] = None
    initial_conditions: Mapping = field(default_factory=dict)
    doc: str = ""
    extras: Mapping = field(default_factory=dict)

    @property
    def scaling_functions(self):
        return {k: r.rho for k, r in self.reductions.items()}

    @property
    def charts(self):
        return {k: r.chart for k, r in self.reductions.items()}

    def reduction(self, name=None) -> Reduction:
        if name is None:
            if self.reductions:
                return next(iter(self.reductions.values()))
            if self.lifted_reduction is not None:
                return self.lifted_reduction
            raise ConfigError(f"bundle {self.id!r} has no reductions")
        if name == "lifted" and self.lifted_reduction is not None:
            return self.lifted_reduction
        if name not in self.reductions:
            raise ConfigError(f"bundle {self.id!r} has no reduction {name!r}; "
                              f"available: {sorted(self.reductions)}")
        return self.reductions[name]

    def certification_targets(self, n=100, seed=42):
        """(label, system, symmetry, samples) for every certified symmetry."""
        out = []
        if self.symmetries:
            charts = list(self.charts.values())
            accept = charts[0].in_domain if charts else None
            smp = system_samples(self.system, n, seed, accept=accept)
            for D in self.symmetries:
                out.append((f"{self.id}/{D.name}", self.system, D, smp))
        if self.lifted is not None:
            chart = self.lifted_reduction.chart if self.lifted_reduction else None
            smp = lifted_samples(self.lifted, chart, n, seed) if chart else None
            out.append((f"{self.id}/lifted", self.lifted.system, self.lifted.symmetry, smp))
        return out


# ----------------------------------------------------------------------
# helpers
# ----------------------------------------------------------------------

def _norm2(v):
    return sum(c * c for c in v)


def _polar_phase(r, theta, pr, ptheta):
    """Cartesian (q, p) from polar position and momenta (p_θ = G)."""
    c, s = dual.cos(theta), dual.sin(theta)
    a = ptheta / r
    return [r * c, r * s, pr * c - a * s, pr * s + a * c]


def _closed(n_dof, ham, grad, degree, names, name, guard=None, params=None):
    return ContactSystem(n_dof, ham, grad, float(degree), dict(params or {}), guard, tuple(names),
                         name)


def _check_text(contact: ContactSystem, text, samples):
    expr = parse(text, contact.names, tuple(contact.params))
    worst = 0.0
    for z in samples:
        a = contact.value(z)
        b = expr.evaluate(list(z), contact.params)
        worst = max(worst, abs(a - b) / max(1.0, abs(a)))
    if worst > 1e-12:
        raise ValidationError(f"{contact.name}: closed form disagrees with its text", {"text": worst})


def _finish_reduction(name, system, D, rho_fn, chart, closed, text, table=None, fixed=(),
                      samples=None):
    rho = ScalingFunction(rho_fn, D, name)
    red = contact_reduce(system, D, rho, chart, samples, closed_form=closed)
    zs = [chart.reduce(x) for x in (samples if samples is not None
                                    else system_samples(system, 100, 42, accept=chart.in_domain))]
    diag = dict(red.report)
    if text:
        _check_text(closed, text, zs[:20])
    if table is not None:
        diag["table"] = max(table.residual(red, z) for z in zs)
        if diag["table"] > TABLE_TOL:
            raise ValidationError(f"{name}: reduced field disagrees with its table form", diag)
    for pt in fixed:
        res = float(np.abs(red.vf(np.asarray(pt["z"]))[list(pt["components"])]).max())
        if res > 1e-12:
            raise ValidationError(f"{name}: listed fixed point is not fixed", {"residual": res})
    return Reduction(name, rho, chart, red, text, table, tuple(fixed), diag)


def _certify(system, D, samples):
    rep = check_scaling_symmetry(system, D, samples, SYMMETRY_TOL)
    if not rep.verdict:
        raise ValidationError(f"{system.name}: {D.name} is not a scaling symmetry of degree "
                              f"{D.degree}", rep.residuals())
    return rep


# ----------------------------------------------------------------------
# Kepler
# ----------------------------------------------------------------------

def kepler_hamiltonian(x, params):
    q, p = x[:2], x[2:]
    return 0.5 * _norm2(p) - dual.reciprocal(dual.sqrt(_norm2(q)), "|q|")


def kepler_gradient(x, params):
    q, p = x[:2], x[2:]
    r3 = float(q @ q) ** 1.5
    return np.concatenate([q / r3, p])


def _kepler_guard(x, params):
    return bool(x[0] ** 2 + x[1] ** 2 > 0.0)


def kepler_symmetry() -> ScalingSymmetry:
    """D_K = 2q∂_q − p∂_p (degree −2)."""
    jac = np.diag([2.0, 2.0, -1.0, -1.0])
    return ScalingSymmetry(VectorField(lambda x: [2 * x[0], 2 * x[1], -x[2], -x[3]],
                                       lambda x: jac, "D_K"), -2.0, "D_K")


def _kepler_invariants(x):
    q1, q2, p1, p2 = x[0], x[1], x[2], x[3]
    return q1 * p1 + q2 * p2, q1 * p2 - q2 * p1


def kepler_rho_chart() -> AdaptedChart:
    """ρ = |q|^{1/2}: (θ, p̄ = −G̃, S = −2J̃) with J̃ = J/ρ, G̃ = G/ρ."""

    def forward(x):
        J, G = _kepler_invariants(x)
        rho = dual.power(x[0] * x[0] + x[1] * x[1], 0.25)
        return [rho, -2.0 * J / rho, dual.atan2(x[1], x[0]), -G / rho]

    def inverse(y):
        rho, S, th, pb = y
        r = rho * rho
        return _polar_phase(r, th, -S * rho / 2.0 / r, -pb * rho)

    return AdaptedChart(2, forward, inverse, "rho", angles=(0,), domain=lambda x: x[0] ** 2 + x[1] ** 2 > 0,
                        reduced_names=("theta", "pbar", "S"))


def kepler_kappa_chart() -> AdaptedChart:
    """κ = 1/|p|: (φ = arg p, p̄ = −G_κ, S = −J_κ) with J_κ = J|p|, G_κ = G|p|."""

    def forward(x):
        J, G = _kepler_invariants(x)
        pn = dual.sqrt(x[2] * x[2] + x[3] * x[3])
        return [1.0 / pn, -J * pn, dual.atan2(x[3], x[2]), -G * pn]

    def inverse(y):
        kappa, S, phi, pb = y
        pn = 1.0 / kappa
        p1, p2 = pn * dual.cos(phi), pn * dual.sin(phi)
        J, G = -S * kappa, -pb * kappa
        pp = pn * pn
        return [(J * p1 + G * p2) / pp, (J * p2 - G * p1) / pp, p1, p2]

    return AdaptedChart(2, forward, inverse, "kappa", angles=(0,),
                        domain=lambda x: x[2] ** 2 + x[3] ** 2 > 0,
                        reduced_names=("phi", "pbar", "S"))


def kepler_G_chart() -> AdaptedChart:
    """Scaling function G (G > 0): (q̄ = ln ρ_G, p̄ = −2J_G, S = θ − 2J_G)."""

    def forward(x):
        J, G = _kepler_invariants(x)
        rho = dual.power(x[0] * x[0] + x[1] * x[1], 0.25)
        JG = J / G
        return [G, dual.atan2(x[1], x[0]) - 2.0 * JG, dual.log(rho / G, "rho_G"), -2.0 * JG]

    def inverse(y):
        g, S, qb, pb = y
        rho = dual.exp(qb) * g
        r = rho * rho
        J = -pb * g / 2.0
        return _polar_phase(r, S - pb, J / r, g)

    def domain(x):
        return x[0] * x[3] - x[1] * x[2] > 0

    return AdaptedChart(2, forward, inverse, "G", angles=(2,), domain=domain,
                        reduced_names=("qbar", "pbar", "S"))


def kepler_J_chart() -> AdaptedChart:
    """Scaling function J (J > 0): (q̄ = θ, p̄ = −G_J, S = ln ρ_J²)."""

    def forward(x):
        J, G = _kepler_invariants(x)
        rho = dual.power(x[0] * x[0] + x[1] * x[1], 0.25)
        return [J, 2.0 * dual.log(rho / J, "rho_J"), dual.atan2(x[1], x[0]), -G / J]

    def inverse(y):
        j, S, th, pb = y
        rho = j * dual.exp(S / 2.0)
        r = rho * rho
        return _polar_phase(r, th, j / r, -pb * j)

    def domain(x):
        return x[0] * x[2] + x[1] * x[3] > 0

    return AdaptedChart(2, forward, inverse, "J", angles=(0,), domain=domain,
                        reduced_names=("theta", "pbar", "S"))


def kepler_reduced_rho() -> ContactSystem:
    """ℋ₀ = 1 − (J̃² + G̃²)/2 in (θ, p̄, S)."""

    def ham(z, params):
        return 1.0 - (z[2] * z[2] / 4.0 + z[1] * z[1]) / 2.0

    def grad(z, params):
        return np.array([0.0, -z[1], -z[2] / 4.0])

    return _closed(1, ham, grad, -2, ("theta", "pbar", "S"), "kepler/rho")


def kepler_reduced_kappa() -> ContactSystem:
    """ℋ = 1/R − 1/2, R = √(S² + p̄²)."""

    def ham(z, params):
        return 1.0 / dual.sqrt(z[2] * z[2] + z[1] * z[1]) - 0.5

    def grad(z, params):
        R3 = (z[2] ** 2 + z[1] ** 2) ** 1.5
        return np.array([0.0, -z[1] / R3, -z[2] / R3])

    def guard(z, params):
        return bool(z[1] ** 2 + z[2] ** 2 > 0)

    return _closed(1, ham, grad, -2, ("phi", "pbar", "S"), "kepler/kappa", guard)


def kepler_reduced_G() -> ContactSystem:
    """ℋ = e^{−2q̄} − (p̄²/4 + 1) e^{−4q̄}/2 (Dziobek's −G²H)."""

    def ham(z, params):
        return dual.exp(-2.0 * z[0]) - (z[1] * z[1] / 4.0 + 1.0) * dual.exp(-4.0 * z[0]) / 2.0

    def grad(z, params):
        e2, e4 = np.exp(-2.0 * z[0]), np.exp(-4.0 * z[0])
        return np.array([-2.0 * e2 + 2.0 * (z[1] ** 2 / 4.0 + 1.0) * e4, -z[1] / 4.0 * e4, 0.0])

    return _closed(1, ham, grad, -2, ("qbar", "pbar", "S"), "kepler/G")


def kepler_reduced_J() -> ContactSystem:
    """ℋ = e^{−S} − (p̄² + 1) e^{−2S}/2."""

    def ham(z, params):
        return dual.exp(-z[2]) - (z[1] * z[1] + 1.0) * dual.exp(-2.0 * z[2]) / 2.0

    def grad(z, params):
        e1, e2 = np.exp(-z[2]), np.exp(-2.0 * z[2])
        return np.array([0.0, -z[1] * e2, -e1 + (z[1] ** 2 + 1.0) * e2])

    return _closed(1, ham, grad, -2, ("theta", "pbar", "S"), "kepler/J")


def _table_rho(w):
    J, G, _ = w
    h0 = 1.0 - (J * J + G * G) / 2.0
    return [G * G / 2.0 - h0, -J * G / 2.0, G]


def _table_kappa(w):
    J, G, _ = w
    R = np.hypot(J, G)
    h = 1.0 / R - 0.5
    return [-2.0 * h + G * G / R**3, -G * J / R**3, G / R**3]


def _table_G(w):
    J, r, _ = w
    h = (2.0 * r * r - J * J - 1.0) / (2.0 * r**4)
    return [1.0 / r**2 - 2.0 * h, J / (2.0 * r**3), 1.0 / r**4]


def _table_J(w):
    G, r, _ = w
    h = 1.0 / r**2 - (G * G + 1.0) / (2.0 * r**4)
    return [G * (2.0 * h - 1.0 / r**2), r * h - G * G / (2.0 * r**3), G / r**4]


KEPLER_TABLES = {
    "rho": TableForm(("Jt", "Gt", "theta"), lambda z: [-z[2] / 2.0, -z[1], z[0]], _table_rho),
    "kappa": TableForm(("J_kappa", "G_kappa", "phi"), lambda z: [-z[2], -z[1], z[0]], _table_kappa),
    "G": TableForm(("J_G", "rho_G", "theta"), lambda z: [-z[1] / 2.0, dual.exp(z[0]), z[2] - z[1]],
                   _table_G),
    "J": TableForm(("G_J", "rho_J", "theta"), lambda z: [-z[1], dual.exp(z[2] / 2.0), z[0]], _table_J),
}

KEPLER_TEXTS = {
    "rho": "1 - (S^2/4 + pbar^2)/2",
    "kappa": "1/sqrt(S^2 + pbar^2) - 1/2",
    "G": "exp(-2*qbar) - (pbar^2/4 + 1)*exp(-4*qbar)/2",
    "J": "exp(-S) - (pbar^2 + 1)*exp(-2*S)/2",
}


def kepler_scaling_functions():
    return {
        "rho": lambda x: dual.power(x[0] * x[0] + x[1] * x[1], 0.25),
        "kappa": lambda x: dual.reciprocal(dual.sqrt(x[2] * x[2] + x[3] * x[3])),
        "G": lambda x: x[0] * x[3] - x[1] * x[2],
        "J": lambda x: x[0] * x[2] + x[1] * x[3],
    }


def kepler_system(mu=1.0) -> SymplecticSystem:
    if mu == 1.0:
        return SymplecticSystem(2, kepler_hamiltonian, kepler_gradient, {}, _kepler_guard, True,
                                ("q1", "q2", "p1", "p2"), "kepler")

    def ham(x, params):
        q, p = x[:2], x[2:]
        return 0.5 * _norm2(p) - params["mu"] * dual.reciprocal(dual.sqrt(_norm2(q)), "|q|")

    return SymplecticSystem(2, ham, None, {"mu": mu}, _kepler_guard, True,
                            ("q1", "q2", "p1", "p2"), "kepler")


def kepler_lagrangian(mu=1.0) -> LagrangianSystem:
    """Polar L = (ṙ² + r²θ̇²)/2 + μ/r on (r, θ)."""

    def lag(q, v, params):
        r = q[0]
        return 0.5 * (v[0] * v[0] + r * r * v[1] * v[1]) + params["mu"] * dual.reciprocal(r, "r")

    return LagrangianSystem(2, lag, {"mu": mu}, ("r", "theta", "rdot", "thetadot"), "kepler-polar")


def kepler_tq_symmetry() -> VectorField:
    """2r∂_r − ṙ∂_ṙ − 3θ̇∂_θ̇ on TQ (degree −2, basic)."""
    return VectorField(lambda y: [2 * y[0], 0.0 * y[1], -y[2], -3 * y[3]], name="D_TQ")


def kepler_herglotz() -> HerglotzSystem:
    """ℒ = S²/8 − θ̇²/2 − 1, Λ = −2; Legendre dual to the ρ-reduced ℋ₀."""

    def lag(q, v, s, params):
        return s * s / 8.0 - v[0] * v[0] / 2.0 - 1.0

    return HerglotzSystem(1, lag, -2.0, {}, ("theta", "thetadot", "S"), "kepler/herglotz")


def _polar_embed(qbar):
    return [1.0, qbar[0]]


def _polar_embed_velocity(qbar, qbar_dot):
    return [0.0, qbar_dot[0]]


def _check_herglotz(reduced_lag: HerglotzSystem, closed: HerglotzSystem, points):
    worst = 0.0
    for y in points:
        a, b = reduced_lag.value(y), closed.value(y)
        worst = max(worst, abs(a - b) / max(1.0, abs(b)))
    if worst > HERGLOTZ_TOL:
        raise ValidationError(f"{closed.name}: Lagrangian reduction disagrees with closed form",
                              {"herglotz": worst})
    return worst


def kepler_fixed_points():
    """Reduced (θ, p̄, S) points where the (J̃, G̃) part of the flow vanishes."""
    return (
        {"label": "collision+", "z": (0.0, 0.0, -2.0 * SQRT2), "components": (1, 2)},
        {"label": "collision-", "z": (0.0, 0.0, 2.0 * SQRT2), "components": (1, 2)},
        {"label": "circular+", "z": (0.0, -1.0, 0.0), "components": (1, 2)},
        {"label": "circular-", "z": (0.0, 1.0, 0.0), "components": (1, 2)},
    )


KEPLER_COUPLINGS = (("m", -2.0, lambda x, p: 0.5 * _norm2(x[2:]), "kinetic"),
                    ("mu", -2.0, lambda x, p: -dual.reciprocal(dual.sqrt(_norm2(x[:2])), "|q|"), -1.0))


def _radial_term(j):
    return lambda x, p: dual.power(dual.sqrt(_norm2(x[:2])), float(j))


def _lifted_radial_closed(couplings, unit_values, names, name):
    """ℋ for a lifted (kinetic + radial) system reduced in the lifted ρ-chart.

    At ρ = 1 the kinetic term is (S₀²/4 + p̄²)/2 with S₀ = S + Σ c_b ã b̃,
    a radial term contributes its value at r = 1.
    """
    k = len(couplings)
    _, cb = coupling_coefficients(couplings)

    def ham(z, params):
        bt = z[1:1 + k]
        pb = z[1 + k]
        at = [-c for c in z[2 + k:2 + 2 * k]]
        s0 = z[2 + 2 * k]
        for i in range(k):
            s0 = s0 + cb[i] * at[i] * bt[i]
        total = 0.0
        for i in range(k):
            if unit_values[i] == "kinetic":
                total = total + at[i] * (s0 * s0 / 4.0 + pb * pb) / 2.0
            else:
                total = total + at[i] * unit_values[i]
        return -total

    return _closed(1 + k, ham, None, 1.0, names, name)


def _lifted_kepler_family(bid, spec, units, guard=_kepler_guard):
    """Lift ``spec`` = [(name, degree, term, value)] over the Kepler ρ-chart.

    ``units`` gives each term at r = 1 ("kinetic" for |p|²/2).
    """
    D = kepler_symmetry()
    couplings = [CouplingSpec(name, deg, val) for name, deg, _, val in spec]
    terms = [t for _, _, t, _ in spec]
    base_samples = sample_points(4, 100, 42, accept=lambda x: guard(x, {}))
    lifted = lift(terms, couplings, D, 2, guard, {}, samples=base_samples, name=f"{bid}^")
    base_chart = kepler_rho_chart()
    chart = lift_chart(base_chart, lifted.couplings)
    closed = _lifted_radial_closed(lifted.couplings, units, chart.reduced_names, f"{bid}^/rho")
    red = reduce_lifted(lifted, base_chart, closed_form=closed)
    text = _lifted_text(lifted.couplings, units)
    _check_text(closed, text, [chart.reduce(x) for x in lifted_samples(lifted, chart, 10, 3)])
    return lifted, Reduction("lifted", red.rho, red.chart, red, text, None, (), dict(red.report))


def _lifted_text(couplings, units):
    k = len(couplings)
    _, cb = coupling_coefficients(couplings)
    s0 = "S" + "".join(f" - ({cb[i]:.17g})*mat_{c.name}*bt_{c.name}" for i, c in enumerate(couplings))
    parts = []
    for c, u in zip(couplings, units):
        if u == "kinetic":
            parts.append(f"mat_{c.name}*(({s0})^2/4 + pbar^2)/2")
        else:
            parts.append(f"mat_{c.name}*({u:.17g})")
    return " + ".join(parts) if k else "0"


def _build_kepler(params):
    sys = kepler_system()
    D = kepler_symmetry()
    samples = system_samples(sys, 100, 42)
    _certify(sys, D, samples)
    charts = {"rho": kepler_rho_chart(), "kappa": kepler_kappa_chart(),
              "G": kepler_G_chart(), "J": kepler_J_chart()}
    closed = {"rho": kepler_reduced_rho(), "kappa": kepler_reduced_kappa(),
              "G": kepler_reduced_G(), "J": kepler_reduced_J()}
    rhos = kepler_scaling_functions()
    reductions = {}
    for key in ("rho", "kappa", "G", "J"):
        fixed = kepler_fixed_points() if key == "rho" else ()
        reductions[key] = _finish_reduction(key, sys, D, rhos[key], charts[key], closed[key],
                                            KEPLER_TEXTS[key], KEPLER_TABLES[key], fixed)
    herg = kepler_herglotz()
    lag = kepler_lagrangian()
    reduced_lag = lagrangian_scale_reduce(lag, kepler_tq_symmetry(), lambda q: dual.sqrt(q[0]),
                                          -2.0, _polar_embed, _polar_embed_velocity)
    rng = np.random.default_rng(7)
    _check_herglotz(reduced_lag, herg, rng.uniform(-2, 2, size=(10, 3)))

    spec = [(n, d, t, 1.0) for n, d, t, _ in KEPLER_COUPLINGS]
    lifted, lred = _lifted_kepler_family("kepler", spec, [u for *_, u in KEPLER_COUPLINGS])
    ics = {
        "ellipse": np.array([1.0, 0.2, 0.1, 1.1]),
        "circular": np.array([1.0, 0.0, 0.0, 1.0]),
    }
    return SystemBundle(
        "kepler", sys, (D,), reductions, {}, herg, lifted, lred, ics,
        "Kepler problem H = |p|²/2 − 1/|q| with D_K = 2q∂_q − p∂_p (Λ = −2); "
        "reductions by ρ = |q|^{1/2}, κ = 1/|p|, angular momentum G and J = q·p.",
        {"lagrangian": lag, "tq_symmetry": kepler_tq_symmetry(), "reduced_lagrangian": reduced_lag,
         "lagrangian_rho": lambda q: dual.sqrt(q[0]), "section": _polar_embed,
         "section_velocity": _polar_embed_velocity})


# ----------------------------------------------------------------------
# harmonic oscillator
# ----------------------------------------------------------------------

def oscillator_system(k) -> SymplecticSystem:
    def ham(x, params):
        return 0.5 * (_norm2(x[2:]) + params["k"] * _norm2(x[:2]))

    def grad(x, params):
        return np.concatenate([params["k"] * x[:2], x[2:]])

    return SymplecticSystem(2, ham, grad, {"k": float(k)}, None, True,
                            ("q1", "q2", "p1", "p2"), "oscillator2d")


def oscillator_symmetry() -> ScalingSymmetry:
    """D̃ = (q∂_q + p∂_p)/2 (degree 1)."""
    jac = 0.5 * np.eye(4)
    return ScalingSymmetry(VectorField(lambda x: [0.5 * c for c in x], lambda x: jac, "D"), 1.0, "D")


def oscillator_chart() -> AdaptedChart:
    """ρ = |q|²: (θ, p̄ = −p_θ/r², S = −p_r/(2r))."""

    def forward(x):
        J, G = _kepler_invariants(x)
        r2 = x[0] * x[0] + x[1] * x[1]
        return [r2, -J / (2.0 * r2), dual.atan2(x[1], x[0]), -G / r2]

    def inverse(y):
        rho, S, th, pb = y
        r = dual.sqrt(rho)
        return _polar_phase(r, th, -2.0 * S * r, -pb * rho)

    return AdaptedChart(2, forward, inverse, "rho", angles=(0,),
                        domain=lambda x: x[0] ** 2 + x[1] ** 2 > 0,
                        reduced_names=("theta", "pbar", "S"))


def oscillator_reduced(k) -> ContactSystem:
    """ℋ₀ = −2S² − (k + p̄²)/2 (degree 1)."""

    def ham(z, params):
        return -2.0 * z[2] * z[2] - (params["k"] + z[1] * z[1]) / 2.0

    def grad(z, params):
        return np.array([0.0, -z[1], -4.0 * z[2]])

    return _closed(1, ham, grad, 1, ("theta", "pbar", "S"), "oscillator2d/rho", params={"k": float(k)})


def oscillator_herglotz(k) -> HerglotzSystem:
    """ℒ = 2S² + (k − θ̇²)/2."""

    def lag(q, v, s, params):
        return 2.0 * s * s + (params["k"] - v[0] * v[0]) / 2.0

    return HerglotzSystem(1, lag, 1.0, {"k": float(k)}, ("theta", "thetadot", "S"),
                          "oscillator2d/herglotz")


def oscillator_lagrangian(k) -> LagrangianSystem:
    def lag(q, v, params):
        r = q[0]
        return 0.5 * (v[0] * v[0] + r * r * v[1] * v[1]) - 0.5 * params["k"] * r * r

    return LagrangianSystem(2, lag, {"k": float(k)}, ("r", "theta", "rdot", "thetadot"),
                            "oscillator-polar")


def oscillator_tq_symmetry() -> VectorField:
    return VectorField(lambda y: [0.5 * y[0], 0.0 * y[1], 0.5 * y[2], 0.0 * y[3]], name="D_TQ")


def _build_oscillator(params):
    k = float(params["k"])
    sys = oscillator_system(k)
    D = oscillator_symmetry()
    _certify(sys, D, system_samples(sys, 100, 42))
    red = _finish_reduction("rho", sys, D, lambda x: x[0] * x[0] + x[1] * x[1], oscillator_chart(),
                            oscillator_reduced(k), "-2*S^2 - (k + pbar^2)/2")
    herg = oscillator_herglotz(k)
    lag = oscillator_lagrangian(k)
    reduced_lag = lagrangian_scale_reduce(lag, oscillator_tq_symmetry(), lambda q: q[0] * q[0], 1.0,
                                          _polar_embed, _polar_embed_velocity)
    rng = np.random.default_rng(7)
    _check_herglotz(reduced_lag, herg, rng.uniform(-2, 2, size=(10, 3)))
    ics = {"ellipse": np.array([1.0, 0.0, 0.3, 0.8]), "circular": np.array([1.0, 0.0, 0.0, np.sqrt(k)])}
    return SystemBundle(
        "oscillator2d", sys, (D,), {"rho": red}, {"k": k}, herg, None, None, ics,
        "Planar harmonic oscillator H = (|p|² + k|q|²)/2 with the degree-one symmetry "
        "D = (q∂_q + p∂_p)/2 and ρ = |q|².",
        {"lagrangian": lag, "tq_symmetry": oscillator_tq_symmetry(), "reduced_lagrangian": reduced_lag,
         "lagrangian_rho": lambda q: q[0] * q[0], "section": _polar_embed,
         "section_velocity": _polar_embed_velocity})


# ----------------------------------------------------------------------
# Kepler-Hooke and Laurent potentials (lifted)
# ----------------------------------------------------------------------

def _radial_system(name, spec):
    """Base system Σ a_i H_i at the nominal couplings."""
    terms = [(t, v) for _, _, t, v in spec]

    def ham(x, params):
        return sum(params[n] * t(x, params) for (n, *_), (t, _) in zip(spec, terms))

    values = {n: float(v) for n, _, _, v in spec}
    return SymplecticSystem(2, ham, None, values, _kepler_guard, True, ("q1", "q2", "p1", "p2"), name)


def kepler_hooke_lagrangian(mu, k) -> LiftedLagrangian:
    """(u = r², θ) form: L₁ = u̇²/(8u) + uθ̇²/2 − ku/2 plus the lifted L₂ = μ/√u."""

    def T(q, v, prm):
        u = q[0]
        return v[0] * v[0] / (8.0 * u) + u * v[1] * v[1] / 2.0 - prm["k"] * u / 2.0

    def L2(q, v, prm):
        return prm["mu"] * dual.reciprocal(dual.sqrt(q[0]), "sqrt(u)")

    return lift_lagrangian(T, [L2], [-0.5], 2, {"mu": float(mu), "k": float(k)}, "kepler_hooke-lifted")


def _build_kepler_hooke(params):
    mu, k = float(params["mu"]), float(params["k"])
    spec = [("m", -2.0, KEPLER_COUPLINGS[0][2], 1.0), ("mu", -2.0, KEPLER_COUPLINGS[1][2], mu),
            ("k", 4.0, lambda x, p: 0.5 * _norm2(x[:2]), k)]
    sys = _radial_system("kepler_hooke", spec)
    units = ["kinetic", -1.0, 0.5]
    lifted, lred = _lifted_kepler_family("kepler_hooke", spec, units)
    return SystemBundle(
        "kepler_hooke", sys, (), {}, {"mu": mu, "k": k}, None, lifted, lred,
        {"orbit": lifted.join(np.array([1.0, 0.0, 0.0, 1.1]))},
        "Kepler–Hooke H = m|p|²/2 − μ/|q| + k|q|²/2; term degrees (−2, −2, 4) under D_K, "
        "made degree one by lifting the couplings.",
        {"lifted_lagrangian": kepler_hooke_lagrangian(mu, k)})


LAURENT_DEFAULTS = {"a_m2": 0.05, "a_m1": -1.0, "a_1": 0.1, "a_2": 0.05}
LAURENT_POWERS = {"a_m2": -2, "a_m1": -1, "a_1": 1, "a_2": 2}


def _build_laurent(params):
    spec = [("m", -2.0, KEPLER_COUPLINGS[0][2], 1.0)]
    units = ["kinetic"]
    for name, j in LAURENT_POWERS.items():
        spec.append((name, 2.0 * j, _radial_term(j), float(params[name])))
        units.append(1.0)
    sys = _radial_system("laurent", spec)
    lifted, lred = _lifted_kepler_family("laurent", spec, units)
    return SystemBundle(
        "laurent", sys, (), {}, {n: float(params[n]) for n in LAURENT_POWERS}, None, lifted, lred,
        {"orbit": lifted.join(np.array([1.0, 0.0, 0.0, 1.0]))},
        "Central potential Σ a_j r^j, j ∈ {−2, −1, 1, 2}; r^j has degree 2j under D_K.", {})


# ----------------------------------------------------------------------
# FLRW cosmology
# ----------------------------------------------------------------------

FLRW_NAMES = ("v", "q", "Pi", "p")
EIGHT_PI = 8.0 * np.pi


def flrw_matter(text) -> Expression:
    return parse(text, ("q", "p"))


def flrw_system(matter: Expression, k) -> SymplecticSystem:
    """H = v(−3Π²/8π + H_m(p/v, q)) − k v^{1/3}."""

    def ham(x, params):
        v, q, Pi, p = x
        hm = matter([q, p / v])
        out = v * (-3.0 * Pi * Pi / EIGHT_PI + hm)
        if params["k"] != 0:
            out = out - params["k"] * dual.power(v, 1.0 / 3.0)
        return out

    return SymplecticSystem(2, ham, None, {"k": float(k)}, lambda x, p: x[0] > 0, False,
                            FLRW_NAMES, "flrw")


def flrw_symmetry() -> ScalingSymmetry:
    """D = v∂_v + p∂_p (degree 1 for k = 0)."""
    jac = np.diag([1.0, 0.0, 0.0, 1.0])
    return ScalingSymmetry(VectorField(lambda x: [x[0], 0.0 * x[1], 0.0 * x[2], x[3]],
                                       lambda x: jac, "D"), 1.0, "D")


def flrw_chart() -> AdaptedChart:
    """ρ = v: (q̄ = q, p̄ = −p/v, S = −Π)."""

    def forward(x):
        v, q, Pi, p = x
        return [v, -Pi, q, -p / v]

    def inverse(y):
        v, S, q, pb = y
        return [v, q, -S, -pb * v]

    return AdaptedChart(2, forward, inverse, "v", domain=lambda x: x[0] > 0,
                        reduced_names=("q", "pbar", "S"))


def flrw_reduced(matter: Expression) -> tuple[ContactSystem, str]:
    """ℋ₀ = 3S²/8π − H_m(q̄, −p̄)."""
    sub = matter.substitute({"p": Neg(Var("pbar")), "q": Var("q")}, variables=("q", "pbar", "S"))

    def ham(z, params):
        return 3.0 * z[2] * z[2] / EIGHT_PI - sub(list(z))

    text = f"3*S^2/(8*pi) - ({sub.text})"
    return _closed(1, ham, None, 1, ("q", "pbar", "S"), "flrw/v"), text


def flrw_friction_rhs(z):
    """Hand-coded reduced flow for harmonic matter in physical variables.

    Returns (dq, dp, dΠ)/dτ with p = −p̄, Π = −S:
    dq = p, dp = −q + (3Π/4π)p, dΠ = (p² − q²)/2 + 3Π²/8π.
    """
    q, pb, S = z
    p, Pi = -pb, -S
    return np.array([p, -q + 3.0 * Pi / (4.0 * np.pi) * p, (p * p - q * q) / 2.0 + 3.0 * Pi * Pi / EIGHT_PI])


def _build_flrw(params):
    k = float(params["k"])
    matter = flrw_matter(params["matter"])
    sys = flrw_system(matter, k)
    D = flrw_symmetry()
    reductions = {}
    symmetries = ()
    if k == 0:
        _certify(sys, D, system_samples(sys, 100, 42))
        symmetries = (D,)
        closed, text = flrw_reduced(matter)
        reductions["v"] = _finish_reduction("v", sys, D, lambda x: x[0], flrw_chart(), closed, text)

    def H_matter(x, prm):
        v, q, Pi, p = x
        return v * (-3.0 * Pi * Pi / EIGHT_PI + matter([q, p / v]))

    def H_k(x, prm):
        return -dual.power(x[0], 1.0 / 3.0)

    couplings = [CouplingSpec("m", 1.0, 1.0), CouplingSpec("k", 1.0 / 3.0, k if k != 0 else 1.0)]
    guard = lambda x, p: x[0] > 0  # noqa: E731
    base_samples = sample_points(4, 100, 42, accept=lambda x: x[0] > 0)
    lifted = lift([H_matter, H_k], couplings, D, 2, guard, {}, samples=base_samples, name="flrw^")
    base_chart = flrw_chart()
    chart = lift_chart(base_chart, lifted.couplings)
    _, cb = coupling_coefficients(lifted.couplings)
    sub = matter.substitute({"p": Neg(Var("pbar")), "q": Var("q")}, variables=("q", "pbar", "S"))

    def lham(z, prm):
        q, btm, btk, pb, matm, matk, S = z
        am, ak = -matm, -matk
        s0 = S + cb[0] * am * btm + cb[1] * ak * btk
        return am * (3.0 * s0 * s0 / EIGHT_PI - sub([q, pb, s0])) + ak

    closed = _closed(3, lham, None, 1.0, chart.reduced_names, "flrw^/v")
    red = reduce_lifted(lifted, base_chart, closed_form=closed)
    s0 = f"(S - ({cb[0]:.17g})*mat_m*bt_m - ({cb[1]:.17g})*mat_k*bt_k)"
    sub_text = matter.substitute({"p": Neg(Var("pbar")), "q": Var("q")},
                                 variables=("q", "pbar", "S")).text
    text = f"-mat_m*(3*{s0}^2/(8*pi) - ({sub_text})) - mat_k"
    _check_text(closed, text, [chart.reduce(x) for x in lifted_samples(lifted, chart, 10, 3)])
    lred = Reduction("lifted", red.rho, red.chart, red, text, None, (), dict(red.report))
    ics = {"friction": np.array([1.0, 1.0, 0.3, 0.5])}
    return SystemBundle(
        "flrw", sys, symmetries, reductions, {"k": k, "matter": params["matter"]}, None,
        lifted, lred, ics,
        "Flat (k = 0) or curved FLRW cosmology with scale factor volume v, its momentum Π "
        "and a one-dof matter sector H_m(p, q); D = v∂_v + p∂_p.",
        {"matter": matter})


# ----------------------------------------------------------------------
# n-body blow-up
# ----------------------------------------------------------------------

def nbody_system(n, d) -> SymplecticSystem:
    m = n * d

    def ham(x, params):
        blow = NBodyBlowup(n, d)
        return 0.5 * _norm2(x[m:]) - blow.potential(x[:m])

    def guard(x, params):
        q = np.asarray(x[:m]).reshape(n, d)
        for i in range(n):
            for j in range(i + 1, n):
                if not np.any(q[i] != q[j]):
                    return False
        return True

    names = tuple(f"q{i + 1}" for i in range(m)) + tuple(f"p{i + 1}" for i in range(m))
    return SymplecticSystem(m, ham, None, {}, guard, True, names, f"nbody{n}x{d}")


def nbody_symmetry(n, d) -> ScalingSymmetry:
    m = n * d
    jac = np.diag([2.0] * m + [-1.0] * m)
    return ScalingSymmetry(VectorField(lambda x: [2 * c for c in x[:m]] + [-c for c in x[m:]],
                                       lambda x: jac, "D"), -2.0, "D")


TWO_BODY_ALPHA = 2.0 ** -0.5
TWO_BODY_BETA = 2.0 ** -0.75
TWO_BODY_SPEED = 2.0 ** -0.25


def two_body_from_kepler(X):
    """Planar two-body state for a relative Kepler state (Q, P).

    q₁ = αQ, q₂ = −αQ, p₁ = βP, p₂ = −βP with α = 2^{−1/2}, β = 2^{−3/4}:
    then ‖q‖ = |Q| and H = 2^{−1/2} H_K, and the two-body flow is the
    Kepler flow sped up by 2^{−1/4}.
    """
    a, b = TWO_BODY_ALPHA, TWO_BODY_BETA
    Q1, Q2, P1, P2 = X
    return [a * Q1, a * Q2, -a * Q1, -a * Q2, b * P1, b * P2, -b * P1, -b * P2]


def _build_nbody(params):
    n, d = int(params["n"]), int(params["d"])
    if n < 2 or d < 1:
        raise ConfigError("nbody_blowup needs n >= 2 and d >= 1")
    sys = nbody_system(n, d)
    D = nbody_symmetry(n, d)
    _certify(sys, D, system_samples(sys, 100, 42))
    blow = NBodyBlowup(n, d)
    rho = ScalingFunction(lambda x: dual.power(_norm2(x[:n * d]), 0.25), D, "rho")
    return SystemBundle(
        "nbody_blowup", sys, (D,), {}, {"n": n, "d": d}, None, None, None, {},
        "n unit masses with U = Σ 1/|q_i − q_j|; blow-up variables s = q/‖q‖, y = ρp, "
        "ρ = ‖q‖^{1/2}, ℋ = U(s) − ‖y‖²/2.",
        {"blowup": blow, "rho": rho})


# ----------------------------------------------------------------------
# registry
# ----------------------------------------------------------------------

_REQUIRED = object()

PARAMETERS = {
    "kepler": {},
    "oscillator2d": {"k": _REQUIRED},
    "kepler_hooke": {"mu": 1.0, "k": 1.0},
    "laurent": dict(LAURENT_DEFAULTS),
    "flrw": {"k": 0.0, "matter": "(p^2 + q^2)/2"},
    "nbody_blowup": {"n": _REQUIRED, "d": _REQUIRED},
}

_BUILDERS = {
    "kepler": _build_kepler,
    "oscillator2d": _build_oscillator,
    "kepler_hooke": _build_kepler_hooke,
    "laurent": _build_laurent,
    "flrw": _build_flrw,
    "nbody_blowup": _build_nbody,
}

BUNDLE_IDS = tuple(_BUILDERS)


def resolve_params(bid, params=None) -> dict:
    if bid not in PARAMETERS:
        raise ConfigError(f"unknown bundle {bid!r}; known: {', '.join(BUNDLE_IDS)}")
    params = dict(params or {})
    spec = PARAMETERS[bid]
    unknown = sorted(set(params) - set(spec))
    if unknown:
        raise ConfigError(f"bundle {bid!r} has no parameter(s) {unknown}; expected {sorted(spec)}")
    out = {}
    for name, default in spec.items():
        if name in params:
            out[name] = params[name]
        elif default is _REQUIRED:
            raise ConfigError(f"bundle {bid!r} needs parameter {name!r}")
        else:
            out[name] = default
    return out


@lru_cache(maxsize=32)
def _instantiate(bid, frozen):
    return _BUILDERS[bid](dict(frozen))


def instantiate(bid: str, params: Mapping | None = None) -> SystemBundle:
    """Build (and validate) a bundle; results are cached per parameter set."""
    resolved = resolve_params(bid, params)
    return _instantiate(bid, tuple(sorted(resolved.items())))


def reference_scenarios(bid: str) -> list:
    """Machine-readable scenarios with expected diagnostics."""
    if bid not in PARAMETERS:
        raise ConfigError(f"unknown bundle {bid!r}")
    if bid == "kepler":
        return [
            {"name": "circular+", "reduction": "rho", "initial": [0.0, -1.0, 0.0], "span": 10.0,
             "expect": {"fixed": {"Jt": 0.0, "Gt": 1.0}}},
            {"name": "circular-", "reduction": "rho", "initial": [0.0, 1.0, 0.0], "span": 10.0,
             "expect": {"fixed": {"Jt": 0.0, "Gt": -1.0}}},
            {"name": "collision", "reduction": "rho", "initial": [0.0, -SQRT2, 0.0], "span": 20.0,
             "expect": {"enters": {"Jt": SQRT2, "Gt": 0.0}, "ball": 1e-4, "H0": 0.0}},
            {"name": "ellipse", "upstairs": [1.0, 0.2, 0.1, 1.1], "reduction": "rho",
             "expect": {"sup_deviation": 1e-5}},
        ]
    if bid == "oscillator2d":
        return [{"name": "loop", "upstairs": [1.0, 0.0, 0.3, 0.8], "expect": {"loop_action": 0.0}}]
    if bid == "flrw":
        return [{"name": "matter-friction", "reduction": "v", "initial": [1.0, -0.5, -0.3],
                 "span": 2.0, "expect": {"friction_coefficient": "3*Pi/(4*pi)"}}]
    if bid == "nbody_blowup":
        return [{"name": "collision-manifold", "params": {"n": 2, "d": 2},
                 "expect": {"H_drift": 1e-7}}]
    return [{"name": "orbit", "expect": {"coupling_drift": 1e-10}}]

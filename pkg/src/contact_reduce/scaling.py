"""Scaling symmetries, scaling functions and their numerical certificates.

Also hosts the local action construction (augmenting the flow with
Ṡ = p·∂H/∂p − H) and the loop action used to detect the global
obstruction to a degree-one correction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from . import dual
from .core import SymplecticSystem, VectorField, darboux_matrix, hamiltonian_field, symplectic_vf
from .errors import ContractError, DomainError
from .integrate import IntegratorConfig, Trajectory, integrate

DEFAULT_TOL = 1e-6
DEFAULT_SEED = 42
DEFAULT_SAMPLES = 100


@dataclass(frozen=True)
class ScalingSymmetry:
    """Vector field D with declared degree Λ (L_D ω = ω, L_D H = ΛH)."""

    field: VectorField
    degree: float
    name: str = "D"

    @classmethod
    def from_function(cls, func, degree, name="D", jac=None):
        return cls(VectorField(func, jac, name), float(degree), name)

    def __call__(self, x):
        return self.field(x)

    def jacobian(self, x):
        return self.field.jacobian(x)

    def generic(self, x):
        return self.field.generic(x)

    def plus(self, other: VectorField, name=None):
        """D + Y (e.g. adding the Hamiltonian field of a first integral)."""
        f1, f2 = self.field, other

        def func(x):
            a, b = f1.generic(x), f2.generic(x)
            return [ai + bi for ai, bi in zip(a, b)]

        def jac(x):
            return f1.jacobian(x) + f2.jacobian(x)

        return ScalingSymmetry(VectorField(func, jac), self.degree, name or f"{self.name}+Y")


@dataclass(frozen=True)
class ScalingFunction:
    """Scalar ρ with D(ρ) = ρ; ``rho`` must accept dual numbers."""

    rho: Callable
    symmetry: Optional[ScalingSymmetry] = None
    name: str = "rho"

    def __call__(self, x):
        return dual.value(self.rho(np.asarray(x, dtype=float)))

    def generic(self, x):
        return self.rho(x)

    def grad(self, x):
        return dual.gradient(self.rho, x)[1]


@dataclass
class SymmetryReport:
    liouville_residual: float
    degree_residual: float
    commutator_residual: float
    condition_LH_residual: float
    samples: int
    tolerance: float = DEFAULT_TOL
    skipped: int = 0
    verdict: bool = field(init=False)

    def __post_init__(self):
        self.verdict = bool(max(self.residuals().values()) < self.tolerance)

    def residuals(self):
        return {
            "liouville_residual": self.liouville_residual,
            "degree_residual": self.degree_residual,
            "commutator_residual": self.commutator_residual,
            "condition_LH_residual": self.condition_LH_residual,
        }

    def to_text(self):
        lines = [f"{k} = {v:.3e}" for k, v in self.residuals().items()]
        lines += [f"samples = {self.samples}", f"skipped = {self.skipped}",
                  f"tolerance = {self.tolerance:g}",
                  f"verdict = {'PASS' if self.verdict else 'FAIL'}"]
        return "\n".join(lines)


# ----------------------------------------------------------------------
# sampling
# ----------------------------------------------------------------------

def _sphere(rng, k):
    v = rng.normal(size=k)
    nrm = np.linalg.norm(v)
    while nrm < 1e-12:
        v = rng.normal(size=k)
        nrm = np.linalg.norm(v)
    return v / nrm


def sample_points(dim, n=DEFAULT_SAMPLES, seed=DEFAULT_SEED, blocks=None,
                  accept: Callable | None = None, radii=(0.1, 10.0),
                  max_tries=100_000) -> np.ndarray:
    """Seeded samples: per block a log-uniform radius times a random direction.

    ``blocks`` is a list of index lists (default: the q and p halves, with a
    trailing odd coordinate as its own block); ``accept`` rejects points.
    """
    rng = np.random.default_rng(seed)
    if blocks is None:
        half = dim // 2
        blocks = [list(range(half)), list(range(half, 2 * half))]
        if dim % 2:
            blocks.append([dim - 1])
    lo, hi = np.log(radii[0]), np.log(radii[1])
    out = []
    tries = 0
    while len(out) < n:
        tries += 1
        if tries > max_tries:
            raise DomainError(f"rejection sampling accepted only {len(out)} of {n} points")
        x = np.zeros(dim)
        for idx in blocks:
            r = np.exp(rng.uniform(lo, hi))
            x[idx] = r * _sphere(rng, len(idx))
        if accept is None or accept(x):
            out.append(x)
    return np.array(out)


def system_samples(sys, n=DEFAULT_SAMPLES, seed=DEFAULT_SEED, accept=None, blocks=None):
    """Samples admissible for ``sys`` (and an optional extra predicate)."""

    def ok(x):
        if not sys.admissible(x):
            return False
        return accept is None or bool(accept(x))

    return sample_points(sys.dim, n, seed, blocks=blocks, accept=ok)


# ----------------------------------------------------------------------
# certificates
# ----------------------------------------------------------------------

def lie_bracket(Y, X, x):
    """[Y, X](x) = J_X Y − J_Y X."""
    return X.jacobian(x) @ Y(x) - Y.jacobian(x) @ X(x)


@dataclass
class SimilarityResult:
    f: np.ndarray
    residual: float
    residuals: np.ndarray
    skipped: list


def check_dynamical_similarity(X, Y, samples, zero_tol=1e-12) -> SimilarityResult:
    """Least-squares f with [Y, X] ≈ f X at each sample."""
    fs, res, skipped = [], [], []
    for i, x in enumerate(samples):
        xv = X(x)
        nx = float(np.linalg.norm(xv))
        if nx < zero_tol:
            skipped.append(i)
            fs.append(np.nan)
            res.append(np.nan)
            continue
        b = lie_bracket(Y, X, x)
        f = float(b @ xv) / nx**2
        fs.append(f)
        res.append(float(np.linalg.norm(b - f * xv)) / nx)
    res = np.array(res)
    finite = res[np.isfinite(res)]
    return SimilarityResult(np.array(fs), float(finite.max()) if finite.size else 0.0,
                            res, skipped)


def check_scaling_symmetry(sys: SymplecticSystem, D: ScalingSymmetry, samples,
                           tol=DEFAULT_TOL) -> SymmetryReport:
    n = sys.n_dof
    omega = darboux_matrix(n)
    XH = hamiltonian_field(sys)
    lam = D.degree
    liou = deg = comm = cond = 0.0
    skipped = 0
    for x in samples:
        x = np.asarray(x, dtype=float)
        JD = D.jacobian(x)
        liou = max(liou, float(np.abs(JD.T @ omega + omega @ JD - omega).max()))
        d = D(x)
        h = sys.value(x)
        g = sys.grad(x)
        deg = max(deg, abs(float(d @ g) - lam * h))
        xh = XH(x)
        cond = max(cond, abs(float(d @ omega @ xh) - lam * h))
        nx = float(np.linalg.norm(xh))
        if nx < 1e-12:
            skipped += 1
            continue
        b = lie_bracket(D.field, XH, x)
        comm = max(comm, float(np.linalg.norm(b - (lam - 1.0) * xh)) / max(1.0, nx))
    return SymmetryReport(liou, deg, comm, cond, len(samples), tol, skipped)


def check_scaling_function(D: ScalingSymmetry, rho: ScalingFunction, samples) -> float:
    worst = 0.0
    for x in samples:
        x = np.asarray(x, dtype=float)
        val, g = dual.gradient(rho.generic, x)
        worst = max(worst, abs(float(g @ D(x)) - val))
    return worst


# ----------------------------------------------------------------------
# local action and loop action
# ----------------------------------------------------------------------

def lagrangian_value(sys: SymplecticSystem, x) -> float:
    """L = p·∂H/∂p − H."""
    n = sys.n_dof
    g = sys.grad(x)
    return float(x[n:] @ g[n:]) - sys.value(x)


def action_augmented(sys: SymplecticSystem):
    n = sys.n_dof

    def rhs(y):
        x = y[:2 * n]
        g = sys.grad(x)
        lag = float(x[n:] @ g[n:]) - sys.value(x)
        return np.concatenate([g[n:], -g[:n], [lag]])

    return rhs


def local_action_solution(sys: SymplecticSystem, x0, t_max,
                          config: IntegratorConfig | None = None) -> Trajectory:
    """Trajectory of (x, S) with Ṡ = L and S(0) = 0."""
    y0 = np.concatenate([np.asarray(x0, dtype=float), [0.0]])
    return integrate(action_augmented(sys), y0, t_max, config,
                     names=tuple(sys.names) + ("S",))


def closed_orbit(sys: SymplecticSystem, x0, period_estimate,
                 config: IntegratorConfig | None = None, slack=1.5) -> Trajectory:
    """Integrate (x, S) until the first return to the section through x0.

    The section is the hyperplane through x0 orthogonal to the flow; the
    return is the first upward crossing, searched within ``slack`` times the
    period estimate, located on the dense output and then refined by Newton
    steps on exact re-integrations.
    """
    x0 = np.asarray(x0, dtype=float)
    n2 = 2 * sys.n_dof
    f0 = symplectic_vf(sys, x0)
    traj = local_action_solution(sys, x0, slack * period_estimate, config)
    sig = (traj.states[:, :n2] - x0) @ f0
    spline = traj.spline()
    t = traj.t
    for i in range(len(t) - 1):
        if sig[i] < 0 <= sig[i + 1]:
            tr = brentq(lambda s: (spline(s)[:n2] - x0) @ f0, t[i], t[i + 1], xtol=1e-14)
            break
    else:
        raise ContractError("no return to the initial section within the search window")
    for _ in range(4):
        out = local_action_solution(sys, x0, tr, config)
        xe = out.states[-1, :n2]
        step = float((xe - x0) @ f0) / float(out.derivs[-1, :n2] @ f0)
        if abs(step) <= 1e-15 * tr:
            break
        tr -= step
    out.stop_reason, out.event = "event", "return"
    return out


def loop_action(sys: SymplecticSystem, traj: Trajectory, closure_tol=1e-6) -> float:
    """∮ L dt over a closed trajectory."""
    n2 = 2 * sys.n_dof
    gap = float(np.abs(traj.states[-1, :n2] - traj.states[0, :n2]).max())
    if gap > closure_tol:
        raise ContractError(f"trajectory does not close: gap {gap:.3e} > {closure_tol:g}")
    if traj.dim == n2 + 1:
        return float(traj.states[-1, -1] - traj.states[0, -1])
    # Simpson on Hermite midpoints
    L = np.array([lagrangian_value(sys, x) for x in traj.states])
    h = np.diff(traj.t)
    mid = (0.5 * (traj.states[:-1] + traj.states[1:])
           + (h[:, None] / 8.0) * (traj.derivs[:-1] - traj.derivs[1:]))
    Lm = np.array([lagrangian_value(sys, x) for x in mid])
    return float(np.sum(h / 6.0 * (L[:-1] + 4 * Lm + L[1:])))


def kepler_period(energy: float) -> float:
    """Period 2π a^{3/2} of a bound Kepler orbit with unit coupling."""
    if energy >= 0:
        raise DomainError("bound orbits need negative energy")
    a = -1.0 / (2.0 * energy)
    return 2.0 * np.pi * a**1.5

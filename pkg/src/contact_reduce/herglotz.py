"""Herglotz and Λ-Herglotz dynamics, Legendre bridging and Lagrangian scale reduction.

States are ``(q, q̇, S)`` for Herglotz systems and ``(q, q̇)`` for ordinary
Lagrangian systems. Lagrangians are written against :mod:`dual` so their
first and second derivatives are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from . import dual
from .core import ContactSystem, VectorField
from .errors import ContractError, DomainError, RegularityError, ValidationError

COND_MAX = 1e12


def _solve_regular(A, b, what="velocity Hessian"):
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > COND_MAX:
        raise RegularityError(f"{what} is singular (condition number {cond:.3e})", cond)
    return np.linalg.solve(A, b)


@dataclass(frozen=True)
class HerglotzSystem:
    """ℒ(q, q̇, S) with degree Λ (Λ = 1: classic Herglotz)."""

    n_dof: int
    lagrangian: Callable
    degree: float = 1.0
    params: Mapping = field(default_factory=dict)
    names: tuple = ()
    name: str = ""

    def __post_init__(self):
        if not self.names:
            n = self.n_dof
            object.__setattr__(self, "names", tuple(
                [f"q{i + 1}" for i in range(n)] + [f"v{i + 1}" for i in range(n)] + ["S"]))

    def _split(self, y):
        n = self.n_dof
        return y[:n], y[n:2 * n], y[2 * n]

    def value(self, state):
        q, v, s = self._split(np.asarray(state, dtype=float))
        return dual.value(self.lagrangian(q, v, s, self.params))

    def derivatives(self, state):
        """ℒ, its gradient and Hessian w.r.t. (q, q̇, S)."""
        def f(y):
            q, v, s = self._split(y)
            return self.lagrangian(q, v, s, self.params)
        return dual.hessian(f, np.asarray(state, dtype=float))

    def energy(self, state):
        """ℰ = ∂ℒ/∂q̇ · q̇ − ℒ."""
        n = self.n_dof
        L, g, _ = self.derivatives(state)
        v = np.asarray(state, dtype=float)[n:2 * n]
        return float(g[n:2 * n] @ v) - L

    def velocity_hessian_condition(self, state):
        n = self.n_dof
        _, _, H = self.derivatives(state)
        return float(np.linalg.cond(H[n:2 * n, n:2 * n]))

    def rhs(self, state):
        return lambda_herglotz_rhs(self, state)


def lambda_herglotz_rhs(sys: HerglotzSystem, state) -> np.ndarray:
    """(q̇, q̈, Ṡ) with Ṡ = ℒ + (1 − Λ)ℰ and the Herglotz–Lagrange equations."""
    n = sys.n_dof
    state = np.asarray(state, dtype=float)
    L, g, H = sys.derivatives(state)
    v = state[n:2 * n]
    Lq, Lv, Ls = g[:n], g[n:2 * n], g[2 * n]
    energy = float(Lv @ v) - L
    sdot = L + (1.0 - sys.degree) * energy
    Lvv = H[n:2 * n, n:2 * n]
    Lvq = H[n:2 * n, :n]
    LvS = H[n:2 * n, 2 * n]
    rhs = Ls * Lv + Lq - Lvq @ v - LvS * sdot
    acc = _solve_regular(Lvv, rhs)
    return np.concatenate([v, acc, [sdot]])


def herglotz_rhs(sys: HerglotzSystem, state) -> np.ndarray:
    """Classic Herglotz equations; only for Λ = 1."""
    if sys.degree != 1.0:
        raise ContractError("herglotz_rhs needs Λ = 1; use lambda_herglotz_rhs")
    return lambda_herglotz_rhs(sys, state)


@dataclass(frozen=True)
class LagrangianSystem:
    """Ordinary Lagrangian L(q, q̇) on TQ."""

    n_dof: int
    lagrangian: Callable
    params: Mapping = field(default_factory=dict)
    names: tuple = ()
    name: str = ""

    def __post_init__(self):
        if not self.names:
            n = self.n_dof
            object.__setattr__(self, "names", tuple(
                [f"q{i + 1}" for i in range(n)] + [f"v{i + 1}" for i in range(n)]))

    def value(self, state):
        n = self.n_dof
        state = np.asarray(state, dtype=float)
        return dual.value(self.lagrangian(state[:n], state[n:], self.params))

    def generic(self, y):
        n = self.n_dof
        return self.lagrangian(y[:n], y[n:2 * n], self.params)

    def rhs(self, state):
        """Euler–Lagrange: q̈ = L_vv⁻¹ (L_q − L_vq q̇)."""
        n = self.n_dof
        state = np.asarray(state, dtype=float)
        _, g, H = dual.hessian(self.generic, state)
        v = state[n:]
        acc = _solve_regular(H[n:, n:], g[:n] - H[n:, :n] @ v)
        return np.concatenate([v, acc])

    def energy(self, state):
        n = self.n_dof
        val, g = dual.gradient(self.generic, np.asarray(state, dtype=float))
        return float(g[n:] @ np.asarray(state)[n:]) - val

    def as_herglotz(self) -> HerglotzSystem:
        lag = self.lagrangian
        return HerglotzSystem(self.n_dof, lambda q, v, s, p: lag(q, v, p), 1.0, self.params,
                              name=self.name)


# ----------------------------------------------------------------------
# Legendre transform
# ----------------------------------------------------------------------

def legendre_velocity(sys: HerglotzSystem, q, p, s, guess=None, tol=1e-13, max_iter=60):
    """Solve ∂ℒ/∂q̇(q, v, S) = p for v by damped Newton."""
    n = sys.n_dof
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    v = np.zeros(n) if guess is None else np.asarray(guess, dtype=float).copy()

    def residual(v):
        _, g, H = dual.hessian(lambda w: sys.lagrangian(q, w, s, sys.params), v)
        return g - p, H

    F, J = residual(v)
    scale = max(1.0, float(np.abs(p).max()))
    for _ in range(max_iter):
        nf = float(np.abs(F).max())
        if nf <= tol * scale:
            return v
        step = _solve_regular(J, F)
        t = 1.0
        while True:
            vn = v - t * step
            try:
                Fn, Jn = residual(vn)
                if float(np.abs(Fn).max()) < nf or t < 1e-8:
                    break
            except DomainError:
                pass
            t *= 0.5
            if t < 1e-10:
                raise RegularityError("Legendre inversion: line search failed")
        v, F, J = vn, Fn, Jn
    raise RegularityError("Legendre inversion did not converge")


def legendre_to_contact(sys: HerglotzSystem, inverse: Optional[Callable] = None) -> ContactSystem:
    """ℋ(q, p, S) = p·q̇ − ℒ with p = ∂ℒ/∂q̇ inverted numerically.

    ``inverse(q, p, S, params)`` may supply a closed-form velocity. The
    value is stationary in q̇, so plugging a numerically exact q̇ into a
    dual evaluation yields exact first derivatives.
    """
    n = sys.n_dof

    def velocity(z, params):
        zf = np.array([dual.value(c) for c in z])
        q, p, s = zf[:n], zf[n:2 * n], zf[2 * n]
        if inverse is not None:
            return np.asarray(inverse(q, p, s, params), dtype=float)
        return legendre_velocity(sys, q, p, s)

    def ham(z, params):
        v = velocity(z, params)
        q, p, s = list(z[:n]), list(z[n:2 * n]), z[2 * n]
        pv = sum(pi * vi for pi, vi in zip(p, v))
        return pv - sys.lagrangian(q, list(v), s, params)

    def grad(z, params):
        v = velocity(z, params)
        y = np.concatenate([z[:n], v, [z[2 * n]]])
        _, g, _ = sys.derivatives(y)
        return np.concatenate([-g[:n], v, [-g[2 * n]]])

    names = tuple(f"q{i + 1}" for i in range(n)) + tuple(f"p{i + 1}" for i in range(n)) + ("S",)
    return ContactSystem(n, ham, grad, sys.degree, sys.params, None, names,
                         f"legendre({sys.name})")


def contact_to_herglotz_state(sys: HerglotzSystem, z) -> np.ndarray:
    """(q, p, S) ↦ (q, q̇, S) through the Legendre map."""
    n = sys.n_dof
    z = np.asarray(z, dtype=float)
    v = legendre_velocity(sys, z[:n], z[n:2 * n], z[2 * n])
    return np.concatenate([z[:n], v, [z[2 * n]]])


def herglotz_to_contact_state(sys: HerglotzSystem, state) -> np.ndarray:
    n = sys.n_dof
    state = np.asarray(state, dtype=float)
    _, g, _ = sys.derivatives(state)
    return np.concatenate([state[:n], g[n:2 * n], [state[2 * n]]])


# ----------------------------------------------------------------------
# Lagrangian scale reduction
# ----------------------------------------------------------------------

@dataclass
class BasicnessReport:
    degree_residual: float
    one_form_residual: float
    basic_residual: float

    def ok(self, tol=1e-6):
        return max(self.degree_residual, self.one_form_residual, self.basic_residual) < tol


def check_basic_symmetry(sys: LagrangianSystem, D: VectorField, Lambda, samples) -> BasicnessReport:
    """D(L) = ΛL, L_D θ_L = θ_L and D^q independent of q̇."""
    n = sys.n_dof
    deg = one = basic = 0.0
    for y in samples:
        y = np.asarray(y, dtype=float)
        L, g, H = dual.hessian(sys.generic, y)
        d = D(y)
        JD = D.jacobian(y)
        deg = max(deg, abs(float(g @ d) - Lambda * L) / max(1.0, abs(L)))
        theta = np.concatenate([g[n:], np.zeros(n)])
        dtheta = np.zeros((2 * n, 2 * n))
        dtheta[:, :n] = H[:, n:]
        lie = d @ dtheta + theta @ JD
        one = max(one, float(np.abs(lie - theta).max()) / max(1.0, float(np.abs(theta).max())))
        basic = max(basic, float(np.abs(JD[:n, n:]).max()))
    return BasicnessReport(deg, one, basic)


def lagrangian_scale_reduce(sys: LagrangianSystem, D: VectorField, rho: Callable, Lambda: float,
                            embed: Callable, embed_velocity: Callable | None = None,
                            samples=None, tol=1e-6) -> HerglotzSystem:
    """Herglotz system ℒ(q̄, q̄′, S) = −(L + ρ̇S)/ρ^Λ on the section ρ = 1.

    ``embed(q̄)`` must return a configuration with ρ = 1; the velocity is
    q̇ = (∂embed/∂q̄) q̄′ + α D̄(q) with α fixed by S = −θ_L(D)/ρ. Because
    ℒ is stationary in α, solving α to first order keeps the Hessian of
    ℒ exact. ``embed_velocity(q̄, q̄′)`` supplies the tangent part; the
    default uses the Jacobian at the current point, exact when ``embed`` is
    affine in q̄ (as for polar sections).
    """
    n = sys.n_dof
    m = n - 1
    if samples is not None:
        rep = check_basic_symmetry(sys, D, Lambda, samples)
        if not rep.ok(tol):
            raise ValidationError("symmetry is not a basic scaling symmetry of L", rep.__dict__)

    def dbar(q):
        y = list(q) + [0.0] * n
        return list(D.generic(y))[:n]

    def parts(qbar, qbar_dot, alpha, params):
        q = embed(qbar)
        db = dbar(q)
        if embed_velocity is not None:
            tang = list(embed_velocity(qbar, qbar_dot))
        else:
            E = _embed_jacobian(embed, qbar)
            tang = [sum(E[i][j] * qbar_dot[j] for j in range(m)) for i in range(n)]
        v = [alpha * db[i] + tang[i] for i in range(n)]
        return q, v, db

    def s_of_alpha(qbar, qbar_dot, alpha, params):
        q, v, db = parts(qbar, qbar_dot, alpha, params)
        y = np.array(list(q) + list(v), dtype=object)
        lv = _velocity_gradient(sys, y, params)
        return -sum(lv[i] * db[i] for i in range(n)) / rho(q)

    def solve_alpha(qbar, qbar_dot, s, params):
        qf = [dual.value(c) for c in qbar]
        vf = [dual.value(c) for c in qbar_dot]
        sf = dual.value(s)
        alpha = 0.0
        for _ in range(60):
            val, der = dual.gradient(
                lambda a: s_of_alpha(qf, vf, a[0], params) - sf, np.array([alpha]))
            if der[0] == 0:
                raise RegularityError("S does not determine the fibre velocity")
            step = val / der[0]
            alpha -= step
            if abs(step) <= 1e-15 * max(1.0, abs(alpha)):
                break
        c = der[0]
        # chord corrections propagate exact first and second derivatives
        a = alpha
        for _ in range(3):
            a = a - (s_of_alpha(qbar, qbar_dot, a, params) - s) / c
        return a

    def lag(qbar, qbar_dot, s, params):
        alpha = solve_alpha(qbar, qbar_dot, s, params)
        q, v, _ = parts(qbar, qbar_dot, alpha, params)
        r = rho(q)
        rho_dot = alpha * r  # ∇ρ·∂embed = 0 and D̄(ρ) = ρ on the section
        L = sys.lagrangian(list(q), v, params)
        return -(L + rho_dot * s) / dual.power(r, Lambda)

    return HerglotzSystem(m, lag, float(Lambda), sys.params, name=f"{sys.name}/reduced")


def _embed_jacobian(embed, qbar):
    """∂embed/∂q̄ as nested lists (entries may be duals)."""
    qf = np.array([dual.value(c) for c in qbar])
    _, J = dual.jacobian(embed, qf)
    return J.tolist()


def _velocity_gradient(sys: LagrangianSystem, y, params):
    """∂L/∂q̇ at a (possibly dual) state, exact to first order in the duals."""
    n = sys.n_dof
    yv = [dual.value(c) for c in y]
    _, g, H = dual.hessian(sys.generic, np.array(yv))
    out = []
    for i in range(n):
        val = g[n + i]
        # linearize around the float point: ∂L_v/∂y · (y − y₀)
        for j in range(2 * n):
            if isinstance(y[j], dual.Dual):
                val = val + H[n + i, j] * (y[j] - yv[j])  # linearization about y₀
        out.append(val)
    return out


# ----------------------------------------------------------------------
# lifted Lagrangians
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class LiftedLagrangian:
    system: LagrangianSystem
    base_n_dof: int
    terms: tuple
    degrees: tuple

    def recovered_couplings(self, state):
        """a_j = (Ẋ_j/L_j)^{1−1/Λ_j} / Λ_j."""
        n, k = self.base_n_dof, len(self.terms)
        state = np.asarray(state, dtype=float)
        q, x = state[:n], state[n:n + k]
        v, xd = state[n + k:2 * n + k], state[2 * n + k:]
        out = []
        for j, (Lj, lam) in enumerate(zip(self.terms, self.degrees)):
            lj = dual.value(Lj(q, v, self.system.params))
            out.append(dual.power(xd[j] / lj, 1.0 - 1.0 / lam) / lam)
        return np.array(out)

    def fibre_velocity(self, q, v, a):
        """Ẋ_j reproducing couplings a_j: Ẋ_j = L_j (Λ_j a_j)^{Λ_j/(Λ_j − 1)}."""
        out = []
        for Lj, lam, aj in zip(self.terms, self.degrees, a):
            lj = dual.value(Lj(q, v, self.system.params))
            out.append(lj * _real_root(lam * aj, lam / (lam - 1.0)))
        return np.array(out)


def _real_root(x, e):
    """x^e, using the real odd root for negative x when e = 1/(odd)."""
    if x >= 0:
        return x**e
    inv = 1.0 / e
    if abs(inv - round(inv)) < 1e-12 and int(round(inv)) % 2 == 1:
        return -((-x) ** e)
    return float(dual.power(x, e))


def lift_lagrangian(T: Callable, terms, degrees, n_dof: int, params=None,
                    name="lifted-lagrangian") -> LiftedLagrangian:
    """L̂ = T + Σ Ẋ_j (L_j/Ẋ_j)^{1/Λ_j} on Q × R^k."""
    k = len(terms)
    terms = tuple(terms)
    degrees = tuple(float(d) for d in degrees)

    def lag(qx, vx, prm):
        q, v = list(qx[:n_dof]), list(vx[:n_dof])
        xd = vx[n_dof:n_dof + k]
        total = T(q, v, prm)
        for j in range(k):
            lj = terms[j](q, v, prm)
            if degrees[j] == 1.0:
                total = total + lj
                continue
            total = total + xd[j] * dual.power(dual.div(lj, xd[j]), 1.0 / degrees[j])
        return total

    names = ([f"q{i + 1}" for i in range(n_dof)] + [f"X{j + 1}" for j in range(k)]
             + [f"v{i + 1}" for i in range(n_dof)] + [f"Xdot{j + 1}" for j in range(k)])
    system = LagrangianSystem(n_dof + k, lag, dict(params or {}), tuple(names), name)
    return LiftedLagrangian(system, n_dof, terms, degrees)

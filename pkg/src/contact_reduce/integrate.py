"""ODE drivers, time reparametrization and the trajectory comparison harness."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.integrate import DOP853, RK45
from scipy.interpolate import CubicHermiteSpline

from .core import ContactSystem, SymplecticSystem, lambda_vf, symplectic_vf
from .errors import ContractError, DomainError, NumericalError

METHODS = ("rk45-adaptive", "dop853-adaptive", "rk4-fixed", "stormer-verlet")
_SCIPY = {"rk45-adaptive": RK45, "dop853-adaptive": DOP853}


@dataclass(frozen=True)
class EventGuard:
    """Stop when ``func(x)`` falls below ``threshold``."""

    name: str
    func: Callable
    threshold: float = 1e-6
    terminal: bool = True

    def g(self, x):
        return float(self.func(x)) - self.threshold


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk45-adaptive"
    step: float = 1e-2
    rtol: float = 1e-9
    atol: float = 1e-10
    max_steps: int = 1_000_000
    max_step: float = np.inf
    refine: int = 1
    events: tuple = ()

    def __post_init__(self):
        if self.method not in METHODS:
            raise ContractError(f"unknown integrator {self.method!r}; choose from {METHODS}")
        if self.step <= 0 or self.rtol <= 0 or self.atol <= 0:
            raise ContractError("step and tolerances must be positive")
        if int(self.refine) < 1:
            raise ContractError("refine must be a positive integer")


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    names: tuple = ()
    tau: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)
    stop_reason: str = "span end"
    event: Optional[str] = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    @property
    def final(self):
        return self.states[-1]

    @property
    def dim(self):
        return self.states.shape[1]

    def spline(self):
        if len(self.t) < 2:
            raise ContractError("need at least two samples to interpolate")
        return CubicHermiteSpline(self.t, self.states, self.derivs, axis=0)

    def at(self, t):
        """Cubic Hermite interpolation using the stored derivatives."""
        return self.spline()(t)

    def add_diagnostic(self, name, func):
        self.diagnostics[name] = np.array([float(func(x)) for x in self.states])
        return self

    def to_csv(self, path, columns: Sequence[str] | None = None):
        """Write t (and τ) plus state and diagnostic columns with %.17g."""
        header = ["t"]
        cols = [self.t]
        if self.tau is not None:
            header.append("tau")
            cols.append(self.tau)
        names = list(self.names) or [f"x{i}" for i in range(self.dim)]
        header += names
        cols += [self.states[:, i] for i in range(self.dim)]
        for k, v in self.diagnostics.items():
            header.append(k)
            cols.append(v)
        if columns is not None:
            missing = [c for c in columns if c not in header]
            if missing:
                raise ContractError(f"unknown CSV column(s) {missing}; available: {header}")
            keep = [header.index(c) for c in ["t"] + [c for c in columns if c != "t"]]
            header = [header[i] for i in keep]
            cols = [cols[i] for i in keep]
        data = np.column_stack(cols)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in data:
                w.writerow(["%.17g" % v for v in row])


def as_rhs(provider):
    """Turn a system (or a plain callable) into an autonomous right-hand side."""
    if isinstance(provider, SymplecticSystem):
        return lambda x: symplectic_vf(provider, x), provider.names
    if isinstance(provider, ContactSystem):
        return lambda x: lambda_vf(provider, x), provider.names
    if hasattr(provider, "rhs"):
        return provider.rhs, tuple(getattr(provider, "names", ()))
    if isinstance(getattr(provider, "system", None), ContactSystem):
        return as_rhs(provider.system)
    if callable(provider):
        return provider, ()
    raise ContractError(f"cannot build a right-hand side from {provider!r}")


def _span(span):
    if np.isscalar(span):
        return 0.0, float(span)
    t0, t1 = (float(s) for s in span)
    return t0, t1


def _hermite_point(t0, t1, x0, x1, f0, f1, t):
    h = t1 - t0
    s = (t - t0) / h
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    return h00 * x0 + h10 * h * f0 + h01 * x1 + h11 * h * f1


def _bisect(g, ta, tb, tol=1e-10):
    """Locate a sign change of g (positive at ta, non-positive at tb)."""
    while tb - ta > tol:
        tm = 0.5 * (ta + tb)
        if g(tm) > 0:
            ta = tm
        else:
            tb = tm
    return tb


class _Recorder:
    def __init__(self, rhs, events):
        self.rhs = rhs
        self.events = events
        self.t, self.x, self.f = [], [], []
        self.gvals = None
        self.stop = None
        self.event = None

    def push(self, t, x, f=None):
        if f is None:
            f = self.rhs(x)
        self.t.append(t)
        self.x.append(np.array(x, dtype=float))
        self.f.append(np.array(f, dtype=float))

    def init_events(self, x):
        self.gvals = [ev.g(x) for ev in self.events]
        for ev, gv in zip(self.events, self.gvals):
            if gv <= 0 and ev.terminal:
                raise DomainError(f"initial point already violates event guard {ev.name!r}")

    def check_events(self, t_old, t_new, x_new, interp):
        """Return True if a terminal event fired inside (t_old, t_new]."""
        new = []
        for k, ev in enumerate(self.events):
            gv = ev.g(x_new)
            new.append(gv)
            if self.gvals[k] > 0 and gv <= 0 and ev.terminal:
                te = _bisect(lambda s: ev.g(interp(s)), t_old, t_new)
                xe = interp(te)
                self.push(te, xe)
                self.stop = "event"
                self.event = ev.name
                return True
        self.gvals = new
        return False


def integrate(provider, x0, span, config: IntegratorConfig | None = None,
              names: Sequence[str] | None = None) -> Trajectory:
    """Integrate an autonomous system over ``span`` (a final time or (t0, t1))."""
    config = config or IntegratorConfig()
    rhs, default_names = as_rhs(provider)
    x0 = np.asarray(x0, dtype=float)
    t0, t1 = _span(span)
    if t1 < t0:
        raise ContractError("span must be non-decreasing")
    if config.method == "stormer-verlet":
        if not (isinstance(provider, SymplecticSystem) and provider.separable):
            raise ContractError("stormer-verlet requires a SymplecticSystem declared separable")

    rec = _Recorder(rhs, config.events)
    rec.push(t0, x0)  # raises DomainError if x0 is inadmissible
    rec.init_events(x0)
    if t1 > t0:
        try:
            if config.method in _SCIPY:
                _run_scipy(rec, config, t0, t1)
            elif config.method == "rk4-fixed":
                _run_fixed(rec, config, t0, t1, _rk4_step)
            else:
                _run_fixed(rec, config, t0, t1, _verlet_stepper(provider))
        except DomainError as exc:
            rec.stop, rec.event = "event", f"guard: {exc}"
        except (NumericalError, FloatingPointError, OverflowError, ZeroDivisionError) as exc:
            rec.stop, rec.event = "numerical failure", str(exc)
    traj = Trajectory(
        t=np.array(rec.t), states=np.array(rec.x), derivs=np.array(rec.f),
        names=tuple(names or default_names),
        stop_reason=rec.stop or "span end", event=rec.event,
        meta={"method": config.method, "rtol": config.rtol, "atol": config.atol,
              "step": config.step, "system": getattr(provider, "name", "")},
    )
    return traj


def _run_scipy(rec, config, t0, t1):
    solver = _SCIPY[config.method](
        lambda t, y: rec.rhs(y), t0, rec.x[0], t1,
        rtol=config.rtol, atol=config.atol, max_step=config.max_step)
    steps = 0
    while solver.status == "running":
        if steps >= config.max_steps:
            rec.stop = "max steps"
            return
        msg = solver.step()
        steps += 1
        if solver.status == "failed":
            raise NumericalError(msg or "step size underflow")
        y = np.array(solver.y)
        if not np.all(np.isfinite(y)):
            raise NumericalError(f"non-finite state at t={solver.t}")
        t_old = rec.t[-1]
        dense = solver.dense_output() if rec.events or config.refine > 1 else None
        if rec.events and rec.check_events(t_old, solver.t, y, dense):
            return
        # extra output points from the solver's own interpolant
        for k in range(1, int(config.refine)):
            tk = t_old + (solver.t - t_old) * k / config.refine
            rec.push(tk, dense(tk))
        rec.push(solver.t, y)


def _rk4_step(rhs, x, h, f0):
    k1 = f0
    k2 = rhs(x + 0.5 * h * k1)
    k3 = rhs(x + 0.5 * h * k2)
    k4 = rhs(x + h * k3)
    return x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _verlet_stepper(sys):
    n = sys.n_dof

    def step(rhs, x, h, f0):
        q, p = x[:n], x[n:]
        p_half = p + 0.5 * h * f0[n:]          # ṗ = −∂H/∂q depends on q only
        q_new = q + h * rhs(np.concatenate([q, p_half]))[:n]
        p_new = p_half + 0.5 * h * rhs(np.concatenate([q_new, p_half]))[n:]
        return np.concatenate([q_new, p_new])

    return step


def _run_fixed(rec, config, t0, t1, stepper):
    n = max(1, int(round((t1 - t0) / config.step)))
    if n > config.max_steps:
        n_run, truncated = config.max_steps, True
    else:
        n_run, truncated = n, False
    h = (t1 - t0) / n
    for k in range(n_run):
        x, f = rec.x[-1], rec.f[-1]
        xn = stepper(rec.rhs, x, h, f)
        if not np.all(np.isfinite(xn)):
            raise NumericalError(f"non-finite state at step {k + 1}")
        tn = t0 + (k + 1) * h
        fn = rec.rhs(xn)
        if rec.events:
            ta = rec.t[-1]

            def interp(s, ta=ta, x=x, xn=xn, f=f, fn=fn, tn=tn):
                return _hermite_point(ta, tn, x, xn, f, fn, s)

            if rec.check_events(ta, tn, xn, interp):
                return
        rec.push(tn, xn, fn)
    if truncated:
        rec.stop = "max steps"


# ----------------------------------------------------------------------
# reparametrization and comparison
# ----------------------------------------------------------------------

def reparametrize(traj: Trajectory, rho: Callable, Lambda: float) -> Trajectory:
    """Fill ``tau`` with τ(t) = ∫ ρ^{Λ−1} dt (Simpson on Hermite midpoints)."""
    Lambda = float(Lambda)
    r = np.array([float(rho(x)) for x in traj.states])
    if np.any(r == 0) or (np.any(r > 0) and np.any(r < 0)):
        raise DomainError("scaling function vanishes or changes sign along the trajectory")
    w = np.abs(r) ** (Lambda - 1.0)
    t = traj.t
    tau = np.zeros_like(t)
    if len(t) > 1:
        h = np.diff(t)
        x0, x1 = traj.states[:-1], traj.states[1:]
        f0, f1 = traj.derivs[:-1], traj.derivs[1:]
        mid = 0.5 * (x0 + x1) + (h[:, None] / 8.0) * (f0 - f1)
        rm = np.abs(np.array([float(rho(x)) for x in mid]))
        wm = rm ** (Lambda - 1.0)
        tau[1:] = np.cumsum(h / 6.0 * (w[:-1] + 4.0 * wm + w[1:]))
    traj.tau = tau
    traj.diagnostics["dt_dtau"] = 1.0 / w
    traj.meta["reparam_degree"] = Lambda
    return traj


def integrate_reparametrized(provider, x0, span, rho: Callable, Lambda: float,
                             config: IntegratorConfig | None = None,
                             names: Sequence[str] | None = None) -> Trajectory:
    """Integrate with τ carried as an extra state, τ′ = |ρ|^{Λ−1}.

    Exact up to integrator tolerance; preferred over :func:`reparametrize`
    when ρ^{Λ−1} varies strongly within an adaptive step.
    """
    rhs, default_names = as_rhs(provider)
    Lambda = float(Lambda)
    x0 = np.asarray(x0, dtype=float)
    d = x0.size

    def aug(y):
        r = abs(float(rho(y[:d])))
        if r == 0.0:
            raise DomainError("scaling function vanishes along the trajectory")
        return np.concatenate([rhs(y[:d]), [r ** (Lambda - 1.0)]])

    config = config or IntegratorConfig()
    events = tuple(EventGuard(e.name, (lambda f: lambda y: f(y[:d]))(e.func), e.threshold, e.terminal)
                   for e in config.events)
    full = integrate(aug, np.concatenate([x0, [0.0]]), span,
                     IntegratorConfig(config.method, config.step, config.rtol, config.atol,
                                      config.max_steps, config.max_step, config.refine, events))
    traj = Trajectory(full.t, full.states[:, :d], full.derivs[:, :d],
                      tuple(names or default_names), tau=full.states[:, d].copy(),
                      stop_reason=full.stop_reason, event=full.event, meta=dict(full.meta))
    traj.diagnostics["dt_dtau"] = 1.0 / full.derivs[:, d]
    traj.meta["reparam_degree"] = Lambda
    return traj


@dataclass
class Comparison:
    sup_deviation: float
    profile: np.ndarray
    grid: np.ndarray
    deviation: np.ndarray
    up: np.ndarray
    down: np.ndarray
    initial_mismatch: float


def _unwrap_to(values, reference):
    v = np.unwrap(values)
    return v + 2 * np.pi * np.round((reference - v[0]) / (2 * np.pi))


def compare_reduced(traj_up: Trajectory, chart, traj_down: Trajectory,
                    angles: Sequence[int] = ()) -> Comparison:
    """Sup-norm deviation between a mapped upstairs curve and a reduced curve.

    ``chart`` maps an upstairs state to reduced coordinates (a callable or
    an object with a ``reduce`` method); ``angles`` lists reduced
    coordinates that live on the circle.
    """
    if traj_up.tau is None:
        raise ContractError("upstairs trajectory must be reparametrized first")
    to_reduced = chart.reduce if hasattr(chart, "reduce") else chart
    tau_up = traj_up.tau
    tau_down = traj_down.tau if traj_down.tau is not None else traj_down.t
    lo = max(tau_up[0], tau_down[0])
    hi = min(tau_up[-1], tau_down[-1])
    if not hi > lo:
        raise ContractError("τ ranges of the two trajectories do not overlap")
    grid = np.union1d(tau_up[(tau_up >= lo) & (tau_up <= hi)],
                      tau_down[(tau_down >= lo) & (tau_down <= hi)])

    t_of_tau = CubicHermiteSpline(tau_up, traj_up.t, traj_up.diagnostics["dt_dtau"])
    x_grid = traj_up.spline()(t_of_tau(grid))
    up = np.array([np.asarray(to_reduced(x), dtype=float) for x in x_grid])

    if traj_down.tau is not None:
        dtau_dt = np.gradient(traj_down.tau, traj_down.t)
        spl = CubicHermiteSpline(traj_down.tau, traj_down.states,
                                 traj_down.derivs / dtau_dt[:, None], axis=0)
    else:
        spl = traj_down.spline()
    down = spl(grid)
    for k in angles:
        down[:, k] = _unwrap_to(down[:, k], down[0, k])
        up[:, k] = _unwrap_to(up[:, k], down[0, k])
    dev = np.abs(up - down)
    return Comparison(
        sup_deviation=float(dev.max()), profile=dev.max(axis=0), grid=grid,
        deviation=dev.max(axis=1), up=up, down=down,
        initial_mismatch=float(np.abs(up[0] - down[0]).max()))


def first_integral_drift(traj: Trajectory, F: Callable) -> float:
    vals = np.array([float(F(x)) for x in traj.states])
    return float(np.max(np.abs(vals - vals[0])))


def arclength_resample(points: np.ndarray, n: int = 512) -> np.ndarray:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0:
        raise ContractError("curve has zero length")
    u = np.linspace(0.0, s[-1], n)
    return np.column_stack([np.interp(u, s, points[:, k]) for k in range(points.shape[1])])


def compare_unparametrized(a: np.ndarray, b: np.ndarray, n: int = 512) -> float:
    """Sup distance between two curves after resampling by arc length."""
    return float(np.abs(arclength_resample(a, n) - arclength_resample(b, n)).max())


def diagnostics_for(traj: Trajectory, funcs: Mapping[str, Callable]) -> Trajectory:
    for k, f in funcs.items():
        traj.add_diagnostic(k, f)
    return traj

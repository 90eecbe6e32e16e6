"""Scenario-driven command line: check | reduce | run | compare | sweep.

Scenarios are TOML files validated against ``data/scenario.schema.json``
(unknown keys are rejected). Exit codes: 0 pass, 1 check or comparison
failure, 2 usage or schema error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import itertools
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np
import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import systems
from .core import ContactSystem, SymplecticSystem, VectorField
from .errors import (ConfigError, ContactReduceError, ContractError, DomainError, NumericalError,
                     ParseError, ValidationError)
from .expr import parse
from .integrate import (EventGuard, IntegratorConfig, compare_reduced, integrate,
                        integrate_reparametrized)
from .reduction import (HAMILTONIAN_TOL, PULLBACK_TOL, PUSHFORWARD_TOL, ROUNDTRIP_TOL, AdaptedChart,
                        contact_reduce, parallel_check, reduce_expression)
from .scaling import (DEFAULT_TOL, ScalingFunction, ScalingSymmetry, check_scaling_symmetry,
                      closed_orbit, loop_action, system_samples)

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
THREADS_ENV = "CONTACT_REDUCE_THREADS"
DEFAULT_RHO_GUARD = 1e-6
DEFAULT_COMPARE_TOL = 1e-5
DEFAULT_PARALLEL_TOL = 1e-6
# dense-output points per step when comparing; Hermite interpolation
# between long adaptive steps otherwise dominates the deviation
DEFAULT_COMPARE_REFINE = 4


# ----------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------

def _schema():
    text = resources.files("contact_reduce").joinpath("data/scenario.schema.json").read_text()
    return json.loads(text)


def _locate(text, path):
    """Best-effort (line, column) of a key path inside TOML text."""
    lines = text.splitlines()
    section, start = None, 0
    keys = [str(p) for p in path if not isinstance(p, int)]
    if keys:
        section = keys[0]
        for i, ln in enumerate(lines):
            if ln.strip() in (f"[{section}]", f"[{section}.{keys[1]}]" if len(keys) > 1 else ""):
                start = i
                break
    target = keys[-1] if keys else None
    if target is not None:
        for i in range(start, len(lines)):
            col = lines[i].find(target)
            if col >= 0 and (lines[i].lstrip().startswith(target) or f"[{target}]" in lines[i]):
                return i + 1, col + 1
    return start + 1, 1


@dataclass
class ScenarioConfig:
    data: dict
    path: str = "<memory>"

    def section(self, name) -> dict:
        return self.data.get(name, {})

    @property
    def base_dir(self):
        return Path(self.path).parent if self.path != "<memory>" else Path(".")


def validate_config(data: dict, text: str = "", path="<memory>") -> ScenarioConfig:
    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = []
        for err in errors:
            where = list(err.absolute_path)
            if err.validator == "additionalProperties":
                extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
                where += extra[:1]
            loc = "/".join(str(p) for p in where) or "<root>"
            line, col = _locate(text, where) if text else (0, 0)
            msgs.append(f"{path}:{line}:{col}: {loc}: {err.message}")
        raise ConfigError("schema error\n" + "\n".join(msgs))
    return ScenarioConfig(data, path)


def load_config(path) -> ScenarioConfig:
    path = str(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: TOML syntax error: {exc}") from None
    return validate_config(data, text, path)


# ----------------------------------------------------------------------
# report
# ----------------------------------------------------------------------

@dataclass
class ReportRow:
    name: str
    value: float
    tolerance: Optional[float] = None
    passed: Optional[bool] = None


@dataclass
class RunReport:
    command: str
    rows: list = field(default_factory=list)
    stop_reasons: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    outputs: list = field(default_factory=list)

    def add(self, name, value, tolerance=None, passed=None):
        if passed is None and tolerance is not None:
            passed = bool(np.isfinite(value) and value <= tolerance)
        self.rows.append(ReportRow(name, float(value), tolerance, passed))

    @property
    def passed(self):
        return all(r.passed for r in self.rows if r.passed is not None)

    def to_text(self):
        out = [f"[{self.command}]"]
        for r in self.rows:
            flag = "" if r.passed is None else (" PASS" if r.passed else " FAIL")
            tol = "" if r.tolerance is None else f" (tol {r.tolerance:g})"
            out.append(f"  {r.name:<28} {r.value:.6e}{tol}{flag}")
        for s in self.stop_reasons:
            out.append(f"  stop: {s}")
        for n in self.notes:
            out.append(f"  note: {n}")
        for k, v in self.timings.items():
            out.append(f"  time {k}: {v:.3f}s")
        for p in self.outputs:
            out.append(f"  wrote {p}")
        verdict = "PASS" if self.passed else "FAIL"
        out.append(f"  verdict: {verdict}")
        return "\n".join(out)

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d


# ----------------------------------------------------------------------
# model assembly
# ----------------------------------------------------------------------

@dataclass
class Model:
    system: object
    names: tuple
    bundle: Optional[systems.SystemBundle] = None
    symmetry: Optional[ScalingSymmetry] = None
    reduction: Optional[systems.Reduction] = None
    reduction_error: Optional[Exception] = None
    params: dict = field(default_factory=dict)


def _numbers(d):
    return {k: float(v) for k, v in d.items() if isinstance(v, (int, float))}


def _inline_system(sec):
    coords, moms = list(sec["coordinates"]), list(sec["momenta"])
    if len(coords) != len(moms):
        raise ConfigError("system: coordinates and momenta must have equal length")
    params = dict(sec.get("parameters", {}))
    pnames = tuple(params)
    kind = sec.get("kind", "symplectic")
    n = len(coords)
    name = sec.get("name", "inline")
    if kind == "contact":
        names = tuple(coords + moms + ["S"])
        H = parse(sec["hamiltonian"], names, pnames)
        return ContactSystem(n, lambda z, p: H(list(z), p), None, float(sec.get("degree", 1.0)),
                             params, None, names, name), H
    if "degree" in sec:
        raise ConfigError("system.degree only applies to kind = 'contact'")
    names = tuple(coords + moms)
    H = parse(sec["hamiltonian"], names, pnames)
    guards = [parse(g, names, pnames) for g in sec.get("guards", [])]

    def guard(x, p):
        return all(g.evaluate(list(x), p) > 0 for g in guards)

    return SymplecticSystem(n, lambda x, p: H(list(x), p), None, params, guard if guards else None,
                            bool(sec.get("separable", False)), names, name), H


def _inline_reduction(system, H, D, scale, params):
    names = system.names
    pnames = tuple(params)
    if "rho" not in scale or "chart_forward" not in scale:
        return None
    rc, rm = list(scale["reduced_coordinates"]), list(scale["reduced_momenta"])
    if len(rc) != system.n_dof - 1 or len(rm) != system.n_dof - 1:
        raise ConfigError("scaling: reduced coordinates/momenta must have n_dof − 1 entries")
    chart_names = tuple(["rho", "S"] + rc + rm)
    fwd = [parse(t, names, pnames) for t in scale["chart_forward"]]
    inv = [parse(t, chart_names, pnames) for t in scale["chart_inverse"]]
    if len(fwd) != len(names) or len(inv) != len(names):
        raise ConfigError("scaling: chart_forward/chart_inverse must have one entry per phase coordinate")
    rho_expr = parse(scale["rho"], names, pnames)
    chart = AdaptedChart.from_expressions(fwd, inv, params, name="inline",
                                          angles=tuple(scale.get("angles", ())),
                                          reduced_names=tuple(rc + rm + ["S"]))
    rho = ScalingFunction(lambda x: rho_expr(list(x), params), D, "rho")
    n = int(scale.get("samples", 100))
    seed = int(scale.get("seed", 42))
    red = contact_reduce(system, D, rho, chart, n_samples=n, seed=seed)
    text_expr = reduce_expression(H, dict(zip(names, inv)), chart_names, D.degree)
    return systems.Reduction("inline", rho, chart, red, text_expr.text, None, (), dict(red.report))


def build_model(cfg: ScenarioConfig) -> Model:
    sec = cfg.section("system")
    scale = cfg.section("scaling")
    lift_on = bool(cfg.section("lift").get("enabled", False))
    if "bundle" in sec:
        try:
            bundle = systems.instantiate(sec["bundle"], sec.get("params", {}))
        except ValidationError:
            raise
        if lift_on:
            if bundle.lifted is None:
                raise ConfigError(f"bundle {bundle.id!r} has no lifted variant")
            D = bundle.lifted.symmetry
            system = bundle.lifted.system
            red = bundle.lifted_reduction
        else:
            system = bundle.system
            D = None
            if bundle.symmetries:
                wanted = scale.get("symmetry")
                pool = {d.name: d for d in bundle.symmetries}
                if wanted is not None and wanted not in pool:
                    raise ConfigError(f"bundle {bundle.id!r} has no symmetry {wanted!r}; "
                                      f"available: {sorted(pool)}")
                D = pool[wanted] if wanted else bundle.symmetries[0]
            red = None
            if bundle.reductions:
                red = bundle.reduction(scale.get("chart"))
        if D is not None and "degree" in scale and float(scale["degree"]) != D.degree:
            D = ScalingSymmetry(D.field, float(scale["degree"]), D.name)
        return Model(system, tuple(system.names), bundle, D, red, params=dict(bundle.params))

    system, H = _inline_system(sec)
    params = dict(sec.get("parameters", {}))
    if isinstance(system, ContactSystem):
        return Model(system, tuple(system.names), params=params)
    D = None
    if "field" in scale:
        if "degree" not in scale:
            raise ConfigError("scaling.degree is required with an inline field")
        field_exprs = [parse(t, system.names, tuple(params)) for t in scale["field"]]
        if len(field_exprs) != system.dim:
            raise ConfigError(f"scaling.field needs {system.dim} components")
        D = ScalingSymmetry(VectorField(lambda x: [e(list(x), params) for e in field_exprs], None, "D"),
                            float(scale["degree"]), scale.get("symmetry", "D"))
    model = Model(system, tuple(system.names), None, D, None, params=params)
    if D is not None:
        try:
            model.reduction = _inline_reduction(system, H, D, scale, params)
        except ValidationError as exc:
            model.reduction_error = exc
    return model


def integrator_config(cfg: ScenarioConfig, events=(), refine=None) -> IntegratorConfig:
    sec = dict(cfg.section("integrator"))
    if refine is not None:
        sec.setdefault("refine", refine)
    try:
        return IntegratorConfig(events=tuple(events), **sec)
    except (ContractError, TypeError) as exc:
        raise ConfigError(f"integrator: {exc}") from None


def _vector(names, initial, what):
    missing = [n for n in names if n not in initial]
    extra = [k for k in initial if k not in names]
    if missing or extra:
        raise ConfigError(f"{what}: initial conditions must name exactly {list(names)} "
                          f"(missing {missing}, unknown {extra})")
    return np.array([float(initial[n]) for n in names])


def _rho_events(model: Model, threshold):
    rho = None
    if model.reduction is not None:
        rho = model.reduction.rho
    elif model.bundle is not None and "rho" in model.bundle.extras:
        rho = model.bundle.extras["rho"]
    if rho is None or threshold <= 0:
        return ()
    return (EventGuard("rho", lambda x: abs(rho(x)), threshold),)


def _out_dir(cfg: ScenarioConfig, args) -> Path:
    if args is not None and getattr(args, "out", None):
        d = Path(args.out)
    else:
        d = Path(cfg.section("output").get("dir", "out"))
        if not d.is_absolute():
            d = cfg.base_dir / d
    d.mkdir(parents=True, exist_ok=True)
    return d


def _tolerance(args, default):
    if args is not None and getattr(args, "tol", None) is not None:
        return float(args.tol)
    return default


def _seed(cfg, args):
    if args is not None and getattr(args, "seed", None) is not None:
        return int(args.seed)
    return int(cfg.section("scaling").get("seed", 42))


PLOT_TEMPLATE = '''"""Plot the columns of {csv} (generated by contact-reduce)."""

import csv

import matplotlib.pyplot as plt

with open({csv!r}) as fh:
    rows = list(csv.DictReader(fh))

x = [float(r[{x!r}]) for r in rows]
fig, ax = plt.subplots()
for name in {cols!r}:
    ax.plot(x, [float(r[name]) for r in rows], label=name)
ax.set_xlabel({x!r})
ax.legend()
fig.savefig({png!r}, dpi=150)
'''


def write_plot_script(csv_path: Path, columns, x="t") -> Path:
    script = csv_path.with_suffix(".plot.py")
    script.write_text(PLOT_TEMPLATE.format(csv=csv_path.name, x=x, cols=list(columns),
                                           png=csv_path.with_suffix(".png").name))
    return script


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------

def cmd_check(cfg: ScenarioConfig, args=None) -> RunReport:
    model = build_model(cfg)
    rep = RunReport("check")
    if model.symmetry is None:
        raise ConfigError("check needs a scaling symmetry (bundle symmetry or [scaling] field)")
    scale = cfg.section("scaling")
    tol = _tolerance(args, float(scale.get("tolerance", DEFAULT_TOL)))
    n = int(scale.get("samples", 100))
    seed = _seed(cfg, args)
    t0 = time.perf_counter()
    if bool(cfg.section("lift").get("enabled", False)):
        from .lifted import lifted_samples
        samples = lifted_samples(model.bundle.lifted, model.reduction.chart, n, seed)
    else:
        accept = model.reduction.chart.in_domain if model.reduction is not None else None
        samples = system_samples(model.system, n, seed, accept=accept)
    sr = check_scaling_symmetry(model.system, model.symmetry, samples, tol)
    rep.timings["check"] = time.perf_counter() - t0
    for k, v in sr.residuals().items():
        rep.add(k, v, tol)
    rep.notes.append(f"symmetry {model.symmetry.name}, degree {model.symmetry.degree:g}, "
                     f"{sr.samples} samples (seed {seed}), {sr.skipped} skipped")
    return rep


def _reduced_document(cfg: ScenarioConfig, model: Model) -> dict:
    red = model.reduction
    chart = red.chart
    m = chart.reduced_dof
    rnames = list(chart.reduced_names)
    params = _numbers(red.reduced.system.params)
    doc = {
        "system": {
            "kind": "contact",
            "name": red.reduced.system.name or f"reduced/{red.name}",
            "hamiltonian": red.hamiltonian_text,
            "coordinates": rnames[:m],
            "momenta": rnames[m:2 * m],
            "parameters": params,
            "degree": float(red.reduced.degree),
        },
        "provenance": {
            "source": model.bundle.id if model.bundle else cfg.section("system").get("name", "inline"),
            "chart": red.name,
            "symmetry": model.symmetry.name if model.symmetry else "",
            "degree": float(red.reduced.degree),
        },
    }
    if model.bundle is None:
        doc["provenance"]["upstairs_hamiltonian"] = cfg.section("system")["hamiltonian"]
    if cfg.section("integrator"):
        doc["integrator"] = dict(cfg.section("integrator"))
    run = dict(cfg.section("run"))
    if run:
        run.pop("rho_guard", None)
        init = run.get("initial")
        if init:
            if run.get("space", "upstairs") == "upstairs":
                x0 = _vector(model.names, init, "run")
                z0 = chart.reduce(x0)
                run["initial"] = {n: float(v) for n, v in zip(rnames, z0)}
        run.pop("space", None)
        doc["run"] = run
    out = {k: v for k, v in cfg.section("output").items() if k not in ("reduced_file", "dir")}
    out["dir"] = "reduced_run"
    doc["output"] = out
    return doc


def cmd_reduce(cfg: ScenarioConfig, args=None) -> RunReport:
    t0 = time.perf_counter()
    model = build_model(cfg)
    rep = RunReport("reduce")
    if model.reduction_error is not None:
        err = model.reduction_error
        for k, v in err.details.items():
            rep.add(k, v, _reduce_tol(k))
        rep.notes.append(str(err))
        return rep
    if model.reduction is None:
        raise ConfigError("reduce needs a scaling function and an adapted chart")
    red = model.reduction
    for k, v in red.diagnostics.items():
        rep.add(k, v, _reduce_tol(k))
    rep.notes.append(f"H0 = {red.hamiltonian_text}")
    rep.notes.append(f"degree = {red.reduced.degree:g}, chart = {red.name}")
    doc = _reduced_document(cfg, model)
    out = _out_dir(cfg, args)
    target = out / cfg.section("output").get("reduced_file", "reduced.toml")
    with open(target, "wb") as fh:
        tomli_w.dump(doc, fh)
    validate_config(doc, path=str(target))
    rep.outputs.append(str(target))
    rep.timings["reduce"] = time.perf_counter() - t0
    return rep


def _reduce_tol(key):
    return {"chart_roundtrip": ROUNDTRIP_TOL, "chart_pushforward": PUSHFORWARD_TOL,
            "chart_pullback": PULLBACK_TOL, "scaling_function": PUSHFORWARD_TOL,
            "rho_matches_chart": PUSHFORWARD_TOL, "closed_form": HAMILTONIAN_TOL,
            "table": systems.TABLE_TOL, "text": 1e-12}.get(key)


def _run_target(cfg: ScenarioConfig, model: Model):
    """(provider, x0, names, events) for the [run] section."""
    run = cfg.section("run")
    if "initial" not in run:
        raise ConfigError("run.initial is required")
    init = run["initial"]
    if isinstance(model.system, ContactSystem):
        return model.system, _vector(model.names, init, "run"), model.names, ()
    if run.get("space", "upstairs") == "reduced":
        if model.reduction is None:
            raise ConfigError("run.space = 'reduced' needs a reduction")
        red = model.reduction
        rnames = tuple(red.chart.reduced_names)
        if set(init) == set(model.names):
            z0 = red.chart.reduce(_vector(model.names, init, "run"))
        else:
            z0 = _vector(rnames, init, "run")
        return red.reduced.system, z0, rnames, ()
    events = _rho_events(model, float(run.get("rho_guard", DEFAULT_RHO_GUARD)))
    return model.system, _vector(model.names, init, "run"), model.names, events


def _execute_run(cfg: ScenarioConfig, model: Model, out: Path, stem="trajectory"):
    provider, x0, names, events = _run_target(cfg, model)
    span = float(cfg.section("run").get("span", 0.0))
    traj = integrate(provider, x0, span, integrator_config(cfg, events), names=names)
    outsec = cfg.section("output")
    csv_path = out / (outsec.get("csv", f"{stem}.csv") if stem == "trajectory" else f"{stem}.csv")
    traj.to_csv(csv_path, outsec.get("columns"))
    extra = []
    if outsec.get("plot_script", False):
        cols = outsec.get("columns") or list(names)
        extra.append(write_plot_script(csv_path, cols))
    return traj, csv_path, extra


def _stop_status(traj):
    if traj.stop_reason == "numerical failure":
        return EXIT_NUMERIC
    return EXIT_PASS


def cmd_run(cfg: ScenarioConfig, args=None) -> RunReport:
    model = build_model(cfg)
    out = _out_dir(cfg, args)
    rep = RunReport("run")
    t0 = time.perf_counter()
    traj, csv_path, extra = _execute_run(cfg, model, out)
    rep.timings["integrate"] = time.perf_counter() - t0
    rep.add("rows", len(traj))
    rep.add("final_time", traj.t[-1])
    rep.stop_reasons.append(traj.stop_reason + (f" ({traj.event})" if traj.event else ""))
    if traj.stop_reason == "numerical failure":
        rep.rows.append(ReportRow("numerical_failure", 1.0, None, False))
    rep.outputs += [str(csv_path)] + [str(p) for p in extra]
    return rep


def _compare_trajectory(cfg, model, tol, out=None, stem="compare"):
    if model.reduction is None:
        raise ConfigError("compare needs a reduction (bundle chart or inline chart)")
    red = model.reduction
    run = cfg.section("run")
    if "initial" not in run or "span" not in run:
        raise ConfigError("compare needs run.initial (upstairs) and run.span")
    x0 = _vector(model.names, run["initial"], "run")
    if not red.chart.in_domain(x0):
        raise ConfigError("run.initial lies outside the chart domain")
    degree = model.symmetry.degree if model.symmetry is not None else red.reduced.degree
    events = _rho_events(model, float(run.get("rho_guard", DEFAULT_RHO_GUARD)))
    icfg = integrator_config(cfg, events, DEFAULT_COMPARE_REFINE)
    up = integrate_reparametrized(model.system, x0, float(run["span"]), red.rho, degree, icfg,
                                  names=model.names)
    reduced = red.reduced.system
    if reduced.degree != degree:
        reduced = replace(reduced, degree=degree)
    z0 = red.chart.reduce(x0)
    down = integrate(reduced, z0, float(up.tau[-1]), integrator_config(cfg, (), DEFAULT_COMPARE_REFINE),
                     names=red.chart.reduced_names)
    cmp_ = compare_reduced(up, red.chart, down, red.chart.angles)
    if out is not None:
        up.to_csv(out / f"{stem}_upstairs.csv")
        down.to_csv(out / f"{stem}_reduced.csv")
    return cmp_, up, down


def cmd_compare(cfg: ScenarioConfig, args=None) -> RunReport:
    model = build_model(cfg)
    sec = cfg.section("compare")
    mode = sec.get("mode", "trajectory")
    rep = RunReport("compare")
    out = _out_dir(cfg, args)
    t0 = time.perf_counter()
    if mode == "parallel":
        if model.bundle is None or "against" not in sec:
            raise ConfigError("parallel mode needs a bundle and compare.against")
        tol = _tolerance(args, float(sec.get("tolerance", DEFAULT_PARALLEL_TOL)))
        a = model.reduction
        b = model.bundle.reduction(sec["against"])
        scale = cfg.section("scaling")

        def both(x):
            return a.chart.in_domain(x) and b.chart.in_domain(x)

        samples = system_samples(model.system, int(scale.get("samples", 100)), _seed(cfg, args),
                                 accept=both)
        worst = max(parallel_check(a.reduced, b.reduced, x).residual for x in samples)
        rep.add(f"parallel_{a.name}_{b.name}", worst, tol)
        rep.notes.append(f"{len(samples)} samples; expected ratio (rho_b/rho_a)^(1-Lambda)")
    else:
        tol = _tolerance(args, float(sec.get("tolerance", DEFAULT_COMPARE_TOL)))
        cmp_, up, down = _compare_trajectory(cfg, model, tol, out)
        rep.add("sup_deviation", cmp_.sup_deviation, tol)
        rep.add("initial_mismatch", cmp_.initial_mismatch)
        rep.stop_reasons += [f"upstairs: {up.stop_reason}", f"reduced: {down.stop_reason}"]
        if up.stop_reason == "numerical failure" or down.stop_reason == "numerical failure":
            rep.rows.append(ReportRow("numerical_failure", 1.0, None, False))
        np.savetxt(out / "deviation.csv", np.column_stack([cmp_.grid, cmp_.deviation]),
                   fmt="%.17g", delimiter=",", header="tau,deviation", comments="")
        rep.outputs += [str(out / "deviation.csv")]
    rep.timings["compare"] = time.perf_counter() - t0
    return rep


def _set_path(data, dotted, value):
    keys = dotted.split(".")
    cur = data
    for k in keys[:-1]:
        cur = cur.setdefault(k, {})
    cur[keys[-1]] = value


def _sweep_point(cfg, index, point, quantity, out):
    data = copy.deepcopy(cfg.data)
    data.pop("sweep", None)
    for k, v in point.items():
        _set_path(data, k, v)
    row = {"index": index, **point}
    try:
        sub = validate_config(data, path=f"{cfg.path}#{index}")
        model = build_model(sub)
        if quantity == "loop_action":
            x0 = _vector(model.names, sub.section("run")["initial"], "run")
            orb = closed_orbit(model.system, x0, float(sub.section("run")["span"]),
                               integrator_config(sub), slack=1.0)
            orb.to_csv(out / f"point_{index:03d}.csv")
            row.update(status="ok", stop_reason=orb.stop_reason,
                       loop_action=loop_action(model.system, orb))
        elif quantity == "sup_deviation":
            cmp_, up, _ = _compare_trajectory(sub, model, None)
            up.to_csv(out / f"point_{index:03d}.csv")
            row.update(status="ok", stop_reason=up.stop_reason, sup_deviation=cmp_.sup_deviation)
        else:
            traj, _, _ = _execute_run(sub, model, out, stem=f"point_{index:03d}")
            status = "event" if traj.stop_reason == "event" else (
                "numerical failure" if traj.stop_reason == "numerical failure" else "ok")
            row.update(status=status, stop_reason=traj.stop_reason + (
                f" ({traj.event})" if traj.event else ""), final_time=float(traj.t[-1]))
            row.update({f"final_{n}": float(v) for n, v in zip(traj.names, traj.final)})
    except (ContactReduceError, ArithmeticError, ValueError) as exc:
        row.update(status="error", stop_reason=f"{type(exc).__name__}: {exc}")
    return row


def worker_count(n_jobs):
    cap = os.environ.get(THREADS_ENV)
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = max(1, int(cap))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {cap!r}") from None
    return max(1, min(limit, n_jobs))


def cmd_sweep(cfg: ScenarioConfig, args=None) -> RunReport:
    sec = cfg.section("sweep")
    if not sec:
        raise ConfigError("sweep needs a [sweep] section")
    grid = sec["grid"]
    quantity = sec.get("quantity", "final_state")
    keys = list(grid)
    points = [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]
    out = _out_dir(cfg, args)
    rep = RunReport("sweep")
    t0 = time.perf_counter()
    with ThreadPoolExecutor(max_workers=worker_count(len(points))) as pool:
        rows = list(pool.map(lambda ip: _sweep_point(cfg, ip[0], ip[1], quantity, out),
                             enumerate(points)))
    rep.timings["sweep"] = time.perf_counter() - t0
    columns = []
    for r in rows:
        for k in r:
            if k not in columns:
                columns.append(k)
    summary = out / "summary.csv"
    with open(summary, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for r in rows:
            vals = []
            for c in columns:
                v = r.get(c, "")
                vals.append("%.17g" % v if isinstance(v, float) else str(v).replace(",", ";"))
            fh.write(",".join(vals) + "\n")
    counts = {}
    for r in rows:
        counts[r["status"]] = counts.get(r["status"], 0) + 1
    for k, v in sorted(counts.items()):
        rep.add(f"points_{k.replace(' ', '_')}", v)
    errors = counts.get("error", 0) + counts.get("numerical failure", 0)
    rep.rows.append(ReportRow("failed_points", float(errors), 0.0, errors == 0))
    rep.outputs.append(str(summary))
    rep.notes.append(f"{len(points)} points, quantity {quantity}")
    return rep


COMMANDS = {"check": cmd_check, "reduce": cmd_reduce, "run": cmd_run, "compare": cmd_compare,
            "sweep": cmd_sweep}


# ----------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="scenario TOML file")
    common.add_argument("--out", help="output directory (overrides output.dir)")
    common.add_argument("--seed", type=int, help="sampling seed (overrides scaling.seed)")
    common.add_argument("--tol", type=float, help="pass/fail tolerance override")
    common.add_argument("-q", "--quiet", action="store_true", help="suppress the report")
    parser = argparse.ArgumentParser(prog="contact-reduce",
                                     description="Contact reduction by scaling symmetries.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"check": "certify a scaling symmetry", "reduce": "emit the reduced system",
             "run": "integrate a scenario to CSV", "compare": "upstairs vs reduced dynamics",
             "sweep": "run a parameter grid"}
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    try:
        cfg = load_config(args.config)
        report = COMMANDS[args.command](cfg, args)
    except (ConfigError, ParseError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        for k, v in exc.details.items():
            print(f"  {k} = {v}", file=sys.stderr)
        return EXIT_FAIL
    except (NumericalError, DomainError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if not args.quiet:
        print(report.to_text())
    numeric = any(r.name == "numerical_failure" for r in report.rows)
    if numeric:
        print("numerical failure: " + "; ".join(report.stop_reasons), file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

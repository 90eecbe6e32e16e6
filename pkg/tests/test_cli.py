import csv
from pathlib import Path

import numpy as np
import pytest

from contact_reduce.cli import (EXIT_FAIL, EXIT_NUMERIC, EXIT_PASS, EXIT_USAGE, build_model,
                                integrator_config, load_config, main, worker_count)
from contact_reduce.integrate import IntegratorConfig, integrate
from contact_reduce.systems import instantiate

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def write(tmp_path, text, name="s.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def run(cmd, path, out, *extra):
    return main([cmd, "--config", str(path), "--out", str(out), "-q", *extra])


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float) if len(rows) > 1 else np.zeros((0, len(rows[0])))


KEPLER_RK4 = """
[system]
bundle = "kepler"

[integrator]
method = "rk4-fixed"
step = 0.01

[run]
span = {span}
initial = {{ q1 = 1.0, q2 = 0.0, p1 = 0.0, p2 = 1.0 }}
"""


def test_check_passes(tmp_path):
    assert run("check", SCENARIOS / "kepler_check.toml", tmp_path) == EXIT_PASS


def test_check_wrong_degree_fails(tmp_path, capsys):
    assert main(["check", "--config", str(SCENARIOS / "kepler_wrong_degree.toml"),
                 "--out", str(tmp_path)]) == EXIT_FAIL
    assert "FAIL" in capsys.readouterr().out


@pytest.mark.parametrize("bid,extra", [
    ("oscillator2d", "params = { k = 2.0 }"),
    ("kepler_hooke", ""),
    ("laurent", ""),
    ("flrw", ""),
])
def test_check_lifted_and_other_bundles(tmp_path, bid, extra):
    lift = "" if bid == "oscillator2d" else "[lift]\nenabled = true\n"
    path = write(tmp_path, f'[system]\nbundle = "{bid}"\n{extra}\n{lift}[scaling]\nsamples = 20\n')
    assert run("check", path, tmp_path) == EXIT_PASS


def test_run_rk4_row_count(tmp_path):
    path = write(tmp_path, KEPLER_RK4.format(span=2 * np.pi))
    assert run("run", path, tmp_path) == EXIT_PASS
    header, data = read_csv(tmp_path / "trajectory.csv")
    assert header == ["t", "q1", "q2", "p1", "p2"]
    assert len(data) == 629
    assert np.abs(data[-1, 1:] - [1, 0, 0, 1]).max() < 1e-8


def test_run_zero_span(tmp_path):
    path = write(tmp_path, KEPLER_RK4.format(span=0.0))
    assert run("run", path, tmp_path) == EXIT_PASS
    _, data = read_csv(tmp_path / "trajectory.csv")
    assert data.shape == (1, 5)


def test_run_columns_and_plot(tmp_path):
    text = KEPLER_RK4.format(span=1.0) + '\n[output]\ncolumns = ["q1", "p2"]\nplot_script = true\n'
    path = write(tmp_path, text)
    assert run("run", path, tmp_path) == EXIT_PASS
    header, _ = read_csv(tmp_path / "trajectory.csv")
    assert header == ["t", "q1", "p2"]
    assert list(tmp_path.glob("*.py"))


def test_compare_ellipse(tmp_path):
    assert run("compare", SCENARIOS / "kepler_ellipse.toml", tmp_path) == EXIT_PASS
    _, dev = read_csv(tmp_path / "deviation.csv")
    assert dev[:, 1].max() < 1e-5


def test_compare_wrong_degree_fails(tmp_path):
    text = (SCENARIOS / "kepler_ellipse.toml").read_text().replace(
        '[scaling]\nchart = "rho"', '[scaling]\nchart = "rho"\ndegree = -1.0')
    text = text.replace("span = 20.0", "span = 3.0")
    path = write(tmp_path, text)
    assert run("compare", path, tmp_path) == EXIT_FAIL


def test_compare_parallel(tmp_path):
    assert run("compare", SCENARIOS / "kepler_parallel.toml", tmp_path) == EXIT_PASS


def test_inline_scenario(tmp_path):
    path = SCENARIOS / "inline_kepler.toml"
    for cmd in ("check", "compare", "reduce"):
        assert run(cmd, path, tmp_path) == EXIT_PASS


def test_reduce_round_trip(tmp_path):
    text = """
[system]
bundle = "kepler"

[scaling]
chart = "rho"

[integrator]
method = "rk4-fixed"
step = 0.01

[run]
span = 2.0
initial = { q1 = 1.0, q2 = 0.2, p1 = 0.1, p2 = 1.1 }
"""
    path = write(tmp_path, text)
    assert run("reduce", path, tmp_path) == EXIT_PASS
    reduced = tmp_path / "reduced.toml"
    assert reduced.exists()
    cfg = load_config(reduced)
    assert cfg.section("provenance")["chart"] == "rho"
    assert cfg.section("system")["degree"] == -2.0

    out = tmp_path / "rerun"
    out.mkdir()
    assert run("run", reduced, out) == EXIT_PASS
    header, data = read_csv(out / "trajectory.csv")
    assert header == ["t", "theta", "pbar", "S"]

    # bit-for-bit against an in-process integration of the same document
    model = build_model(cfg)
    z0 = [cfg.section("run")["initial"][n] for n in model.names]
    ref = integrate(model.system, z0, 2.0, integrator_config(cfg))
    assert np.array_equal(data[:, 1:], ref.states)

    # and close to the closed-form reduced system
    red = instantiate("kepler").reduction("rho")
    closed = integrate(red.reduced, red.chart.reduce([1.0, 0.2, 0.1, 1.1]), 2.0,
                       IntegratorConfig(method="rk4-fixed", step=0.01))
    assert np.abs(closed.states - data[:, 1:]).max() < 1e-10


SWEEP = """
[system]
bundle = "kepler"

[run]
span = 3.0
rho_guard = 0.05
initial = { q1 = 1.0, q2 = 0.0, p1 = 0.0, p2 = 1.0 }

[sweep]
grid = { "run.initial.p2" = [0.0, 0.8, 1.0], "run.initial.p1" = [0.0, 0.1, -0.1] }
"""


def test_sweep_grid_with_collision(tmp_path):
    path = write(tmp_path, SWEEP)
    assert run("sweep", path, tmp_path) == EXIT_PASS
    with open(tmp_path / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 9
    radial = [r for r in rows if float(r["run.initial.p2"]) == 0.0]
    assert all(r["status"] == "event" for r in radial)
    assert all("rho" in r["stop_reason"] for r in radial)
    assert all(r["status"] == "ok" for r in rows if float(r["run.initial.p2"]) == 1.0)
    assert len(list(tmp_path.glob("point_*.csv"))) == 9


def test_sweep_loop_action(tmp_path):
    assert run("sweep", SCENARIOS / "kepler_loop_sweep.toml", tmp_path) == EXIT_PASS
    with open(tmp_path / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    got = sorted(float(r["loop_action"]) for r in rows)
    want = 3 * np.pi * np.sqrt([1.0, 2.0, 4.0])
    np.testing.assert_allclose(got, want, rtol=1e-6)


def test_sweep_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv("CONTACT_REDUCE_THREADS", "1")
    assert worker_count(9) == 1
    path = write(tmp_path, SWEEP)
    assert run("sweep", path, tmp_path) == EXIT_PASS
    monkeypatch.setenv("CONTACT_REDUCE_THREADS", "many")
    assert run("sweep", path, tmp_path) == EXIT_USAGE
    monkeypatch.delenv("CONTACT_REDUCE_THREADS")
    assert worker_count(3) <= 3


def test_schema_error_exit(tmp_path, capsys):
    path = write(tmp_path, '[system]\nbundle = "kepler"\nbogus = 1\n', "bad1.toml")
    assert run("check", path, tmp_path) == EXIT_USAGE
    err = capsys.readouterr().err
    assert "bad1.toml:3" in err and "bogus" in err


def test_toml_error_exit(tmp_path, capsys):
    path = write(tmp_path, '[system\nbundle = "kepler"\n')
    assert run("check", path, tmp_path) == EXIT_USAGE
    assert "error" in capsys.readouterr().err


def test_expression_error_exit(tmp_path):
    text = """
[system]
hamiltonian = "p^2/2 - 1/"
coordinates = ["q"]
momenta = ["p"]

[run]
span = 1.0
initial = { q = 1.0, p = 0.0 }
"""
    assert run("run", write(tmp_path, text), tmp_path) == EXIT_USAGE


def test_unknown_bundle_parameter(tmp_path):
    path = write(tmp_path, '[system]\nbundle = "kepler"\nparams = { mu = 2.0 }\n')
    assert run("check", path, tmp_path) == EXIT_USAGE


def test_argparse_errors():
    assert main(["check"]) == EXIT_USAGE
    assert main(["frobnicate", "--config", "x.toml"]) == EXIT_USAGE


def test_missing_file(tmp_path):
    assert run("check", tmp_path / "nope.toml", tmp_path) == EXIT_USAGE


def test_numerical_failure_exit(tmp_path, capsys):
    # adaptive radial fall into the singularity without a guard: the step size collapses
    text = """
[system]
hamiltonian = "p^2/2 - 1/q"
coordinates = ["q"]
momenta = ["p"]

[run]
span = 5.0
initial = { q = 1.0, p = 0.0 }
"""
    assert run("run", write(tmp_path, text), tmp_path) == EXIT_NUMERIC
    assert "numerical failure" in capsys.readouterr().err

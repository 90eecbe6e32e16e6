import numpy as np
import pytest

from contact_reduce.core import lambda_vf
from contact_reduce.errors import ConfigError
from contact_reduce.expr import parse
from contact_reduce.integrate import IntegratorConfig, integrate, integrate_reparametrized
from contact_reduce.scaling import kepler_period, system_samples
from contact_reduce.systems import (BUNDLE_IDS, KEPLER_TABLES, instantiate, kepler_fixed_points,
                                    reference_scenarios, resolve_params, two_body_from_kepler)

TIGHT = IntegratorConfig(method="dop853-adaptive", rtol=1e-12, atol=1e-13)


@pytest.fixture(scope="module")
def kepler():
    return instantiate("kepler")


@pytest.mark.parametrize("chart", ["rho", "kappa", "G", "J"])
def test_table_forms(kepler, chart):
    red = kepler.reduction(chart)
    assert red.table is KEPLER_TABLES[chart]
    pts = system_samples(kepler.system, 100, 11, accept=red.chart.in_domain)
    worst = max(red.table.residual(red.reduced, red.chart.reduce(x)) for x in pts)
    assert worst < 1e-10


@pytest.mark.parametrize("chart", ["rho", "kappa", "G", "J"])
def test_closed_text_matches(kepler, chart):
    red = kepler.reduction(chart)
    e = parse(red.hamiltonian_text, ("qbar", "pbar", "S"))
    pts = system_samples(kepler.system, 20, 5, accept=red.chart.in_domain)
    for x in pts:
        z = red.chart.reduce(x)
        assert e.evaluate(z) == pytest.approx(red.reduced.hamiltonian(z), rel=1e-12, abs=1e-12)


def test_fixed_points(kepler):
    red = kepler.reduction("rho").reduced
    for fp in kepler_fixed_points():
        v = lambda_vf(red.system, fp["z"])
        assert np.abs(v[list(fp["components"])]).max() < 1e-12


def test_two_body_identification():
    b = instantiate("nbody_blowup", {"n": 2, "d": 2})
    k = instantiate("kepler")
    X0 = np.array([1.0, 0.2, 0.1, 1.1])
    span = 5.0
    kt = integrate(k.system, X0, span * 2**-0.25, TIGHT)
    bt = integrate(b.system, two_body_from_kepler(X0), span, TIGHT)
    assert b.system.value(two_body_from_kepler(X0)) == pytest.approx(2**-0.5 * k.system.value(X0))
    np.testing.assert_allclose(bt.final, two_body_from_kepler(kt.final), atol=1e-8)


def test_blowup_matches_reparametrized_flow():
    b = instantiate("nbody_blowup", {"n": 3, "d": 2})
    blow = b.extras["blowup"]
    rho = b.extras["rho"]
    x0 = np.array([1.0, 0.0, -0.5, 0.9, -0.4, -0.8, 0.1, 0.3, -0.2, 0.1, 0.05, -0.3])
    up = integrate_reparametrized(b.system, x0, 0.5, rho, -2.0, TIGHT)
    down = integrate(blow.rhs, np.array(blow.from_phase(x0)), up.tau[-1], TIGHT)
    np.testing.assert_allclose(down.final, blow.from_phase(up.final), atol=1e-8)
    # ℋ = −ρ²H
    for x in up.states[::10]:
        assert blow.hamiltonian(blow.from_phase(x)) == pytest.approx(
            -rho(x) ** 2 * b.system.value(x), abs=1e-10)


def test_blowup_zero_level_preserved():
    blow = instantiate("nbody_blowup", {"n": 2, "d": 2}).extras["blowup"]
    s = np.array([1.0, 0.0, -1.0, 0.0]) / np.sqrt(2.0)
    y = np.array([0.3, 0.5, -0.3, -0.5])
    y *= np.sqrt(2 * blow.potential(s)) / np.linalg.norm(y)
    z0 = np.concatenate([s, y])
    assert abs(blow.hamiltonian(z0)) < 1e-14
    # ℋ′ = νℋ: the zero level is invariant but repelling, so keep the horizon short
    traj = integrate(blow.rhs, z0, 8.0, TIGHT)
    h = np.array([blow.hamiltonian(z) for z in traj.states])
    assert np.abs(h).max() < 1e-7
    # the flow stays on the unit sphere in s and continues past the collision
    assert np.abs(np.linalg.norm(traj.states[:, :4], axis=1) - 1).max() < 1e-8
    assert traj.stop_reason == "span end"


def test_blowup_energy_law(rng):
    from contact_reduce import dual
    blow = instantiate("nbody_blowup", {"n": 3, "d": 2}).extras["blowup"]
    for _ in range(20):
        s = rng.normal(size=6)
        s /= np.linalg.norm(s)
        z = np.concatenate([s, rng.normal(size=6)])
        _, g = dual.gradient(blow.hamiltonian, z)
        assert g @ blow.rhs(z) == pytest.approx(blow.nu(z) * blow.hamiltonian(z), abs=1e-9)


def test_dziobek_constant(kepler):
    red = kepler.reduction("G")
    x0 = np.array([1.0, 0.2, 0.1, 1.1])
    E = kepler.system.value(x0)
    up = integrate_reparametrized(kepler.system, x0, 10 * kepler_period(E), red.rho, -2.0, TIGHT)
    down = integrate(red.reduced, red.chart.reduce(x0), up.tau[-1], TIGHT)
    dz = np.array([red.reduced.hamiltonian(z) for z in down.states])
    assert np.abs(dz - dz[0]).max() < 1e-8
    G = x0[0] * x0[3] - x0[1] * x0[2]
    assert dz[0] == pytest.approx(-G * G * E, rel=1e-12)


def test_resolve_params():
    assert resolve_params("kepler_hooke") == {"mu": 1.0, "k": 1.0}
    assert resolve_params("oscillator2d", {"k": 2})["k"] == 2
    with pytest.raises(ConfigError):
        resolve_params("oscillator2d")
    with pytest.raises(ConfigError):
        resolve_params("kepler", {"mu": 2})
    with pytest.raises(ConfigError):
        resolve_params("nope")
    with pytest.raises(ConfigError):
        instantiate("nbody_blowup", {"n": 1, "d": 2})


def test_bundle_cache():
    assert instantiate("oscillator2d", {"k": 1.0}) is instantiate("oscillator2d", {"k": 1.0})


@pytest.mark.parametrize("bid", BUNDLE_IDS)
def test_reference_scenarios(bid):
    scen = reference_scenarios(bid)
    assert scen and all("name" in s and "expect" in s for s in scen)


def test_kepler_collision_scenario(kepler):
    sc = {s["name"]: s for s in reference_scenarios("kepler")}["collision"]
    red = kepler.reduction("rho")
    cfg = IntegratorConfig(method="dop853-adaptive", rtol=1e-13, atol=1e-15)
    traj = integrate(red.reduced, sc["initial"], sc["span"], cfg)
    w = np.array([red.table.variables(z) for z in traj.states])
    target = sc["expect"]["enters"]
    # a saddle on ℋ₀ = 0: the orbit gets close, then round-off pushes it along J̃
    dist = np.hypot(w[:, 0] - target["Jt"], w[:, 1] - target["Gt"])
    i = int(np.argmax(dist < sc["expect"]["ball"]))
    assert dist[i] < sc["expect"]["ball"]
    # dℋ₀/dτ = J̃ℋ₀ amplifies round-off by about e^{√2 τ}
    h = np.array([red.reduced.hamiltonian(z) for z in traj.states[:i + 1]])
    assert np.abs(h).max() < 1e-5


def test_unknown_reduction(kepler):
    with pytest.raises(ConfigError):
        kepler.reduction("nope")
    with pytest.raises(ConfigError):
        instantiate("nbody_blowup", {"n": 2, "d": 2}).reduction()

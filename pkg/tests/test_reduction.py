import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contact_reduce.core import ContactSystem, lambda_vf, symplectic_vf
from contact_reduce.errors import DomainError, ValidationError
from contact_reduce.integrate import (IntegratorConfig, compare_reduced, integrate,
                                      integrate_reparametrized)
from contact_reduce.reduction import (ReducedContactSystem, contact_reduce, lift_coordinates, normalization_factor,
                                      normalized_reduction, parallel_check, scaling_change_factor,
                                      symplectic_lift)
from contact_reduce.scaling import ScalingFunction, system_samples
from contact_reduce.systems import (EIGHT_PI, instantiate, kepler_rho_chart, kepler_symmetry,
                                    kepler_system, oscillator_symmetry)
from contact_reduce import dual

CFG = IntegratorConfig(method="dop853-adaptive", rtol=1e-11, atol=1e-12, refine=4)
ELLIPSE = np.array([1.0, 0.2, 0.1, 1.1])


@pytest.fixture(scope="module")
def kepler():
    return instantiate("kepler")


def rho_reduction(bundle):
    return bundle.reduction("rho").reduced


def test_kepler_reduced_hamiltonian(kepler):
    red = kepler.reduction("rho")
    assert red.hamiltonian_text == "1 - (S^2/4 + pbar^2)/2"
    for x in system_samples(kepler.system, 50, 3):
        z = red.chart.reduce(x)
        jt, gt = -z[2] / 2, -z[1]
        assert red.reduced.hamiltonian(z) == pytest.approx(1 - (jt**2 + gt**2) / 2, abs=1e-12)


def test_kepler_contact_form_pullback(kepler):
    # λ = −p·dq − 2q·dp (i_Dω for D_K) equals ρ(dS − p̄ dθ) on tangent vectors
    chart = kepler.reduction("rho").chart
    rng = np.random.default_rng(0)
    for x in system_samples(kepler.system, 20, 5):
        for v in rng.normal(size=(4, 4)):
            lam = -x[2:] @ v[:2] - 2 * x[:2] @ v[2:]
            y, J = dual.jacobian(chart.forward, x)
            dy = J @ v
            assert y[0] * (dy[1] - y[3] * dy[2]) == pytest.approx(lam, abs=1e-10 * max(1, abs(lam)))


def test_oscillator_reduced_hamiltonian():
    b = instantiate("oscillator2d", {"k": 2.5})
    red = b.reduction("rho")
    for x in system_samples(b.system, 50, 4):
        z = red.chart.reduce(x)
        assert red.reduced.hamiltonian(z) == pytest.approx(-2 * z[2] ** 2 - (2.5 + z[1] ** 2) / 2, abs=1e-10)


def test_flrw_flat_reduced_hamiltonian():
    b = instantiate("flrw")
    red = b.reduction("v")
    for x in system_samples(b.system, 50, 4, accept=red.chart.in_domain):
        z = red.chart.reduce(x)
        q, pbar, s = z
        # S = −Π and the matter momentum is −p̄ in the reduced chart
        expected = 3 * s**2 / EIGHT_PI - (q**2 + pbar**2) / 2
        assert red.reduced.hamiltonian(z) == pytest.approx(expected, abs=1e-10)


def test_reduced_hamiltonian_equals_minus_h_over_rho_power(kepler):
    for red in kepler.reductions.values():
        for x in system_samples(kepler.system, 30, 6, accept=red.chart.in_domain):
            lhs = red.reduced.hamiltonian(red.chart.reduce(x))
            rhs = -kepler.system.value(x) / abs(red.rho(x)) ** -2
            assert lhs == pytest.approx(rhs, rel=1e-8, abs=1e-8)


def test_mismatched_symmetry_refused():
    sys = kepler_system()
    rho = ScalingFunction(lambda x: dual.power(x[0] ** 2 + x[1] ** 2, 0.25))
    with pytest.raises(ValidationError) as info:
        contact_reduce(sys, oscillator_symmetry(), rho, kepler_rho_chart(), n_samples=20)
    assert info.value.details["chart_pushforward"] > 1e-8


@pytest.mark.parametrize("name, x0, span", [
    ("rho", ELLIPSE, 9.0), ("kappa", ELLIPSE, 9.0), ("G", ELLIPSE, 9.0),
    ("J", np.array([1.0, 0.0, 0.5, 1.5]), 9.0),
])
def test_projection_equivalence_kepler(kepler, name, x0, span):
    red = kepler.reduction(name)
    up = integrate_reparametrized(kepler.system, x0, span, red.rho, -2.0, CFG)
    down = integrate(red.reduced, red.chart.reduce(x0), up.tau[-1], CFG)
    assert compare_reduced(up, red.chart, down, red.chart.angles).sup_deviation < 1e-5


@pytest.mark.parametrize("bid, params, x0, span", [
    ("oscillator2d", {"k": 1.0}, [1.0, 0.0, 0.3, 0.8], 2 * np.pi),
    ("flrw", {}, [1.0, 1.0, 0.3, 0.5], 2.0),
])
def test_projection_equivalence_other_bundles(bid, params, x0, span):
    b = instantiate(bid, params)
    red = b.reduction()
    up = integrate_reparametrized(b.system, x0, span, red.rho, red.reduced.degree, CFG)
    down = integrate(red.reduced, red.chart.reduce(x0), up.tau[-1], CFG)
    assert compare_reduced(up, red.chart, down, red.chart.angles).sup_deviation < 1e-5


def test_h0_evolution_law(kepler):
    red = rho_reduction(kepler)
    traj = integrate(red, [0.3, -0.9, 0.5], 4.0, CFG)
    h = np.array([red.hamiltonian(z) for z in traj.states])
    for z, f, hz in zip(traj.states, traj.derivs, h):
        assert red.system.grad(z) @ f == pytest.approx(2 * hz * red.system.grad(z)[2], abs=1e-12)
    # specialization: dℋ₀/dτ = J̃ℋ₀ with J̃ = −S/2
    dh = np.array([red.system.grad(z) @ f for z, f in zip(traj.states, traj.derivs)])
    np.testing.assert_allclose(dh, -traj.states[:, 2] / 2 * h, atol=1e-12)


@settings(max_examples=20)
@given(st.floats(0, 2 * np.pi), st.floats(-1.4, 1.4))
def test_zero_level_invariant(theta, pbar):
    red = rho_reduction(instantiate("kepler"))
    s = 2 * np.sqrt(2 - pbar**2)  # S > 0 side of ℋ₀ = 0
    z0 = np.array([theta, pbar, s])
    assert abs(red.hamiltonian(z0)) < 1e-10
    traj = integrate(red, z0, 5.0, CFG)
    assert max(abs(red.hamiltonian(z)) for z in traj.states) < 1e-7


def test_normalized_reduction_kepler(kepler):
    red = rho_reduction(kepler)
    norm = normalized_reduction(red)
    z = np.array([0.0, -1.0, 0.0])
    assert norm.value(z) == pytest.approx(-np.sqrt(2))
    rng = np.random.default_rng(2)
    for z in rng.uniform(-1, 1, size=(50, 3)):
        h0 = red.hamiltonian(z)
        if abs(h0) < 1e-3:
            continue
        a, b = lambda_vf(norm, z), red.vf(z)
        np.testing.assert_allclose(a, normalization_factor(h0, -2.0) * b, atol=1e-12)
        cos = a @ b / np.linalg.norm(a) / np.linalg.norm(b)
        assert abs(abs(cos) - 1) < 1e-6


def test_normalized_reduction_degree_one():
    red = instantiate("oscillator2d", {"k": 1.0}).reduction("rho").reduced
    norm = normalized_reduction(red)
    z = np.array([0.3, 0.2, 0.1])
    assert norm.value(z) == pytest.approx(-abs(red.hamiltonian(z)))
    assert abs(normalization_factor(red.hamiltonian(z), 1.0)) == pytest.approx(1.0)


def test_normalized_reduction_excludes_zero_level(kepler):
    norm = normalized_reduction(rho_reduction(kepler))
    with pytest.raises(DomainError, match="Σ₀"):
        norm.value([0.0, -np.sqrt(2), 0.0])


def test_scaling_change_factor_examples():
    rho = lambda x: np.hypot(x[0], x[1]) ** 0.5
    pq = lambda x: x[0] * x[2] + x[1] * x[3]
    x = np.array([1.0, 0.0, 1.0, 1.0])
    assert scaling_change_factor(rho, rho, -2.0, x) == 1.0
    assert scaling_change_factor(rho, pq, -2.0, x) == pytest.approx(1.0)
    assert scaling_change_factor(rho, pq, -2.0, [4.0, 0.0, 1.0, 0.0]) == pytest.approx(8.0)
    assert scaling_change_factor(rho, lambda x: 2 * rho(x), -2.0, x) == pytest.approx(8.0)
    with pytest.raises(DomainError):
        scaling_change_factor(rho, pq, -2.0, [1.0, 0.0, 0.0, 1.0])


def test_parallel_reductions(kepler):
    names = list(kepler.reductions)
    both = lambda x: all(kepler.reduction(n).chart.in_domain(x) for n in names)
    for x in system_samples(kepler.system, 30, 9, accept=both):
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                chk = parallel_check(kepler.reduction(a).reduced, kepler.reduction(b).reduced, x)
                assert chk.residual < 1e-6
                assert chk.ratio == pytest.approx(chk.factor, rel=1e-6)


def test_symplectic_lift_round_trip(kepler):
    red = kepler.reduction("rho")
    lifted = symplectic_lift(red.reduced)
    for x in system_samples(kepler.system, 100, 10):
        X = lift_coordinates(red.chart, x)
        assert lifted.value(X) == pytest.approx(kepler.system.value(x), rel=1e-8, abs=1e-8)


def test_symplectic_lift_of_constant_is_reeb():
    const = ContactSystem(1, lambda z, p: -1.0 + 0.0 * z[2], degree=1.0)
    lifted = symplectic_lift(ReducedContactSystem(const))
    X = np.array([0.4, -0.3, 2.0, 0.7])
    assert lifted.value(X) == pytest.approx(2.0)
    np.testing.assert_allclose(symplectic_vf(lifted, X), [1, 0, 0, 0], atol=1e-15)


def test_symplectic_lift_oscillator():
    b = instantiate("oscillator2d", {"k": 1.7})
    red = b.reduction("rho")
    lifted = symplectic_lift(red.reduced)
    for x in system_samples(b.system, 30, 11):
        assert lifted.value(lift_coordinates(red.chart, x)) == pytest.approx(b.system.value(x), rel=1e-8)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contact_reduce.core import SymplecticSystem, VectorField, hamiltonian_field
from contact_reduce.errors import ContractError
from contact_reduce.integrate import IntegratorConfig, integrate
from contact_reduce.scaling import (ScalingFunction, ScalingSymmetry, check_dynamical_similarity,
                                    check_scaling_function, check_scaling_symmetry, closed_orbit,
                                    kepler_period, local_action_solution, loop_action, system_samples)
from contact_reduce.systems import (kepler_symmetry, kepler_system, oscillator_symmetry,
                                    oscillator_system)
from contact_reduce import dual

TIGHT = IntegratorConfig(method="dop853-adaptive", rtol=1e-12, atol=1e-13)


@pytest.fixture(scope="module")
def kepler_samples():
    return system_samples(kepler_system(), 100, 42)


def kepler_orbit(energy, ecc=0.3):
    """Pericentre data of a Kepler ellipse with the given energy and eccentricity."""
    a = -1.0 / (2.0 * energy)
    r = a * (1 - ecc)
    return np.array([r, 0.0, 0.0, np.sqrt((1 + ecc) / r)])


def angular_momentum_field():
    G = SymplecticSystem(2, lambda x, p: x[0] * x[3] - x[1] * x[2])
    return hamiltonian_field(G)


def test_similarity_of_field_with_itself(kepler_samples):
    X = hamiltonian_field(kepler_system())
    res = check_dynamical_similarity(X, X, kepler_samples)
    assert res.residual == 0.0
    np.testing.assert_array_equal(res.f, 0.0)


def test_kepler_similarity_factor(kepler_samples):
    X = hamiltonian_field(kepler_system())
    res = check_dynamical_similarity(X, kepler_symmetry().field, kepler_samples)
    assert res.residual < 1e-8
    np.testing.assert_allclose(res.f, -3.0, atol=1e-8)


def test_dilation_of_translation_flow_is_a_similarity():
    # [q·∂q, ∂q1] = −∂q1: a similarity with f = −1
    X = hamiltonian_field(SymplecticSystem(2, lambda x, p: x[2]))
    Y = VectorField(lambda x: [x[0], x[1], 0.0 * x[2], 0.0 * x[3]], name="q d_q")
    res = check_dynamical_similarity(X, Y, [[1.0, 0.5, 0.2, 0.1], [2.0, -1.0, 0.0, 3.0]])
    assert res.residual == 0.0
    np.testing.assert_array_equal(res.f, -1.0)


def test_non_similarity_detected():
    X = hamiltonian_field(SymplecticSystem(1, lambda x, p: 0.5 * (x[0] ** 2 + x[1] ** 2)))
    Y = VectorField(lambda x: [x[0] * x[1], 0.0 * x[1]], name="qp d_q")
    assert check_dynamical_similarity(X, Y, [[1.0, 0.5], [2.0, -1.0]]).residual > 0.1


def test_zero_field_samples_are_skipped():
    X = hamiltonian_field(SymplecticSystem(1, lambda x, p: 0.5 * (x[0] ** 2 + x[1] ** 2)))
    res = check_dynamical_similarity(X, X, [[0.0, 0.0], [1.0, 0.0]])
    assert res.skipped == [0]


def test_kepler_certification(kepler_samples):
    rep = check_scaling_symmetry(kepler_system(), kepler_symmetry(), kepler_samples)
    assert rep.verdict
    assert max(rep.residuals().values()) < 1e-8


def test_oscillator_certification():
    sys = oscillator_system(1.3)
    rep = check_scaling_symmetry(sys, oscillator_symmetry(), system_samples(sys, 100, 1))
    assert max(rep.residuals().values()) < 1e-8


def test_wrong_kepler_symmetry(kepler_samples):
    wrong = ScalingSymmetry.from_function(lambda x: [x[0], x[1], 0.0 * x[2], 0.0 * x[3]], -2.0)
    rep = check_scaling_symmetry(kepler_system(), wrong, kepler_samples)
    assert rep.degree_residual > 0.1
    assert not rep.verdict


def test_kepler_scaling_functions(kepler_samples):
    D = kepler_symmetry()
    good = [lambda x: dual.power(x[0] ** 2 + x[1] ** 2, 0.25),
            lambda x: 1.0 / dual.sqrt(x[2] ** 2 + x[3] ** 2),
            lambda x: x[0] * x[3] - x[1] * x[2],
            lambda x: x[0] * x[2] + x[1] * x[3]]
    for f in good:
        assert check_scaling_function(D, ScalingFunction(f, D), kepler_samples) < 1e-9
    bad = ScalingFunction(lambda x: dual.sqrt(x[0] ** 2 + x[1] ** 2), D)
    x = kepler_samples[0]
    assert check_scaling_function(D, bad, [x]) == pytest.approx(np.hypot(x[0], x[1]))


@settings(max_examples=25)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 10_000))
def test_adding_first_integral_fields_keeps_certificate(c_g, c_h, seed):
    sys = kepler_system()
    D = kepler_symmetry()
    Y = VectorField(lambda x: c_g * angular_momentum_field()(x) + c_h * hamiltonian_field(sys)(x),
                    lambda x: c_g * angular_momentum_field().jacobian(x)
                    + c_h * hamiltonian_field(sys).jacobian(x))
    rep = check_scaling_symmetry(sys, D.plus(Y), system_samples(sys, 20, seed))
    assert max(rep.residuals().values()) < 1e-6


def test_local_action_momentum_hamiltonian():
    sys = SymplecticSystem(1, lambda x, p: x[1])
    traj = local_action_solution(sys, [0.0, 1.0], 2.0)
    np.testing.assert_allclose(traj.states[:, -1], 0.0, atol=1e-14)


def test_local_action_oscillator_bounded():
    sys = oscillator_system(1.0)
    traj = local_action_solution(sys, [1.0, 0.0, 0.0, 1.0], 4 * np.pi, TIGHT)
    assert np.max(np.abs(traj.states[:, -1])) < 1e-9


def test_kepler_circular_action_is_three_pi():
    orb = closed_orbit(kepler_system(), [1.0, 0.0, 0.0, 1.0], 2 * np.pi, TIGHT)
    assert orb.t[-1] == pytest.approx(2 * np.pi, rel=1e-9)
    assert loop_action(kepler_system(), orb) == pytest.approx(3 * np.pi, rel=1e-8)


def test_loop_action_quadrature_path_agrees():
    sys = kepler_system()
    traj = integrate(sys, [1.0, 0.0, 0.0, 1.0], 2 * np.pi,
                     IntegratorConfig(method="rk4-fixed", step=2 * np.pi / 2000))
    assert loop_action(sys, traj) == pytest.approx(3 * np.pi, rel=1e-8)


def test_open_trajectory_rejected():
    sys = kepler_system()
    traj = integrate(sys, [1.0, 0.0, 0.0, 1.0], 1.0)
    with pytest.raises(ContractError, match="gap"):
        loop_action(sys, traj)


@settings(max_examples=6)
@given(st.lists(st.floats(-0.95, -1 / 16), min_size=3, max_size=3, unique=True))
def test_loop_action_strictly_monotone_in_energy(energies):
    energies = sorted(energies)
    if min(np.diff(energies)) < 1e-3:
        energies = [-0.9, -0.5, -0.1]
    sys = kepler_system()
    actions = [loop_action(sys, closed_orbit(sys, kepler_orbit(e), kepler_period(e), TIGHT))
               for e in energies]
    assert np.all(np.diff(actions) > 0)
    np.testing.assert_allclose(actions, 3 * np.pi * np.sqrt(-0.5 / np.array(energies)), rtol=1e-6)

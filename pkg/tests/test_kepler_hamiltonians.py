import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kepler_euler.chart_geometry import conformal_metric, stereo_chart
from kepler_euler.cotangent_lift import reeb_field
from kepler_euler.dynamics import (IntegratorConfig, circular_state, direct_field, integrate,
                                   integrate_regularized, state_on_level, unit_covector_residual)
from kepler_euler.errors import CollisionSingularity, EnergyBelowPotential, EnergyDriftExceeded
from kepler_euler.exterior_calculus import ScalarField
from kepler_euler.kepler_hamiltonians import (Hamiltonian, HamiltonianLabel, PhasePoint,
                                              hamiltonian_vector_field, kepler_hamiltonian,
                                              kepler_potential, mechanical_contact_check,
                                              regularized_K, reparametrize_check,
                                              switch_matrix, switch_state, symplectic_matrix,
                                              symplectic_switch)
from tests.oracles import kepler_gradient

H = kepler_hamiltonian()


@pytest.mark.parametrize("q, p, val", [((1, 0), (0, 1), -0.5), ((2, 0), (0, 0), -0.5),
                                       ((1, 0), (0, math.sqrt(2)), 0.0)])
def test_kepler_values(q, p, val):
    assert abs(H.at(PhasePoint(q, p)) - val) < 1e-15


def test_collision_guard():
    with pytest.raises(CollisionSingularity):
        H.at(PhasePoint((0.0, 0.0), (1.0, 0.0)))


def test_regularized_values():
    assert abs(regularized_K(-0.5).at(PhasePoint((1, 0), (0, 1))) - 0.5) < 1e-15
    assert regularized_K(0.0).at(PhasePoint((0, 0), (3.0, -1.0))) == 0.0


@given(st.floats(-2, 2), st.integers(0, 10**6))
def test_regularized_is_dual_norm(c, seed):
    r = np.random.default_rng(seed)
    z = r.normal(size=4)
    if c > 0 and z[2:] @ z[2:] - 2 * c < 1e-3:
        z[2:] *= 3 * math.sqrt(c) / np.linalg.norm(z[2:])
    # g = lam^2 delta at x = -p with lam = 2 / (|x|^2 - 2c); covector y = q
    lam = 2.0 / (z[2:] @ z[2:] - 2 * c)
    expected = 0.5 * (z[:2] @ z[:2]) / lam**2
    assert abs(regularized_K(c).eval(z) - expected) < 1e-12 * max(1.0, abs(expected))


def test_switch():
    out = symplectic_switch(PhasePoint((1, 0), (0, 1)))
    assert np.array_equal(out.q, [0, 1]) and np.array_equal(out.p, [-1, 0])
    z = np.random.default_rng(0).normal(size=(10, 4))
    w = z
    for _ in range(4):
        w = switch_state(w)
    assert np.array_equal(w, z)
    S, W = switch_matrix(), symplectic_matrix()
    assert np.max(np.abs(S.T @ W @ S - W)) < 1e-12


def test_hamiltonian_vector_field_examples():
    const = Hamiltonian(lambda z: 0.0 * z[0] + 2.0, HamiltonianLabel.CUSTOM)
    assert np.max(np.abs(hamiltonian_vector_field(const).eval(np.ones((3, 4))))) == 0.0
    X = hamiltonian_vector_field(H).eval(np.array([1.0, 0.0, 0.0, 1.0]))
    assert np.allclose(X, [0, 1, -1, 0], atol=1e-15)


@given(st.integers(0, 10**6))
def test_hamiltonian_field_matches_hand_gradient(seed):
    z = np.random.default_rng(seed).normal(size=4)
    z[:2] += 0.5 * np.sign(z[:2])
    dq, dp = kepler_gradient(z[:2], z[2:])
    X = hamiltonian_vector_field(H).eval(z)
    assert np.allclose(X, np.r_[dp, -dq], rtol=1e-12, atol=1e-12)


@given(st.integers(0, 10**6), st.floats(-3, 3))
def test_hamiltonian_field_linear(seed, a):
    z = np.random.default_rng(seed).normal(size=(5, 4)) + 2.0
    K = regularized_K(-0.5)
    comb = Hamiltonian(lambda w: a * H.fn(w) + K.fn(w), HamiltonianLabel.CUSTOM)
    lhs = hamiltonian_vector_field(comb).eval(z)
    rhs = a * hamiltonian_vector_field(H).eval(z) + hamiltonian_vector_field(K).eval(z)
    assert np.allclose(lhs, rhs, atol=1e-10)


def test_K0_in_bundle_coordinates():
    X = reeb_field(0.0).eval(np.array([math.sqrt(2.0), 0.0, math.pi / 2]))
    assert np.allclose(X, [0.0, 1.0, math.sqrt(2.0)], atol=1e-14)


def test_reparametrize_identity_and_squared():
    cfg = IntegratorConfig()
    traj = integrate(direct_field(), circular_state().state, 2 * math.pi, cfg)
    one = reparametrize_check(H, lambda z: 1.0 + 0.0 * z[0], -0.5, 1.0, traj)
    assert one.details["reparametrized_trace"]["max_residual"] < 1e-8
    rep = reparametrize_check(H, lambda z: (z[0] ** 2 + z[1] ** 2) ** 0.5, -0.5, 1.0, traj)
    assert rep.passed
    assert rep.details["reparametrized_trace"]["max_residual"] < 1e-6
    assert rep.details["squared_shift_energy"]["details"]["target"] == 0.125
    assert rep.details["squared_shift_energy"]["max_residual"] < 1e-9


def test_reparametrize_eccentric():
    cfg = IntegratorConfig()
    z0 = state_on_level(-0.5, (1.5, 0.0), (0.2, 1.0))
    traj = integrate(direct_field(), z0.state, 6.0, cfg)
    rep = reparametrize_check(H, lambda z: (z[0] ** 2 + z[1] ** 2) ** 0.5, -0.5, 0.7, traj)
    assert rep.passed, rep.to_dict()


def test_reparametrize_rejects_off_level():
    traj = integrate(direct_field(), circular_state().state, 1.0)
    with pytest.raises(EnergyDriftExceeded):
        reparametrize_check(H, lambda z: 1.0, -0.4, 1.0, traj)


def test_mechanical_free_particle():
    U = lambda q: 0.0 * q[0]
    rep = mechanical_contact_check(U, None, 0.5, qs=np.random.default_rng(0).normal(size=(200, 2)))
    assert rep.passed
    assert abs(rep.details["min_kinetic"] - 0.5) < 1e-15
    # alpha(X_H) = |p|^2 = 2 x kinetic energy
    assert abs(rep.details["min_alpha_XH"] - 1.0) < 1e-12
    assert rep.details["alpha_minus_twice_kinetic"] < 1e-12


def test_mechanical_kepler_annulus():
    rep = mechanical_contact_check(kepler_potential, None, 0.3)
    assert rep.passed
    assert abs(rep.details["max_potential"] + 0.2) < 1e-15
    assert abs(rep.details["min_kinetic"] - 0.5) < 1e-12
    with pytest.raises(EnergyBelowPotential):
        mechanical_contact_check(kepler_potential, None, -2.5)


def test_mechanical_curved_metric():
    g = conformal_metric(-0.5)
    U = ScalarField(g.chart, lambda q: 0.1 * (q[0] ** 2 + q[1] ** 2))
    qs = np.random.default_rng(1).uniform(-1, 1, (100, 2))
    rep = mechanical_contact_check(U, g, 1.0, qs=qs)
    assert rep.passed and rep.details["alpha_minus_twice_kinetic"] < 1e-12


@pytest.mark.parametrize("c", [-0.5, 0.3])
def test_energy_conservation(c):
    z0 = state_on_level(c, (1.2, 0.3), (-0.2, 1.0))
    traj = integrate(direct_field(), z0.state, 5.0)
    assert np.max(np.abs(H.eval(traj.states) - c)) < 1e-8
    reg = integrate_regularized(c, z0, 10.0)
    assert unit_covector_residual(reg) < 1e-10


def test_regularized_flow_from_bundle_point():
    traj = integrate_regularized(-2.0, (stereo_chart(-2.0), [0.5, -0.4, 1.0]), 3.0)
    assert unit_covector_residual(traj) < 1e-10

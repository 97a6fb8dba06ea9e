import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kepler_euler import autodiff as ad
from kepler_euler.chart_geometry import (MetricField, conformal_metric, euclidean_chart,
                                         euclidean_metric)
from kepler_euler.correspondence import (ActionKind, GroupAction, beltrami_report,
                                         beltrami_to_contact, circle_action, construct_J,
                                         custom_action, cyclic_action, form_invariance_residual,
                                         group_law_residual, haar_average_metric, j_invariants,
                                         kepler_invariance_report, kepler_symmetry_action,
                                         metric_invariance_residual, reeb_to_metric,
                                         reeb_to_metric_report, rotation_action)
from kepler_euler.cotangent_lift import contact_volume, lift_metric, liouville_form, reeb_field
from kepler_euler.errors import (DegenerateTwoForm, NotBeltrami, NotInvariant, NotReebLike,
                                 QuadratureTooCoarse, VanishingField)
from kepler_euler.exterior_calculus import (KForm, VectorField, VolumeForm, contact_check, curl,
                                            divergence, flat, form_residual, one_form,
                                            vector_residual)
from tests.helpers import bundle_samples
from tests.oracles import abc_field

E3 = euclidean_chart(3)
E2 = euclidean_chart(2)


def diag_metric(chart, d):
    return MetricField(chart, lambda p: [[d[i] if i == j else 0.0 for j in range(3)] for i in range(3)])


def kepler_setup(c):
    g = conformal_metric(c)
    return reeb_field(c), liouville_form(g), lift_metric(g)


# group actions -------------------------------------------------------------------


def test_weights_must_be_normalized():
    with pytest.raises(ValueError):
        GroupAction(ActionKind.CUSTOM, E2, lambda s, p: p, ((0.0, 0.3), (1.0, 0.3)))
    act = kepler_symmetry_action(-0.5)
    assert abs(sum(w for _, w in act.quadrature) - 1.0) < 1e-14


def test_kepler_action_examples():
    act = kepler_symmetry_action(-0.5)
    p = np.array([[0.3, -0.2, 1.1]])
    assert np.allclose(act.apply(0.0, p), p)
    assert np.allclose(act.apply(math.pi / 2, [[1.0, 0.0, 0.0]]), [[0.0, 1.0, math.pi / 2]], atol=1e-15)
    pts = act.sample(20)
    assert group_law_residual(act, pts, [(0.3, 1.2), (2.0, 5.5)]) < 1e-10


@pytest.mark.parametrize("c", [-2.0, -0.5, 0.0, 0.3, 1.0])
def test_kepler_invariance(c):
    rep = kepler_invariance_report(c, nodes=16)
    assert rep.passed and rep.max_residual < 1e-9


# averaging -------------------------------------------------------------------------


def test_average_of_invariant_metric_is_fixed():
    X, alpha, g = kepler_setup(-0.5)
    act = kepler_symmetry_action(-0.5, 16)
    pts = act.sample(20)
    avg = haar_average_metric(g, act)
    assert np.max(np.abs(avg.eval(pts) - g.eval(pts))) < 1e-12


def test_average_rotation_analytic():
    eps = 0.3
    g = MetricField(E2, lambda p: [[1.0 + eps * p[0] ** 2, 0.0 * p[0]], [0.0 * p[0], 1.0 + 0.0 * p[0]]])
    act = rotation_action(E2, 16)
    pts = np.random.default_rng(0).normal(size=(30, 2))
    avg = haar_average_metric(g, act, probe=pts)
    # rotational mean of (u.p)^2 u u^T is (|p|^2 I + 2 p p^T) / 8
    exp = np.eye(2) + eps * (np.einsum("ni,ni->n", pts, pts)[:, None, None] * np.eye(2)
                             + 2 * np.einsum("ni,nj->nij", pts, pts)) / 8
    assert np.max(np.abs(avg.eval(pts) - exp)) < 1e-12
    assert np.max(metric_invariance_residual(avg, rotation_action(E2, 64), pts)) < 1e-10


def test_average_point_reflection():
    g = MetricField(E2, lambda p: [[2.0 + p[0], 0.0 * p[0]], [0.0 * p[0], 1.0 + 0.0 * p[0]]])
    act = custom_action(E2, lambda s, p: [s * p[0], s * p[1]], [1.0, -1.0], compose=lambda a, b: a * b)
    pts = np.array([[0.5, 0.2], [-0.3, 1.0]])
    avg = haar_average_metric(g, act).eval(pts)
    assert np.allclose(avg[:, 0, 0], 2.0) and np.allclose(avg[:, 1, 1], 1.0)


def test_cyclic_action_exact():
    act = cyclic_action(E2, lambda s, p: [math.cos(s) * p[0] - math.sin(s) * p[1],
                                          math.sin(s) * p[0] + math.cos(s) * p[1]], 4)
    assert act.order == 4 and len(act.quadrature) == 4


def test_average_too_coarse():
    g = MetricField(E2, lambda p: [[1.0 + ad.exp(3 * p[0]), 0.0 * p[0]], [0.0 * p[0], 1.0 + 0.0 * p[0]]])
    with pytest.raises(QuadratureTooCoarse):
        haar_average_metric(g, rotation_action(E2, 4), probe=np.array([[1.0, 0.5]]))


@given(st.integers(1, 7), st.integers(0, 10**6))
def test_trapezoid_exact_for_trig_polynomials(degree, seed):
    r = np.random.default_rng(seed)
    a, b = r.normal(size=(2, degree + 1))
    nodes = degree + 1
    act = circle_action(E2, lambda s, p: p, nodes)
    vals = [sum(a[m] * math.cos(m * s) + b[m] * math.sin(m * s) for m in range(degree + 1))
            for s, _ in act.quadrature]
    assert abs(sum(w * v for (_, w), v in zip(act.quadrature, vals)) - a[0]) < 1e-12


# Beltrami -> contact ----------------------------------------------------------------


@pytest.mark.parametrize("c", [-2.0, 0.0, 0.3])
def test_beltrami_to_contact_recovers_liouville(c):
    X, alpha, g = kepler_setup(c)
    pts = bundle_samples(c, 200)
    out = beltrami_to_contact(X, g, contact_volume(alpha), pts)
    assert np.max(form_residual(out, alpha, pts)) < 1e-9


def test_beltrami_to_contact_errors():
    pts = np.random.default_rng(0).uniform(-1, 1, (10, 3))
    mu = VolumeForm.standard(E3)
    with pytest.raises(NotBeltrami):
        beltrami_to_contact(VectorField(E3, lambda p: [0.0, 0.0, 1.0]), euclidean_metric(3), mu, pts)
    with pytest.raises(VanishingField):
        beltrami_to_contact(VectorField.zero(E3), euclidean_metric(3), mu, pts)


def test_abc_contact():
    F = abc_field(1.0, 0.8, 0.6)
    X = VectorField(E3, lambda p: F(p, ad.sin, ad.cos))
    pts = np.random.default_rng(2).uniform(0, 2 * np.pi, (200, 3))
    mu = VolumeForm.standard(E3)
    assert np.max(vector_residual(curl(X, euclidean_metric(3), mu), X, pts)) < 1e-12
    rep = beltrami_report(X, euclidean_metric(3), mu, pts)
    assert rep.passed and abs(rep.eigenfactor_range[0] - 1.0) < 1e-12
    alpha = beltrami_to_contact(X, euclidean_metric(3), mu, pts)
    # alpha ^ d alpha = |X|^2 mu for an eigenvalue-1 field
    assert contact_check(alpha, pts, threshold=1e-3).passed


# J ----------------------------------------------------------------------------------


def test_J_standard_contact_at_origin():
    alpha = one_form(E3, lambda p: [0.0 * p[0], p[0], 1.0 + 0.0 * p[0]])
    J = construct_J(alpha).eval(np.zeros(3))[0]
    assert np.allclose(J @ [1, 0, 0], [0, 1, 0], atol=1e-15)
    assert np.allclose(J @ [0, 1, 0], [-1, 0, 0], atol=1e-15)


@pytest.mark.parametrize("c", [-0.5, 0.0, 0.3])
def test_J_invariants(c):
    _, alpha, _ = kepler_setup(c)
    pts = bundle_samples(c, 1000)
    inv = j_invariants(construct_J(alpha, diag_metric(alpha.chart, (1.0, 2.0, 1.0)), pts), pts)
    assert inv["square_residual"] < 1e-10
    assert inv["min_taming"] > 0
    assert inv["kernel_residual"] < 1e-10


def test_J_degenerate():
    with pytest.raises(DegenerateTwoForm):
        construct_J(one_form(E3, lambda p: [0.0, 0.0, 1.0]), points=np.zeros((1, 3)))


# Reeb-like -> metric ----------------------------------------------------------------


def test_reeb_to_metric_flat_no_action():
    X, alpha, _ = kepler_setup(0.0)
    pts = bundle_samples(0.0, 100)
    g, mu = reeb_to_metric(X, alpha, None, pts)
    rep = reeb_to_metric_report(X, alpha, g, mu, pts, 0.0)
    assert rep.passed
    assert np.max(vector_residual(curl(X, g, mu), X, pts)) < 1e-8


def test_reeb_to_metric_rescaled_field():
    R, alpha, _ = kepler_setup(-0.5)
    X = R.scaled(2.0)
    pts = bundle_samples(-0.5, 50)
    g, mu = reeb_to_metric(X, alpha, None, pts)
    assert np.max(form_residual(flat(X, g), alpha, pts)) < 1e-9
    mu_R = contact_volume(alpha)
    assert np.allclose(mu.eval(pts), 0.5 * mu_R.eval(pts), rtol=1e-13)
    assert np.max(vector_residual(curl(X, g, mu), X, pts)) < 1e-8
    assert np.max(np.abs(divergence(X, mu).eval(pts))) < 1e-9


def test_reeb_to_metric_errors():
    R, alpha, _ = kepler_setup(-0.5)
    pts = bundle_samples(-0.5, 10)
    with pytest.raises(NotReebLike):
        reeb_to_metric(R.scaled(-1.0), alpha, None, pts)
    skew = VectorField(R.chart, lambda p: [v * (1.0 + 0.1 * p[0]) for v in R.fn(p)])
    with pytest.raises(NotInvariant):
        reeb_to_metric(skew, alpha, kepler_symmetry_action(-0.5, 8), pts)


@pytest.mark.parametrize("c", [-0.5, 0.3])
def test_reeb_to_metric_equivariant(c):
    X, alpha, _ = kepler_setup(c)
    aux = diag_metric(X.chart, (1.0, 2.0, 1.0))
    act = kepler_symmetry_action(c, 32)
    pts = act.sample(12, seed=4)
    raw, _ = reeb_to_metric(X, alpha, None, pts, aux)
    assert np.max(metric_invariance_residual(raw, act, pts[:4], act.params[::4])) > 1e-3
    g, mu = reeb_to_metric(X, alpha, act, pts, aux)
    fine, _ = reeb_to_metric(X, alpha, act.refined(64), pts, aux)
    jpart, _ = reeb_to_metric(X, alpha, act, pts, aux, average="j")
    assert np.max(metric_invariance_residual(g, act, pts, act.params[::4])) < 1e-10
    assert np.max(np.abs(g.eval(pts) - fine.eval(pts))) < 1e-12
    assert np.max(np.abs(g.eval(pts) - jpart.eval(pts))) < 1e-12
    assert reeb_to_metric_report(X, alpha, g, mu, pts, c).passed


def test_round_trip():
    c = -0.5
    X, alpha, g = kepler_setup(c)
    pts = bundle_samples(c, 40)
    act = kepler_symmetry_action(c, 16)
    a2 = beltrami_to_contact(X, g, contact_volume(alpha), pts)
    assert np.max(form_invariance_residual(a2, act, pts)) < 1e-9
    g2, mu2 = reeb_to_metric(X, a2, act, pts, diag_metric(X.chart, (1.0, 2.0, 1.0)))
    assert np.max(vector_residual(curl(X, g2, mu2), X, pts)) < 1e-8

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kepler_euler import autodiff as ad
from kepler_euler.chart_geometry import conformal_metric, euclidean_chart, euclidean_metric
from kepler_euler.cotangent_lift import contact_volume, lift_metric, liouville_form, reeb_field
from kepler_euler.errors import DegenerateVolume, DegreeOverflow, ZeroFactor
from kepler_euler.exterior_calculus import (KForm, ScalarField, VectorField, VolumeForm, basis,
                                            contact_check, coordinate_form, curl, divergence,
                                            exterior_derivative, flat, form_residual,
                                            interior_product, one_form, rescaled_volume_check,
                                            sharp, vector_residual, wedge)
from tests.helpers import REGIMES, bundle_samples
from tests.oracles import abc_field, classical_curl, monomials, polynomial_curl

E3 = euclidean_chart(3)
E2 = euclidean_chart(2)
G3 = euclidean_metric(3)
MU3 = VolumeForm.standard(E3)


def random_form(chart, degree, seed):
    """Coefficients mixing a quadratic and a sine term, AD-compatible."""
    r = np.random.default_rng(seed)
    n = len(basis(chart.dim, degree))
    A = r.normal(size=(n, chart.dim))
    B = r.normal(size=(n, chart.dim, chart.dim))
    C = r.normal(size=n)

    def fn(p):
        out = []
        for m in range(n):
            lin = sum(A[m, i] * p[i] for i in range(chart.dim))
            quad = sum(B[m, i, j] * p[i] * p[j] for i in range(chart.dim) for j in range(chart.dim))
            out.append(C[m] + quad + ad.sin(lin))
        return out

    return KForm(chart, degree, fn)


def random_field(chart, seed):
    f = random_form(chart, 1, seed)
    return VectorField(chart, f.fn)


PTS3 = np.random.default_rng(1).uniform(-1.0, 1.0, (20, 3))


def test_basis_normalization():
    w = wedge(coordinate_form(E2, 0), coordinate_form(E2, 1))
    assert w.on_vectors(np.zeros(2), np.array([1.0, 0.0]), np.array([0.0, 1.0]))[0] == 1.0


def test_degree_overflow():
    with pytest.raises(DegreeOverflow):
        wedge(coordinate_form(E2, 0, 1), coordinate_form(E2, 0))


@given(st.integers(0, 10**6))
def test_wedge_odd_self_vanishes(seed):
    a = random_form(E3, 1, seed)
    assert np.max(np.abs(wedge(a, a).eval(PTS3))) < 1e-12


def test_flat_liouville_contact_volume():
    alpha = liouville_form(euclidean_metric(2), "coordinate")
    pts = np.random.default_rng(0).uniform(-3.0, 3.0, (1000, 3))
    vol = wedge(alpha, exterior_derivative(alpha)).eval(pts)[:, 0]
    # hand expansion: (cos a dx1 + sin a dx2) ^ (-sin a da^dx1 + cos a da^dx2) = -dx1^dx2^da
    assert np.allclose(vol, -1.0, atol=1e-14)


def test_d_examples():
    const = KForm.from_scalar(ScalarField.constant(E2, 3.0))
    assert np.max(np.abs(exterior_derivative(const).eval(np.ones((3, 2))))) == 0.0
    a = KForm.from_dict(E2, 1, {(1,): lambda p: p[0]})
    assert np.allclose(exterior_derivative(a).eval(np.random.default_rng(0).normal(size=(5, 2))), 1.0)


@pytest.mark.parametrize("c", REGIMES)
def test_d_squared_liouville(c):
    alpha = liouville_form(conformal_metric(c))
    pts = bundle_samples(c, 100)
    assert np.max(np.abs(exterior_derivative(exterior_derivative(alpha)).eval(pts))) < 1e-10


def test_interior_examples():
    w = interior_product(VectorField.coordinate(E2, 0), coordinate_form(E2, 0, 1))
    assert np.allclose(w.eval(np.zeros((1, 2))), [[0.0, 1.0]])
    X = random_field(E3, 7)
    assert np.max(np.abs(interior_product(X, interior_product(X, MU3.form)).eval(PTS3))) < 1e-14


def test_bernoulli_constant_c0():
    g = lift_metric(conformal_metric(0.0))
    X = reeb_field(0.0)
    w = interior_product(X, exterior_derivative(flat(X, g)))
    assert np.max(np.abs(w.eval(bundle_samples(0.0, 200)))) < 1e-9


def test_flat_examples():
    assert np.allclose(flat(VectorField.coordinate(E2, 0), euclidean_metric(2)).eval(np.ones(2)), [1, 0])
    g = conformal_metric(0.0)
    assert np.allclose(flat(VectorField.coordinate(g.chart, 0), g).eval(np.array([1.0, 0.0])), [4, 0])


@given(st.integers(0, 10**6))
def test_sharp_flat_inverse(seed):
    c = -0.5
    g = lift_metric(conformal_metric(c))
    X = random_field(g.chart, seed)
    pts = bundle_samples(c, 10, seed)
    assert np.max(vector_residual(sharp(flat(X, g), g), X, pts)) < 1e-12


def test_curl_examples():
    assert np.max(np.abs(curl(VectorField.zero(E3), G3, MU3).eval(PTS3))) == 0.0
    rot = VectorField(E3, lambda p: [-p[1], p[0], 0.0 * p[2]])
    assert np.allclose(curl(rot, G3, MU3).eval(PTS3), [0.0, 0.0, 2.0], atol=1e-15)


def test_curl_matches_classical_oracle():
    r = np.random.default_rng(5)
    worst = 0.0
    for _ in range(20):
        coeffs = r.normal(size=(3, 10))
        X = VectorField(E3, lambda p, C=coeffs: [sum(C[i, m] * t for m, t in enumerate(monomials(p)))
                                                 for i in range(3)])
        got = curl(X, G3, MU3).eval(PTS3)
        exp = np.array([polynomial_curl(coeffs, x) for x in PTS3])
        worst = max(worst, float(np.max(np.abs(got - exp))))
    assert worst < 1e-12


def test_abc_flow_is_beltrami():
    F = abc_field(1.0, np.sqrt(2.0), np.sqrt(3.0))
    X = VectorField(E3, lambda p: F(p, ad.sin, ad.cos))
    for x in PTS3[:5]:
        assert np.allclose(classical_curl(lambda y: np.array(F(y)), x), F(x), atol=1e-8)
    assert np.max(vector_residual(curl(X, G3, MU3), X, PTS3)) < 1e-13


def test_curl_uniqueness():
    X = random_field(E3, 3)
    Z = curl(X, G3, MU3)
    lhs = exterior_derivative(flat(X, G3)).eval(PTS3[:1])
    for i in range(3):
        pert = VectorField(E3, lambda p, i=i: [z + (1e-3 if j == i else 0.0) for j, z in enumerate(Z.fn(p))])
        rhs = interior_product(pert, MU3.form).eval(PTS3[:1])
        assert np.max(np.abs(lhs - rhs)) > 1e-6


def test_curl_degenerate_volume():
    zero_mu = VolumeForm(KForm(E3, 3, lambda p: [0.0 * p[0]]))
    with pytest.raises(DegenerateVolume):
        curl(random_field(E3, 1), G3, zero_mu).eval(PTS3)


@pytest.mark.parametrize("c", REGIMES)
def test_reeb_field_is_curl_eigenfield(c):
    g = conformal_metric(c)
    X, alpha = reeb_field(c), liouville_form(g)
    mu = contact_volume(alpha)
    pts = bundle_samples(c, 200)
    assert np.max(vector_residual(curl(X, lift_metric(g), mu), X, pts)) < 1e-8
    assert np.max(np.abs(divergence(X, mu).eval(pts))) < 1e-9


def test_divergence_examples():
    assert np.max(np.abs(divergence(VectorField(E3, lambda p: [1.0, 2.0, 3.0]), MU3).eval(PTS3))) == 0
    X = VectorField(E3, lambda p: [p[0], 0.0, 0.0])
    assert np.allclose(divergence(X, MU3).eval(PTS3), 1.0)


@given(st.integers(0, 10**6), st.integers(0, 10**6))
def test_leibniz_and_iota_squared(s1, s2):
    a, b = random_form(E3, 1, s1), random_form(E3, 1, s2)
    lhs = exterior_derivative(wedge(a, b))
    rhs = wedge(exterior_derivative(a), b) - wedge(a, exterior_derivative(b))
    assert np.max(form_residual(lhs, rhs, PTS3)) < 1e-9
    X = random_field(E3, s1 + 1)
    two = random_form(E3, 2, s2)
    assert np.max(np.abs(interior_product(X, interior_product(X, two)).eval(PTS3))) < 1e-9
    f = random_form(E3, 0, s1)
    assert np.max(np.abs(exterior_derivative(exterior_derivative(f)).eval(PTS3))) < 1e-9


def test_contact_check_examples():
    pts = np.random.default_rng(0).uniform(-2.0, 2.0, (100, 3))
    assert not contact_check(coordinate_form(E3, 2), pts).passed
    std = one_form(E3, lambda p: [0.0, p[0], 1.0])
    rep = contact_check(std, pts)
    assert rep.passed
    assert rep.details["min_abs_volume_ratio"] == rep.details["max_abs_volume_ratio"] == 1.0


@pytest.mark.parametrize("c", REGIMES)
def test_contact_of_flat_reeb(c):
    assert contact_check(flat(reeb_field(c), lift_metric(conformal_metric(c))), bundle_samples(c, 300)).passed


def test_rescaled_volume_f_one_and_reeb():
    c = -0.5
    g, X = lift_metric(conformal_metric(c)), reeb_field(c)
    mu = contact_volume(liouville_form(conformal_metric(c)))
    one = ScalarField.constant(g.chart, 1.0)
    assert rescaled_volume_check(X, g, mu, one, bundle_samples(c, 50)).passed


def test_rescaled_volume_manufactured():
    # ABC field with volume mu = std / f has curl_mu X = f X for nonconstant f
    F = abc_field(1.0, 0.7, 0.4)
    X = VectorField(E3, lambda p: F(p, ad.sin, ad.cos))
    f = ScalarField(E3, lambda p: 2.0 + ad.sin(p[0]) * ad.cos(p[2]))
    mu = VolumeForm(KForm(E3, 3, lambda p: [1.0 / f.fn(p)]))
    rep = rescaled_volume_check(X, G3, mu, f, PTS3)
    assert rep.passed and rep.max_residual < 1e-8


def test_rescaled_volume_zero_factor():
    f = ScalarField(E3, lambda p: 0.0 * p[0])
    with pytest.raises(ZeroFactor):
        rescaled_volume_check(random_field(E3, 0), G3, MU3, f, PTS3)

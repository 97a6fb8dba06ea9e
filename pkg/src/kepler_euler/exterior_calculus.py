"""Differential forms and vector fields stored as coefficient functions on a chart.

A k-form on an n-chart holds one function returning the coefficients of
``dx^I`` for every strictly increasing ``I`` in lexicographic order
(``itertools.combinations(range(n), k)``).  All operators build new coefficient
functions and differentiate through :mod:`kepler_euler.autodiff`, so identities
such as ``d d = 0`` hold to rounding error.

Orientation: ``dx^0 ^ dx^1 ^ ... ^ dx^{n-1}`` is positive.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Any, Callable, Sequence

import numpy as np

from . import autodiff as ad
from .chart_geometry import Chart, MetricField
from .errors import (ChartMismatch, DegenerateVolume, DegreeOverflow, DegreeUnderflow,
                     ZeroFactor)
from .reports import VerificationReport

DEFAULT_TOL = 1e-8


@lru_cache(maxsize=None)
def basis(n: int, k: int) -> tuple[tuple[int, ...], ...]:
    return tuple(combinations(range(n), k))


@lru_cache(maxsize=None)
def _position(n: int, k: int) -> dict[tuple[int, ...], int]:
    return {idx: i for i, idx in enumerate(basis(n, k))}


def _merge_sign(a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, tuple[int, ...]]:
    """Sign of the permutation sorting ``a + b``, or 0 when indices repeat."""
    if set(a) & set(b):
        return 0, ()
    inversions = sum(1 for i in a for j in b if i > j)
    return (-1 if inversions % 2 else 1), tuple(sorted(a + b))


def _check_chart(*charts: Chart) -> Chart:
    first = charts[0]
    for ch in charts[1:]:
        if ch.dim != first.dim or (ch != first and ch.kind is not first.kind):
            raise ChartMismatch(f"{first.id} vs {ch.id}")
    return first


def _evaluate(fn, chart: Chart, points) -> tuple[np.ndarray, bool]:
    single = np.ndim(points) == 1
    pts = chart.require(points)
    return ad.realize(fn(ad.as_point(pts)), (len(pts),)), single


@dataclass(frozen=True)
class ScalarField:
    chart: Chart
    fn: Callable[[Sequence[Any]], Any]

    def __call__(self, p):
        return self.fn(p)

    def eval(self, points) -> np.ndarray:
        out, single = _evaluate(self.fn, self.chart, points)
        return out[0] if single else out

    def gradient(self, points) -> np.ndarray:
        out, single = _evaluate(lambda p: ad.jacobian(self.fn, p), self.chart, points)
        return out[0] if single else out

    @classmethod
    def constant(cls, chart: Chart, value: float) -> ScalarField:
        return cls(chart, lambda p: float(value))


@dataclass(frozen=True)
class VectorField:
    chart: Chart
    fn: Callable[[Sequence[Any]], list]

    def __call__(self, p):
        return self.fn(p)

    def eval(self, points) -> np.ndarray:
        out, single = _evaluate(self.fn, self.chart, points)
        return out[0] if single else out

    def scaled(self, factor) -> VectorField:
        """Multiply by a constant or a ScalarField."""
        if isinstance(factor, ScalarField):
            return VectorField(self.chart, lambda p: [factor.fn(p) * v for v in self.fn(p)])
        return VectorField(self.chart, lambda p: [factor * v for v in self.fn(p)])

    def __add__(self, other: VectorField) -> VectorField:
        _check_chart(self.chart, other.chart)
        return VectorField(self.chart, lambda p: [a + b for a, b in zip(self.fn(p), other.fn(p))])

    def __sub__(self, other: VectorField) -> VectorField:
        _check_chart(self.chart, other.chart)
        return VectorField(self.chart, lambda p: [a - b for a, b in zip(self.fn(p), other.fn(p))])

    @classmethod
    def coordinate(cls, chart: Chart, i: int) -> VectorField:
        unit = [1.0 if j == i else 0.0 for j in range(chart.dim)]
        return cls(chart, lambda p: list(unit))

    @classmethod
    def zero(cls, chart: Chart) -> VectorField:
        return cls(chart, lambda p: [0.0] * chart.dim)


@dataclass(frozen=True)
class KForm:
    chart: Chart
    degree: int
    fn: Callable[[Sequence[Any]], list]

    def __post_init__(self):
        if not 0 <= self.degree <= self.chart.dim:
            raise DegreeOverflow(f"degree {self.degree} on a {self.chart.dim}-chart")

    @property
    def indices(self) -> tuple[tuple[int, ...], ...]:
        return basis(self.chart.dim, self.degree)

    def __call__(self, p):
        return self.fn(p)

    def eval(self, points) -> np.ndarray:
        """Coefficient array, last axis ordered like :attr:`indices`."""
        out, single = _evaluate(self.fn, self.chart, points)
        return out[0] if single else out

    def coefficient(self, index: Sequence[int]) -> ScalarField:
        pos = _position(self.chart.dim, self.degree)[tuple(index)]
        return ScalarField(self.chart, lambda p: self.fn(p)[pos])

    def on_vectors(self, points, *vectors: np.ndarray) -> np.ndarray:
        """Evaluate the form on ``degree`` vectors (arrays of shape (N, n) or (n,))."""
        coeffs = np.atleast_2d(self.eval(points))
        vecs = [np.atleast_2d(v) for v in vectors]
        if len(vecs) != self.degree:
            raise ValueError("need exactly one vector per degree")
        total = np.zeros(coeffs.shape[0])
        for pos, idx in enumerate(self.indices):
            # determinant of the minor [v_a[idx_b]]
            m = np.stack([v[:, list(idx)] for v in vecs], axis=1)
            total = total + coeffs[:, pos] * (np.linalg.det(m) if self.degree else 1.0)
        return total

    def __add__(self, other: KForm) -> KForm:
        _check_chart(self.chart, other.chart)
        return KForm(self.chart, self.degree, lambda p: [a + b for a, b in zip(self.fn(p), other.fn(p))])

    def __sub__(self, other: KForm) -> KForm:
        _check_chart(self.chart, other.chart)
        return KForm(self.chart, self.degree, lambda p: [a - b for a, b in zip(self.fn(p), other.fn(p))])

    def scaled(self, factor) -> KForm:
        if isinstance(factor, ScalarField):
            return KForm(self.chart, self.degree, lambda p: [factor.fn(p) * v for v in self.fn(p)])
        return KForm(self.chart, self.degree, lambda p: [factor * v for v in self.fn(p)])

    @classmethod
    def from_scalar(cls, f: ScalarField) -> KForm:
        return cls(f.chart, 0, lambda p: [f.fn(p)])

    @classmethod
    def from_dict(cls, chart: Chart, degree: int, coeffs: dict) -> KForm:
        """Build from ``{index_tuple: callable}``; missing indices are zero."""
        order = basis(chart.dim, degree)
        for idx in coeffs:
            if tuple(idx) not in order:
                raise ValueError(f"index {idx} is not strictly increasing within the chart")
        fns = [coeffs.get(idx) for idx in order]
        return cls(chart, degree, lambda p: [f(p) if f is not None else 0.0 for f in fns])


@dataclass(frozen=True)
class VolumeForm:
    form: KForm

    def __post_init__(self):
        if self.form.degree != self.form.chart.dim:
            raise DegreeOverflow("a volume form has top degree")

    @property
    def chart(self) -> Chart:
        return self.form.chart

    def coefficient_fn(self) -> Callable[[Sequence[Any]], Any]:
        return lambda p: self.form.fn(p)[0]

    def eval(self, points) -> np.ndarray:
        out = self.form.eval(points)
        return out[..., 0]

    def scaled(self, f: ScalarField) -> VolumeForm:
        return VolumeForm(self.form.scaled(f))

    @classmethod
    def standard(cls, chart: Chart) -> VolumeForm:
        return cls(KForm(chart, chart.dim, lambda p: [1.0]))


def one_form(chart: Chart, fn: Callable[[Sequence[Any]], list]) -> KForm:
    return KForm(chart, 1, fn)


def coordinate_form(chart: Chart, *index: int) -> KForm:
    """``dx^{i1} ^ ... ^ dx^{ik}`` for strictly increasing indices."""
    idx = tuple(index)
    return KForm.from_dict(chart, len(idx), {idx: lambda p: 1.0})


# algebra ---------------------------------------------------------------------------


def wedge(a: KForm, b: KForm) -> KForm:
    chart = _check_chart(a.chart, b.chart)
    n = chart.dim
    deg = a.degree + b.degree
    if deg > n:
        raise DegreeOverflow(f"{a.degree} + {b.degree} > {n}")
    pos = _position(n, deg)
    terms = []
    for i, I in enumerate(a.indices):
        for j, J in enumerate(b.indices):
            sign, K = _merge_sign(I, J)
            if sign:
                terms.append((pos[K], sign, i, j))

    def fn(p):
        ca, cb = a.fn(p), b.fn(p)
        out: list[Any] = [0.0] * len(basis(n, deg))
        for k, sign, i, j in terms:
            term = ca[i] * cb[j]
            out[k] = out[k] + term if sign > 0 else out[k] - term
        return out

    return KForm(chart, deg, fn)


def exterior_derivative(a: KForm) -> KForm:
    chart = a.chart
    n = chart.dim
    if a.degree >= n:
        raise DegreeOverflow("d of a top-degree form")
    pos = _position(n, a.degree + 1)
    terms = []
    for i, I in enumerate(a.indices):
        for k in range(n):
            sign, K = _merge_sign((k,), I)
            if sign:
                terms.append((pos[K], sign, i, k))

    def fn(p):
        jac = ad.jacobian(a.fn, p)  # jac[k][i] = d_k a_I
        out: list[Any] = [0.0] * len(basis(n, a.degree + 1))
        for K, sign, i, k in terms:
            term = jac[k][i]
            out[K] = out[K] + term if sign > 0 else out[K] - term
        return out

    return KForm(chart, a.degree + 1, fn)


def interior_product(X: VectorField, a: KForm) -> KForm:
    chart = _check_chart(X.chart, a.chart)
    n = chart.dim
    if a.degree < 1:
        raise DegreeUnderflow("cannot contract a 0-form")
    pos = _position(n, a.degree - 1)
    terms = []
    for i, I in enumerate(a.indices):
        for slot, comp in enumerate(I):
            rest = I[:slot] + I[slot + 1:]
            terms.append((pos[rest], -1 if slot % 2 else 1, i, comp))

    def fn(p):
        ca, xv = a.fn(p), X.fn(p)
        out: list[Any] = [0.0] * len(basis(n, a.degree - 1))
        for r, sign, i, comp in terms:
            term = xv[comp] * ca[i]
            out[r] = out[r] + term if sign > 0 else out[r] - term
        return out

    return KForm(chart, a.degree - 1, fn)


def flat(X: VectorField, g: MetricField) -> KForm:
    """``iota_X g``: the 1-form ``Y -> g(X, Y)``."""
    chart = _check_chart(X.chart, g.chart)
    return KForm(chart, 1, lambda p: ad.matvec(ad.transpose(g.fn(p)), X.fn(p)))


def sharp(beta: KForm, g: MetricField) -> VectorField:
    chart = _check_chart(beta.chart, g.chart)
    if beta.degree != 1:
        raise ValueError("sharp acts on 1-forms")
    return VectorField(chart, lambda p: ad.matvec(ad.inv(g.fn(p)), beta.fn(p)))


def evaluate_on(a: KForm, X: VectorField) -> ScalarField:
    """``a(X)`` for a 1-form ``a``."""
    _check_chart(a.chart, X.chart)
    return ScalarField(a.chart, lambda p: ad.dot(a.fn(p), X.fn(p)))


def _require_volume(m: np.ndarray, what: str = "volume") -> None:
    if np.any(~np.isfinite(m)) or np.any(np.abs(m) < 1e-12):
        raise DegenerateVolume(f"{what} coefficient vanishes at an evaluation point")


def curl(X: VectorField, g: MetricField, mu: VolumeForm) -> VectorField:
    """The field ``Z`` with ``iota_Z mu = d iota_X g`` on a 3-chart.

    ``iota_Z (m dx0^dx1^dx2) = m (Z0 dx1^dx2 - Z1 dx0^dx2 + Z2 dx0^dx1)``, a
    diagonal system in the 2-form basis, solved componentwise.
    """
    chart = _check_chart(X.chart, g.chart, mu.chart)
    if chart.dim != 3:
        raise ValueError("curl is implemented in dimension 3")
    dbeta = exterior_derivative(flat(X, g))
    mfn = mu.coefficient_fn()

    def fn(p):
        m = mfn(p)
        _require_volume(ad.primal(m))
        c01, c02, c12 = dbeta.fn(p)
        return [c12 / m, -c02 / m, c01 / m]

    return VectorField(chart, fn)


def divergence(X: VectorField, mu: VolumeForm) -> ScalarField:
    """``q`` with ``L_X mu = d iota_X mu = q mu``."""
    chart = _check_chart(X.chart, mu.chart)
    dimu = exterior_derivative(interior_product(X, mu.form))
    mfn = mu.coefficient_fn()

    def fn(p):
        m = mfn(p)
        _require_volume(ad.primal(m))
        return dimu.fn(p)[0] / m

    return ScalarField(chart, fn)


def volume_of_contact(alpha: KForm) -> KForm:
    """``alpha ^ (d alpha)^n`` on a (2n+1)-chart."""
    n, rem = divmod(alpha.chart.dim - 1, 2)
    if rem or alpha.degree != 1:
        raise ValueError("contact forms are 1-forms on odd-dimensional charts")
    out = alpha
    da = exterior_derivative(alpha)
    for _ in range(n):
        out = wedge(out, da)
    return out


# residual helpers ------------------------------------------------------------------------


def vector_residual(X: VectorField, Y: VectorField, points) -> np.ndarray:
    """Euclidean norm of ``X - Y`` per point."""
    return np.linalg.norm(np.atleast_2d(X.eval(points) - Y.eval(points)), axis=-1)


def form_residual(a: KForm, b: KForm, points) -> np.ndarray:
    """Coefficient max-norm of ``a - b`` per point."""
    d = np.atleast_2d(a.eval(points) - b.eval(points))
    return np.max(np.abs(d), axis=-1)


# checks ---------------------------------------------------------------------------------


def contact_check(alpha: KForm, points, threshold: float = 1e-3,
                  reference: VolumeForm | None = None, regime_c=None) -> VerificationReport:
    """Nondegeneracy of ``alpha ^ d alpha`` relative to a reference volume.

    The reported residual at each point is ``threshold / |coefficient ratio|``
    so the check passes when every residual is below 1.
    """
    vol = volume_of_contact(alpha)
    m = np.atleast_1d(vol.eval(points)[..., 0])
    ref = np.ones_like(m) if reference is None else np.atleast_1d(reference.eval(points))
    ratio = np.abs(m / ref)
    with np.errstate(divide="ignore"):
        resid = np.where(ratio > 0, threshold / ratio, np.inf)
    rep = VerificationReport.from_residuals("contact", resid, 1.0, regime_c)
    rep.details.update(min_abs_volume_ratio=float(np.min(ratio)),
                       max_abs_volume_ratio=float(np.max(ratio)), threshold=threshold)
    rep.passed = bool(np.min(ratio) > threshold)
    return rep


def rescaled_volume_check(X: VectorField, g: MetricField, mu: VolumeForm, f: ScalarField,
                          points, tol: float = DEFAULT_TOL, regime_c=None) -> VerificationReport:
    """For ``curl X = f X`` with nonvanishing ``f``, check the rescaled volume ``f mu``.

    Residuals: ``curl_mu X - f X``; ``div_{f mu} X``; ``curl_{f mu} X - X``;
    and ``L_X mu - d(1/f) ^ d iota_X g`` (coefficient of the top form).
    """
    fv = np.atleast_1d(f.eval(points))
    if np.any(np.abs(fv) < 1e-12):
        raise ZeroFactor("eigenfactor vanishes at a sample")
    mu_t = mu.scaled(f)
    base = vector_residual(curl(X, g, mu), X.scaled(f), points)
    div_t = np.abs(np.atleast_1d(divergence(X, mu_t).eval(points)))
    curl_t = vector_residual(curl(X, g, mu_t), X, points)

    lie = exterior_derivative(interior_product(X, mu.form))
    inv_f = KForm.from_scalar(ScalarField(f.chart, lambda p: 1.0 / f.fn(p)))
    rhs = wedge(exterior_derivative(inv_f), exterior_derivative(flat(X, g)))
    eq4 = form_residual(lie, rhs, points)

    reports = [
        VerificationReport.from_residuals("curl_equals_fX", base, tol, regime_c),
        VerificationReport.from_residuals("divergence_rescaled", div_t, tol, regime_c),
        VerificationReport.from_residuals("curl_rescaled_equals_X", curl_t, tol, regime_c),
        VerificationReport.from_residuals("lie_derivative_identity", eq4, tol, regime_c),
    ]
    from .reports import combine
    return combine("rescaled_volume", reports, regime_c)

"""Coordinate charts, the constant-curvature metrics of the regularized Kepler
problem, Levi-Civita connection and curvature, and the stereographic maps.

Regime conventions (``k = sqrt(2|c|)``):

* ``StereoPlane(c)``: the plane with metric ``(2 / (|x|^2 - 2c))^2 <.,.>``.
  For ``c < 0`` a second copy (``pole="south"``) is related to the first by the
  holomorphic inversion ``x -> k^2 / x``, an isometry of the metric.
* ``InvolutedPlane``: image of the ``c = 0`` plane under ``x -> 2x/|x|^2``;
  the metric there is Euclidean.
* ``HalfPlane(c)``: upper half plane with metric ``<.,.> / (2c y^2)``, reached
  from the ``c > 0`` plane by ``x -> i (x + k) / (x - k)``.
* ``SphericalSphere(c)``: coordinates ``(phi, theta)`` on the sphere of
  radius ``1/k``, theta measured from the projection pole.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from . import autodiff as ad
from .errors import OutOfDomain

DOMAIN_MARGIN = 1e-8


class ChartKind(enum.Enum):
    STEREO_PLANE = "StereoPlane"
    INVOLUTED_PLANE = "InvolutedPlane"
    SPHERICAL_SPHERE = "SphericalSphere"
    HALF_PLANE = "HalfPlane"
    PHASE_4D = "PhaseChart4D"
    EUCLIDEAN = "Euclidean"
    BUNDLE = "Bundle"


class SignClass(enum.Enum):
    NEGATIVE = "Negative"
    ZERO = "Zero"
    POSITIVE = "Positive"


@dataclass(frozen=True)
class EnergyRegime:
    c: float

    @property
    def sign_class(self) -> SignClass:
        if self.c < 0:
            return SignClass.NEGATIVE
        if self.c > 0:
            return SignClass.POSITIVE
        return SignClass.ZERO

    @property
    def k(self) -> float:
        return float(np.sqrt(2.0 * abs(self.c)))


@dataclass(frozen=True)
class Chart:
    kind: ChartKind
    dim: int
    c: float | None = None
    pole: str = "north"
    base: Chart | None = None

    @property
    def id(self) -> str:
        if self.kind is ChartKind.BUNDLE:
            return f"Bundle[{self.base.id}]"
        if self.c is None:
            return self.kind.value
        tag = f"{self.kind.value}({self.c:g})"
        return tag if self.pole == "north" else tag + "@south"

    def margin(self, p: Sequence[Any]) -> Any:
        """Continuous function that is positive exactly on the valid region."""
        x = [ad.primal(v) for v in p]
        big = np.full(np.shape(x[0]), np.inf)
        kind = self.kind
        if kind is ChartKind.BUNDLE:
            return self.base.margin(x[:2])
        if kind is ChartKind.STEREO_PLANE:
            r2 = x[0] * x[0] + x[1] * x[1]
            if self.c < 0:
                return big
            if self.c == 0:
                return np.sqrt(r2) - DOMAIN_MARGIN
            return r2 - 2.0 * self.c - DOMAIN_MARGIN
        if kind is ChartKind.HALF_PLANE:
            return x[1] - DOMAIN_MARGIN
        if kind is ChartKind.SPHERICAL_SPHERE:
            return np.minimum(x[1], np.pi - x[1]) - DOMAIN_MARGIN
        return big

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim}-dimensional points for chart {self.id}")
        return np.asarray(self.margin(ad.as_point(pts)) > 0) & np.all(np.isfinite(pts), axis=1)

    def domain_predicate(self, point: Sequence[float]) -> bool:
        return bool(self.contains(np.asarray(point, dtype=float)[None, :])[0])

    def require(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ok = self.contains(pts)
        if not np.all(ok):
            bad = pts[~ok][0]
            raise OutOfDomain(f"point {bad.tolist()} outside chart {self.id}")
        return pts


def stereo_chart(c: float, pole: str = "north") -> Chart:
    return Chart(ChartKind.STEREO_PLANE, 2, float(c), pole)


def involuted_chart() -> Chart:
    return Chart(ChartKind.INVOLUTED_PLANE, 2, 0.0)


def half_plane_chart(c: float) -> Chart:
    if c <= 0:
        raise ValueError("the half-plane chart serves positive energy levels")
    return Chart(ChartKind.HALF_PLANE, 2, float(c))


def spherical_chart(c: float) -> Chart:
    if c >= 0:
        raise ValueError("the spherical chart serves negative energy levels")
    return Chart(ChartKind.SPHERICAL_SPHERE, 2, float(c))


def euclidean_chart(dim: int) -> Chart:
    return Chart(ChartKind.EUCLIDEAN, dim)


PHASE_CHART = Chart(ChartKind.PHASE_4D, 4)


@dataclass(frozen=True)
class ChartPoint:
    chart: Chart
    coords: tuple[float, ...]

    def __post_init__(self):
        coords = tuple(float(v) for v in self.coords)
        object.__setattr__(self, "coords", coords)
        if len(coords) != self.chart.dim:
            raise ValueError("coordinate count does not match chart dimension")
        if not self.chart.domain_predicate(coords):
            raise OutOfDomain(f"{coords} outside chart {self.chart.id}")

    def array(self) -> np.ndarray:
        return np.asarray(self.coords)


def _single(points) -> bool:
    return isinstance(points, ChartPoint) or np.ndim(points) == 1


def _as_points(chart: Chart, points) -> np.ndarray:
    if isinstance(points, ChartPoint):
        if points.chart.dim != chart.dim:
            raise OutOfDomain("chart point has the wrong dimension")
        points = points.array()
    return chart.require(points)


# metrics ---------------------------------------------------------------------


@dataclass(frozen=True)
class MetricField:
    """Riemannian metric ``p -> g_ij(p)`` on a chart, with AD derivatives.

    ``fn`` takes a coordinate list and returns a nested ``dim x dim`` list.
    """

    chart: Chart
    fn: Callable[[Sequence[Any]], list]
    name: str = ""

    def __call__(self, p: Sequence[Any]) -> list:
        return self.fn(p)

    def eval(self, points) -> np.ndarray:
        pts = _as_points(self.chart, points)
        return ad.realize(self.fn(ad.as_point(pts)), (len(pts),))

    def deriv(self, points) -> np.ndarray:
        """``out[..., i, j, k] = d g_ij / d x^k``."""
        pts = _as_points(self.chart, points)
        jac = ad.jacobian(self.fn, ad.as_point(pts))
        return np.moveaxis(ad.realize(jac, (len(pts),)), 1, -1)

    def inverse_fn(self) -> Callable[[Sequence[Any]], list]:
        return lambda p: ad.inv(self.fn(p))

    def scaled(self, factor: float) -> MetricField:
        return MetricField(self.chart, lambda p: ad.tree_map(lambda v: factor * v, self.fn(p)),
                           f"{factor:g}*{self.name}")


def conformal_factor(c: float) -> Callable[[Sequence[Any]], Any]:
    """``lambda(x) = 2 / (|x|^2 - 2c)``; the metric is ``lambda^2`` times Euclidean."""
    c = float(c)
    return lambda p: 2.0 / (p[0] * p[0] + p[1] * p[1] - 2.0 * c)


def conformal_metric(c: float, pole: str = "north") -> MetricField:
    lam = conformal_factor(c)

    def fn(p):
        f = lam(p)
        f = f * f
        return [[f, 0.0], [0.0, f]]

    return MetricField(stereo_chart(c, pole), fn, f"conformal({c:g})")


def euclidean_metric(dim: int = 2, chart: Chart | None = None) -> MetricField:
    ident = [[1.0 if i == j else 0.0 for j in range(dim)] for i in range(dim)]
    return MetricField(chart or euclidean_chart(dim), lambda p: [row[:] for row in ident], "euclidean")


def involuted_metric() -> MetricField:
    return euclidean_metric(2, involuted_chart())


def half_plane_metric(c: float) -> MetricField:
    c = float(c)

    def fn(p):
        f = 1.0 / (2.0 * c * p[1] * p[1])
        return [[f, 0.0], [0.0, f]]

    return MetricField(half_plane_chart(c), fn, f"halfplane({c:g})")


def spherical_metric(c: float) -> MetricField:
    """Round metric ``r^2 (sin^2 theta dphi^2 + dtheta^2)``, ``r = 1/sqrt(-2c)``."""
    r2 = 1.0 / (-2.0 * float(c))

    def fn(p):
        s = ad.sin(p[1])
        return [[r2 * s * s, 0.0], [0.0, r2]]

    return MetricField(spherical_chart(c), fn, f"round({c:g})")


def regime_metric(c: float, kind: ChartKind = ChartKind.STEREO_PLANE, pole: str = "north") -> MetricField:
    if kind is ChartKind.STEREO_PLANE:
        return conformal_metric(c, pole)
    if kind is ChartKind.INVOLUTED_PLANE:
        return involuted_metric()
    if kind is ChartKind.HALF_PLANE:
        return half_plane_metric(c)
    if kind is ChartKind.SPHERICAL_SPHERE:
        return spherical_metric(c)
    raise ValueError(f"no regime metric on {kind}")


# connection and curvature ------------------------------------------------------


def christoffel_fn(metric_fn: Callable[[Sequence[Any]], list]) -> Callable[[Sequence[Any]], list]:
    """Return ``p -> Gamma[k][i][j]`` (AD-compatible)."""

    def fn(p):
        n = len(p)
        g = metric_fn(p)
        ginv = ad.inv(g)
        dg = ad.jacobian(metric_fn, p)  # dg[l][i][j] = d_l g_ij
        # lowered symbols Gamma_{l,ij} = (g_li,j + g_lj,i - g_ij,l) / 2
        low = [[[0.5 * (dg[j][l][i] + dg[i][l][j] - dg[l][i][j]) for j in range(n)]
                for i in range(n)] for l in range(n)]
        return [[[ad.dot([ginv[k][l] for l in range(n)], [low[l][i][j] for l in range(n)])
                  for j in range(n)] for i in range(n)] for k in range(n)]

    return fn


def riemann_fn(metric_fn: Callable[[Sequence[Any]], list]) -> Callable[[Sequence[Any]], list]:
    """Return ``p -> R[i][j][k][l]`` with ``R(d_k, d_l) d_j = R^i_{jkl} d_i``."""
    gamma_fn = christoffel_fn(metric_fn)

    def fn(p):
        n = len(p)
        gam = gamma_fn(p)
        dgam = ad.jacobian(gamma_fn, p)  # dgam[m][i][a][b] = d_m Gamma^i_ab
        out = []
        for i in range(n):
            block_j = []
            for j in range(n):
                block_k = []
                for k in range(n):
                    row = []
                    for l in range(n):
                        v = dgam[k][i][l][j] - dgam[l][i][k][j]
                        for m in range(n):
                            v = v + gam[i][k][m] * gam[m][l][j] - gam[i][l][m] * gam[m][k][j]
                        row.append(v)
                    block_k.append(row)
                block_j.append(block_k)
            out.append(block_j)
        return out

    return fn


def christoffel(g: MetricField, points) -> np.ndarray:
    """``out[..., k, i, j] = Gamma^k_ij``."""
    pts = _as_points(g.chart, points)
    return ad.realize(christoffel_fn(g.fn)(ad.as_point(pts)), (len(pts),))


def riemann(g: MetricField, points) -> np.ndarray:
    """Fully lowered ``R_{ijkl} = g_im R^m_{jkl}`` as ``(N, n, n, n, n)``."""
    pts = _as_points(g.chart, points)
    p = ad.as_point(pts)
    up = ad.realize(riemann_fn(g.fn)(p), (len(pts),))
    gm = ad.realize(g.fn(p), (len(pts),))
    return np.einsum("nim,nmjkl->nijkl", gm, up)


def gauss_curvature(g: MetricField, points) -> np.ndarray:
    if g.chart.dim != 2:
        raise ValueError("Gauss curvature needs a 2-dimensional metric")
    pts = _as_points(g.chart, points)
    r = riemann(g, pts)
    gm = g.eval(pts)
    det = gm[:, 0, 0] * gm[:, 1, 1] - gm[:, 0, 1] ** 2
    out = r[:, 0, 1, 0, 1] / det
    return float(out[0]) if _single(points) else out


def sectional_curvature(g: MetricField, points, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Sectional curvature of the planes spanned by ``u[n], v[n]`` at ``points[n]``."""
    pts = _as_points(g.chart, points)
    r = riemann(g, pts)
    gm = g.eval(pts)
    u = np.broadcast_to(u, pts.shape)
    v = np.broadcast_to(v, pts.shape)
    num = np.einsum("nijkl,ni,nj,nk,nl->n", r, u, v, u, v)
    uu = np.einsum("nij,ni,nj->n", gm, u, u)
    vv = np.einsum("nij,ni,nj->n", gm, v, v)
    uv = np.einsum("nij,ni,nj->n", gm, u, v)
    return num / (uu * vv - uv * uv)


def constant_curvature_residual(g: MetricField, points, kappa: float) -> np.ndarray:
    """``max_ijkl |R_ijkl - kappa (g_ik g_jl - g_il g_jk)|`` per point."""
    pts = _as_points(g.chart, points)
    r = riemann(g, pts)
    gm = g.eval(pts)
    model = kappa * (np.einsum("nik,njl->nijkl", gm, gm) - np.einsum("nil,njk->nijkl", gm, gm))
    return np.max(np.abs(r - model).reshape(len(pts), -1), axis=1)


def min_eigenvalue(g: MetricField, points) -> np.ndarray:
    return np.linalg.eigvalsh(g.eval(points))[:, 0]


# stereographic maps and chart transitions ---------------------------------------


def stereographic_map_fn(c: float, pole: str = "north") -> Callable[[Sequence[Any]], list]:
    """Map from the regime plane to the model surface (AD-compatible).

    ``c < 0``: sphere of radius ``1/k`` in Euclidean space, projected from the
    north pole (``pole="south"`` gives the chart projected from the south pole).
    ``c = 0``: the involution ``x -> 2x/|x|^2``.
    ``c > 0``: upper sheet of the hyperboloid ``X^2 + Y^2 - Z^2 = -1/k^2`` in
    Minkowski space; its induced metric has curvature ``-k^2 = -2c``.
    """
    c = float(c)
    k = float(np.sqrt(2.0 * abs(c)))
    if c < 0:
        sgn = 1.0 if pole == "north" else -1.0

        def fn(p):
            r2 = p[0] * p[0] + p[1] * p[1]
            d = r2 + k * k
            return [2.0 * p[0] / d, sgn * 2.0 * p[1] / d, sgn * (r2 - k * k) / (k * d)]

        return fn
    if c == 0:
        def fn(p):
            r2 = p[0] * p[0] + p[1] * p[1]
            return [2.0 * p[0] / r2, 2.0 * p[1] / r2]

        return fn

    def fn(p):
        r2 = p[0] * p[0] + p[1] * p[1]
        d = r2 - k * k
        return [2.0 * p[0] / d, 2.0 * p[1] / d, (r2 + k * k) / (k * d)]

    return fn


def ambient_signature(c: float) -> np.ndarray:
    if c < 0:
        return np.array([1.0, 1.0, 1.0])
    if c == 0:
        return np.array([1.0, 1.0])
    return np.array([1.0, 1.0, -1.0])


def stereographic_map(c: float, x, pole: str = "north") -> np.ndarray:
    chart = stereo_chart(c, pole)
    pts = _as_points(chart, x)
    out = ad.realize(stereographic_map_fn(c, pole)(ad.as_point(pts)), (len(pts),))
    return out[0] if np.ndim(x) == 1 else out


def stereographic_pullback_residual(c: float, points, pole: str = "north") -> np.ndarray:
    """``max_ij |(S^* ambient)_ij - g_ij|`` per point, relative to the metric scale."""
    chart = stereo_chart(c, pole)
    pts = _as_points(chart, points)
    p = ad.as_point(pts)
    jac = ad.realize(ad.jacobian(stereographic_map_fn(c, pole), p), (len(pts),))  # (N, k, a)
    sig = ambient_signature(c)
    pulled = np.einsum("nia,a,nja->nij", jac, sig, jac)
    g = conformal_metric(c, pole).eval(pts)
    scale = np.abs(g[:, 0, 0])
    return np.max(np.abs(pulled - g).reshape(len(pts), -1), axis=1) / scale


def _cmul(a, b):
    return [a[0] * b[0] - a[1] * b[1], a[0] * b[1] + a[1] * b[0]]


def _cdiv(a, b):
    d = b[0] * b[0] + b[1] * b[1]
    return [(a[0] * b[0] + a[1] * b[1]) / d, (a[1] * b[0] - a[0] * b[1]) / d]


def transition_fn(src: Chart, dst: Chart) -> Callable[[Sequence[Any]], list]:
    """Coordinate change between two base charts of the same regime (AD-compatible)."""
    if src == dst:
        return lambda p: list(p)
    key = (src.kind, src.pole, dst.kind, dst.pole)
    c = src.c if src.c is not None else dst.c
    k = float(np.sqrt(2.0 * abs(c))) if c is not None else 0.0
    S, I, H, SP = (ChartKind.STEREO_PLANE, ChartKind.INVOLUTED_PLANE,
                   ChartKind.HALF_PLANE, ChartKind.SPHERICAL_SPHERE)
    if src.kind is S and dst.kind is S:
        # x -> k^2 / x, its own inverse
        return lambda p: [k * k * p[0] / (p[0] * p[0] + p[1] * p[1]),
                          -k * k * p[1] / (p[0] * p[0] + p[1] * p[1])]
    if {src.kind, dst.kind} == {S, I}:
        return lambda p: [2.0 * p[0] / (p[0] * p[0] + p[1] * p[1]),
                          2.0 * p[1] / (p[0] * p[0] + p[1] * p[1])]
    if key[0] is S and key[2] is H:
        return lambda p: _cmul([0.0, 1.0], _cdiv([p[0] + k, p[1]], [p[0] - k, p[1]]))
    if key[0] is H and key[2] is S:
        return lambda p: [k * v for v in _cdiv([p[0], p[1] + 1.0], [p[0], p[1] - 1.0])]
    if key[0] is S and key[2] is SP and src.pole == "north":
        def to_sphere(p):
            r = ad.sqrt(p[0] * p[0] + p[1] * p[1])
            return [ad.atan2(p[1], p[0]), 2.0 * ad.atan2(k, r)]

        return to_sphere
    if key[0] is SP and key[2] is S and dst.pole == "north":
        def from_sphere(p):
            cot = ad.cos(0.5 * p[1]) / ad.sin(0.5 * p[1])
            return [k * cot * ad.cos(p[0]), k * cot * ad.sin(p[0])]

        return from_sphere
    raise ValueError(f"no transition from {src.id} to {dst.id}")


def transition(src: Chart, dst: Chart, points) -> np.ndarray:
    pts = _as_points(src, points)
    out = ad.realize(transition_fn(src, dst)(ad.as_point(pts)), (len(pts),))
    return out[0] if np.ndim(points) == 1 else out


# sampling -------------------------------------------------------------------------


def sample_regime_base(c: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples of the regime plane, away from the chart boundary."""
    k = float(np.sqrt(2.0 * abs(c)))
    if c < 0:
        return rng.uniform(-1.5 * k, 1.5 * k, size=(n, 2))
    if c == 0:
        lo, hi = 0.5, 3.0
    else:
        lo, hi = 1.2 * k, k + 2.0
    out = np.empty((0, 2))
    while len(out) < n:
        cand = rng.uniform(-hi, hi, size=(2 * n, 2))
        r = np.linalg.norm(cand, axis=1)
        out = np.vstack([out, cand[r >= lo]])
    return out[:n]

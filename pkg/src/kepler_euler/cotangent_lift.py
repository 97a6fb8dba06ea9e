"""Unit cotangent bundles over 2-D charts, the lifted metric, and the Reeb field.

A bundle point is ``(x1, x2, a)`` with the unit covector ``y = F(x, a)``.  Two
fiber conventions are available:

* ``"orthonormal"`` (default): ``y = L(x) (cos a, sin a)`` with ``g = L L^T``
  the Cholesky factor, so ``a`` is an angle in an orthonormal coframe.  For
  conformal metrics this is ``lambda (cos a, sin a)``.
* ``"coordinate"``: ``y`` is ``(cos a, sin a)`` rescaled to unit dual norm.

The two agree on conformally flat charts.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from . import autodiff as ad
from .chart_geometry import (Chart, ChartKind, MetricField, christoffel, christoffel_fn,
                             regime_metric, riemann, stereo_chart)
from .errors import OutOfDomain, TooSparse
from .exterior_calculus import (KForm, VectorField, VolumeForm, curl, divergence,
                                evaluate_on, exterior_derivative, flat, form_residual,
                                vector_residual, volume_of_contact)
from .kepler_hamiltonians import regularized_K
from .reports import VerificationReport, combine

FIBER_CONVENTIONS = ("orthonormal", "coordinate")


def bundle_chart(base: Chart) -> Chart:
    return Chart(ChartKind.BUNDLE, 3, base.c, base.pole, base)


def _cholesky2(g):
    l00 = ad.sqrt(g[0][0])
    l10 = g[1][0] / l00
    l11 = ad.sqrt(g[1][1] - l10 * l10)
    return [[l00, 0.0], [l10, l11]]


def fiber_fn(g: MetricField, convention: str = "orthonormal") -> Callable[[Sequence[Any]], list]:
    """``(x1, x2, a) -> y``, a unit covector for ``g``."""
    if convention == "orthonormal":
        def fn(p):
            L = _cholesky2(g.fn(p[:2]))
            return ad.matvec(L, [ad.cos(p[2]), ad.sin(p[2])])
    elif convention == "coordinate":
        def fn(p):
            u = [ad.cos(p[2]), ad.sin(p[2])]
            n2 = ad.dot(u, ad.matvec(ad.inv(g.fn(p[:2])), u))
            s = ad.sqrt(n2)
            return [u[0] / s, u[1] / s]
    else:
        raise ValueError(f"unknown fiber convention {convention!r}")
    return fn


def fiber_angle(g: MetricField, x, y, convention: str = "orthonormal") -> np.ndarray:
    """Inverse of the fiber map: the angle of the covectors ``y`` above ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if convention == "orthonormal":
        L = np.linalg.cholesky(g.eval(x))
        u = np.linalg.solve(L, y[..., None])[..., 0]
    else:
        u = y
    return np.mod(np.arctan2(u[:, 1], u[:, 0]), 2.0 * np.pi)


@dataclass(frozen=True)
class BundlePoint:
    base: np.ndarray
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "base", np.asarray(self.base, dtype=float).reshape(2))
        object.__setattr__(self, "alpha", float(np.mod(self.alpha, 2.0 * np.pi)))

    @property
    def array(self) -> np.ndarray:
        return np.array([self.base[0], self.base[1], self.alpha])

    def covector(self, g: MetricField, convention: str = "orthonormal") -> np.ndarray:
        g.chart.require(self.base)
        return np.asarray(ad.realize(fiber_fn(g, convention)(list(self.array))), dtype=float)


# the 4-D metric on T*M and its splitting ----------------------------------------------


def connection_terms(g: MetricField, x: np.ndarray, xdot: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``Gamma^k_ij xdot^i y_k`` so that ``nabla y = ydot - connection_terms``."""
    gam = ad.realize(christoffel_fn(g.fn)(list(np.asarray(x, dtype=float))))
    return np.einsum("kij,i,k->j", gam, xdot, y)


def split_horizontal_vertical(g: MetricField, xi: np.ndarray, W: np.ndarray
                              ) -> tuple[np.ndarray, np.ndarray]:
    """Split ``W = (xdot, ydot)`` at ``xi = (x, y)`` into horizontal and vertical parts.

    The horizontal part has the same base velocity and parallel covector
    variation; the vertical part has zero base velocity.
    """
    xi = np.asarray(xi, dtype=float)
    W = np.asarray(W, dtype=float)
    x, y = xi[:2], xi[2:]
    if not g.chart.domain_predicate(x):
        raise OutOfDomain(f"base point {x.tolist()} outside {g.chart.id}")
    xdot = W[:2]
    h = np.concatenate([xdot, connection_terms(g, x, xdot, y)])
    return h, W - h


def tstar_metric(g: MetricField) -> Callable[[Sequence[Any]], list]:
    """``(x, y) -> 4x4`` matrix of ``T*g(V, W) = g(d pi V, d pi W) + g*(nabla V, nabla W)``."""
    gamma = christoffel_fn(g.fn)

    def fn(p):
        x, y = p[:2], p[2:]
        gm = g.fn(x)
        gi = ad.inv(gm)
        gam = gamma(x)
        # nabla W = ydot - C xdot, with C[j][i] = Gamma^k_ij y_k
        C = [[ad.dot([gam[k][i][j] for k in range(2)], y) for i in range(2)] for j in range(2)]
        # as a linear map from W = (xdot, ydot): N = [-C | I]
        N = [[-C[j][0], -C[j][1], 1.0 if j == 0 else 0.0, 1.0 if j == 1 else 0.0] for j in range(2)]
        vert = ad.matmul(ad.transpose(N), ad.matmul(gi, N))
        out = [[vert[a][b] for b in range(4)] for a in range(4)]
        for a in range(2):
            for b in range(2):
                out[a][b] = out[a][b] + gm[a][b]
        return out

    return fn


# lift to the unit sphere bundle ------------------------------------------------------


@dataclass(frozen=True)
class LiftMetric(MetricField):
    base_metric: MetricField | None = None
    convention: str = "orthonormal"


def lift_metric_fn(g: MetricField, convention: str = "orthonormal") -> Callable[[Sequence[Any]], list]:
    F = fiber_fn(g, convention)
    gamma = christoffel_fn(g.fn)

    def fn(p):
        x = p[:2]
        gm = g.fn(x)
        gi = ad.inv(gm)
        y = F(p)
        dF = ad.jacobian(F, p)  # dF[m][j] = d_m y_j
        gam = gamma(x)
        # A[j][m]: covariant derivative of y along coordinate direction m of the bundle
        A = [[dF[m][j] - (ad.dot([gam[k][m][j] for k in range(2)], y) if m < 2 else 0.0)
              for m in range(3)] for j in range(2)]
        out = ad.matmul(ad.transpose(A), ad.matmul(gi, A))
        for a in range(2):
            for b in range(2):
                out[a][b] = out[a][b] + gm[a][b]
        return out

    return fn


def lift_metric(g: MetricField, convention: str = "orthonormal") -> LiftMetric:
    """The restriction of ``T*g`` to the unit cotangent bundle in ``(x1, x2, a)``."""
    return LiftMetric(bundle_chart(g.chart), lift_metric_fn(g, convention),
                      f"lift[{g.name}]", g, convention)


def liouville_form(g: MetricField, convention: str = "orthonormal") -> KForm:
    """``y dx`` pulled back to the bundle chart."""
    F = fiber_fn(g, convention)

    def fn(p):
        y = F(p)
        return [y[0], y[1], 0.0 * p[2]]

    return KForm(bundle_chart(g.chart), 1, fn)


def geodesic_field(g: MetricField, convention: str = "orthonormal",
                   hamiltonian: Callable[[Sequence[Any], Sequence[Any]], Any] | None = None
                   ) -> VectorField:
    """Hamiltonian field of ``K(x, y)`` (default ``|y|^2_{g*}/2``) in bundle coordinates.

    ``xdot = dK/dy``, ``ydot = -dK/dx``; the angle rate is the component of
    ``ydot - (dF/dx) xdot`` along ``dF/da`` in the dual metric.
    """
    F = fiber_fn(g, convention)
    if hamiltonian is None:
        def hamiltonian(x, y):
            return 0.5 * ad.dot(y, ad.matvec(ad.inv(g.fn(x)), y))

    def fn(p):
        x = [p[0], p[1]]
        y = F(p)
        dx = ad.jacobian(lambda s: hamiltonian(s, y), x)
        dy = ad.jacobian(lambda s: hamiltonian(x, s), y)
        xdot = dy
        ydot = [-dx[0], -dx[1]]
        dF = ad.jacobian(F, p)
        gi = ad.inv(g.fn(x))
        resid = [ydot[j] - dF[0][j] * xdot[0] - dF[1][j] * xdot[1] for j in range(2)]
        fa = dF[2]
        num = ad.dot(fa, ad.matvec(gi, resid))
        den = ad.dot(fa, ad.matvec(gi, fa))
        return [xdot[0], xdot[1], num / den]

    return VectorField(bundle_chart(g.chart), fn)


def reeb_field(c: float, kind: ChartKind = ChartKind.STEREO_PLANE, pole: str = "north",
               convention: str = "orthonormal") -> VectorField:
    """The Reeb field of the Liouville form on the unit bundle of the regime-``c`` metric.

    On the stereographic chart it is built from ``K_c`` itself, through the
    switch ``(q, p) = (y, -x)``; on the other charts from the geodesic Hamiltonian.
    """
    g = regime_metric(c, kind, pole)
    if kind is ChartKind.STEREO_PLANE:
        K = regularized_K(c)
        return geodesic_field(g, convention, lambda x, y: K.fn([y[0], y[1], -x[0], -x[1]]))
    return geodesic_field(g, convention)


def closed_form_field(c: float) -> VectorField:
    """``((|x|^2 - 2c)/2)(cos a, sin a) + (x1 sin a - x2 cos a) d/da`` on the stereo chart."""
    def fn(p):
        s = 0.5 * (p[0] * p[0] + p[1] * p[1] - 2.0 * c)
        ca, sa = ad.cos(p[2]), ad.sin(p[2])
        return [s * ca, s * sa, p[0] * sa - p[1] * ca]

    return VectorField(bundle_chart(stereo_chart(c)), fn)


def contact_volume(alpha: KForm) -> VolumeForm:
    return VolumeForm(volume_of_contact(alpha))


# checks ----------------------------------------------------------------------------------


def kernel_basis(alpha_vals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two independent vectors spanning ``ker alpha`` at each point (alpha_vals: (N, 3))."""
    a = np.atleast_2d(alpha_vals)
    e = np.zeros_like(a)
    idx = np.argmin(np.abs(a), axis=1)
    e[np.arange(len(a)), idx] = 1.0
    u = np.cross(a, e)
    v = np.cross(a, u)
    return u, v


def adapted_metric_check(alpha: KForm, R: VectorField, g: MetricField, points,
                         tol: float = 1e-8, regime_c=None) -> VerificationReport:
    """Orthogonality of ``R`` to ``ker alpha``, ``|R|_g = 1``, ``iota_R g = alpha``, ``curl R = R``."""
    pts = g.chart.require(points)
    G = g.eval(pts)
    Rv = np.atleast_2d(R.eval(pts))
    a = np.atleast_2d(alpha.eval(pts))
    u, v = kernel_basis(a)
    gR = np.einsum("nij,nj->ni", G, Rv)
    orth = np.maximum(np.abs(np.einsum("ni,ni->n", gR, u)) / np.linalg.norm(u, axis=1),
                      np.abs(np.einsum("ni,ni->n", gR, v)) / np.linalg.norm(v, axis=1))
    norm = np.einsum("ni,ni->n", gR, Rv) - 1.0
    iota = np.max(np.abs(gR - a), axis=1)
    mu = contact_volume(alpha)
    curl_res = vector_residual(curl(R, g, mu), R, pts)
    reeb = np.abs(np.einsum("ni,ni->n", a, Rv) - 1.0)
    reports = [
        VerificationReport.from_residuals("orthogonal_to_kernel", orth, tol, regime_c),
        VerificationReport.from_residuals("unit_norm", norm, tol, regime_c,
                                          details={"mean_norm2": float(np.mean(norm + 1.0))}),
        VerificationReport.from_residuals("iota_R_g_equals_alpha", iota, tol, regime_c),
        VerificationReport.from_residuals("curl_R_equals_R", curl_res, tol, regime_c),
        VerificationReport.from_residuals("alpha_of_R", reeb, tol, regime_c),
    ]
    return combine("adapted", reports, regime_c)


def _orthonormal_frames(G: np.ndarray) -> np.ndarray:
    """Columns of ``out[n]`` are ``G[n]``-orthonormal."""
    L = np.linalg.cholesky(G)
    eye = np.broadcast_to(np.eye(G.shape[-1]), G.shape)
    return np.swapaxes(np.linalg.solve(L, eye), -1, -2)


def lift_curvature_report(g: MetricField, points, expected: float | None = None,
                          tol: float = 1e-6, regime_c=None) -> VerificationReport:
    """Sectional curvatures of the lifted metric on the planes of an orthonormal frame
    and on random planes.  With ``expected`` the residual is ``|K - expected|``;
    otherwise the report records the spread and passes when it exceeds ``tol``."""
    lm = lift_metric(g) if not isinstance(g, LiftMetric) else g
    pts = lm.chart.require(points)
    Rm = riemann(lm, pts)
    G = lm.eval(pts)
    E = _orthonormal_frames(G)
    rng = np.random.default_rng(7)
    planes = [(E[:, :, i], E[:, :, j]) for i, j in ((0, 1), (0, 2), (1, 2))]
    for _ in range(3):
        planes.append((rng.normal(size=pts.shape), rng.normal(size=pts.shape)))
    ks = []
    for u, v in planes:
        num = np.einsum("nijkl,ni,nj,nk,nl->n", Rm, u, v, u, v)
        uu = np.einsum("nij,ni,nj->n", G, u, u)
        vv = np.einsum("nij,ni,nj->n", G, v, v)
        uv = np.einsum("nij,ni,nj->n", G, u, v)
        ks.append(num / (uu * vv - uv * uv))
    ks = np.stack(ks, axis=1)
    spread = float(np.max(ks) - np.min(ks))
    details = {"min_sectional": float(np.min(ks)), "max_sectional": float(np.max(ks)),
               "spread": spread, "mean_sectional": float(np.mean(ks))}
    if expected is not None:
        rep = VerificationReport.from_residuals("lift_curvature", ks - expected, tol, regime_c,
                                                details=dict(details, expected=expected))
        return rep
    rep = VerificationReport.from_residuals("lift_curvature_spread", [spread], np.inf, regime_c,
                                            notes=["nonconstant: pass iff spread exceeds tolerance"],
                                            details=details)
    rep.tolerance = tol
    rep.passed = spread > tol
    return rep


# geodesic classification ----------------------------------------------------------------


class GeodesicKind(enum.Enum):
    HORIZONTAL = "Horizontal"
    VERTICAL = "Vertical"
    OBLIQUE = "Oblique"


def _five_point(values: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order first derivative at interior samples ``2..N-3``."""
    v = values
    return (v[:-4] - 8.0 * v[1:-3] + 8.0 * v[3:-1] - v[4:]) / (12.0 * h)


def covariant_residual(g: MetricField, t: np.ndarray, states: np.ndarray,
                       convention: str = "orthonormal") -> dict[str, np.ndarray]:
    """Base speed, fiber speed and ``|nabla_{gamma'} theta|_{g*}`` along a sampled bundle curve."""
    t = np.asarray(t, dtype=float)
    states = np.asarray(states, dtype=float)
    if len(t) < 5:
        raise TooSparse("need at least 5 samples")
    steps = np.diff(t)
    h = float(np.mean(steps))
    if np.max(steps) > 1e-3 + 1e-12 or np.max(np.abs(steps - h)) > 1e-9 * max(1.0, h):
        raise TooSparse("classification needs a uniform grid with step <= 1e-3")
    x = states[:, :2]
    theta = ad.realize(fiber_fn(g, convention)(ad.as_point(states)), (len(t),))
    xdot = _five_point(x, h)
    thdot = _five_point(theta, h)
    xm, thm = x[2:-2], theta[2:-2]
    gam = christoffel(g, xm)
    nabla = thdot - np.einsum("nkij,ni,nk->nj", gam, xdot, thm)
    G = g.eval(xm)
    Gi = np.linalg.inv(G)
    return {
        "base_speed": np.sqrt(np.einsum("nij,ni,nj->n", G, xdot, xdot)),
        "fiber_speed": np.sqrt(np.einsum("nij,ni,nj->n", Gi, thdot, thdot)),
        "covariant": np.sqrt(np.einsum("nij,ni,nj->n", Gi, nabla, nabla)),
    }


def classify_geodesic(traj, g_base: MetricField, speed_tol: float = 1e-6,
                      residual_tol: float = 1e-6, convention: str = "orthonormal"
                      ) -> GeodesicKind:
    """Sasaki's trichotomy for a densely sampled bundle curve.

    ``traj`` is a Trajectory (uniform resampling is used when it carries an
    interpolant) or a pair ``(t, states)``.
    """
    if isinstance(traj, tuple):
        t, states = traj
    else:
        t, states = traj.uniform_samples(1e-3, g_base.chart)
    r = covariant_residual(g_base, t, states, convention)
    base = float(np.min(r["base_speed"]))
    if float(np.max(r["base_speed"])) < speed_tol:
        return GeodesicKind.VERTICAL if float(np.max(r["fiber_speed"])) > speed_tol else GeodesicKind.OBLIQUE
    if float(np.max(r["covariant"])) < residual_tol and base > speed_tol:
        return GeodesicKind.HORIZONTAL
    return GeodesicKind.OBLIQUE


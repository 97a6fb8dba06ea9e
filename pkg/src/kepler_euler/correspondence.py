"""Beltrami fields versus Reeb-like fields, with compact symmetry groups.

Direction one: a nonsingular Beltrami field ``X`` for ``(g, mu)`` gives the
contact form ``iota_X g``.  Direction two: a Reeb-like ``X = h R`` for ``alpha``
gives the metric ``(1/h) alpha (x) alpha + d alpha(., J .)`` and volume
``(1/h) alpha ^ d alpha``, for which ``curl X = X``.  Averaging over a compact
group action keeps every identity and makes the metric invariant.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Sequence

import numpy as np

from . import autodiff as ad
from .chart_geometry import Chart, MetricField, conformal_metric, sample_regime_base, stereo_chart
from .cotangent_lift import bundle_chart, lift_metric, liouville_form, reeb_field
from .errors import (DegenerateTwoForm, NotBeltrami, NotInvariant, NotReebLike,
                     QuadratureTooCoarse, VanishingField)
from .exterior_calculus import (KForm, ScalarField, VectorField, VolumeForm, contact_check,
                                curl, divergence, exterior_derivative, flat, interior_product,
                                vector_residual, wedge)
from .reports import VerificationReport, combine

DEFAULT_NODES = 64


class ActionKind(enum.Enum):
    CIRCLE = "Circle"
    FINITE_CYCLIC = "FiniteCyclic"
    CUSTOM = "Custom"


@dataclass(frozen=True)
class GroupAction:
    """A compact group acting on a chart, with a normalized quadrature of its Haar measure.

    ``act(sigma, p)`` must be AD-compatible in ``p``.  For the circle and cyclic
    kinds the parameter is an angle and the group law is addition.
    """

    kind: ActionKind
    chart: Chart
    act: Callable[[float, Sequence[Any]], list]
    quadrature: tuple[tuple[float, float], ...]
    order: int | None = None
    compose: Callable[[float, float], float] | None = None
    sampler: Callable[[int, np.random.Generator], np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self):
        total = sum(w for _, w in self.quadrature)
        if abs(total - 1.0) > 1e-14:
            raise ValueError(f"quadrature weights sum to {total}, not 1")

    @property
    def params(self) -> np.ndarray:
        return np.array([s for s, _ in self.quadrature])

    def apply(self, sigma: float, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return ad.realize(self.act(sigma, ad.as_point(pts)), (len(pts),))

    def tangent_act(self, sigma: float, points) -> np.ndarray:
        """Pushforward ``(N, n, n)`` with ``out[n, i, j] = d rho^i / d p^j``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        jac = ad.realize(ad.jacobian(lambda p: self.act(sigma, p), ad.as_point(pts)), (len(pts),))
        return np.swapaxes(jac, 1, 2)

    def product(self, s1: float, s2: float) -> float:
        if self.compose is not None:
            return self.compose(s1, s2)
        return s1 + s2

    def refined(self, nodes: int) -> GroupAction:
        """Same action with a circle quadrature of ``nodes`` points."""
        if self.kind is not ActionKind.CIRCLE:
            return self
        return replace(self, quadrature=circle_quadrature(nodes))

    def sample(self, n: int, seed: int = 0) -> np.ndarray:
        if self.sampler is None:
            raise ValueError("action has no sampler; pass points explicitly")
        return self.sampler(n, np.random.default_rng(seed))


def circle_quadrature(nodes: int = DEFAULT_NODES) -> tuple[tuple[float, float], ...]:
    """Trapezoid rule on the circle: exact for trigonometric polynomials of degree < nodes."""
    return tuple((2.0 * np.pi * j / nodes, 1.0 / nodes) for j in range(nodes))


def circle_action(chart: Chart, act, nodes: int = DEFAULT_NODES, sampler=None) -> GroupAction:
    return GroupAction(ActionKind.CIRCLE, chart, act, circle_quadrature(nodes), sampler=sampler)


def cyclic_action(chart: Chart, act, m: int, sampler=None) -> GroupAction:
    """``Z/m`` acting through ``act(2 pi j / m, p)``."""
    quad = tuple((2.0 * np.pi * j / m, 1.0 / m) for j in range(m))
    return GroupAction(ActionKind.FINITE_CYCLIC, chart, act, quad, order=m, sampler=sampler)


def custom_action(chart: Chart, act, elements: Sequence[float], compose=None,
                  weights: Sequence[float] | None = None, sampler=None) -> GroupAction:
    w = [1.0 / len(elements)] * len(elements) if weights is None else list(weights)
    return GroupAction(ActionKind.CUSTOM, chart, act, tuple(zip(elements, w)),
                       compose=compose, sampler=sampler)


def rotation_action(chart: Chart, nodes: int = DEFAULT_NODES) -> GroupAction:
    """SO(2) rotating the first two coordinates."""
    def act(s, p):
        cs, sn = np.cos(s), np.sin(s)
        return [cs * p[0] - sn * p[1], sn * p[0] + cs * p[1]] + list(p[2:])

    return circle_action(chart, act, nodes)


def kepler_symmetry_action(c: float, nodes: int = DEFAULT_NODES) -> GroupAction:
    """Rotations about the origin acting on ``(x1, x2, a)`` by ``(R_s x, a + s)``."""
    chart = bundle_chart(stereo_chart(c))

    def act(s, p):
        cs, sn = np.cos(s), np.sin(s)
        return [cs * p[0] - sn * p[1], sn * p[0] + cs * p[1], p[2] + s]

    def sampler(n, rng):
        return np.c_[sample_regime_base(c, n, rng), rng.uniform(0.0, 2.0 * np.pi, n)]

    return circle_action(chart, act, nodes, sampler)


def group_law_residual(action: GroupAction, points, pairs: Sequence[tuple[float, float]]) -> float:
    pts = np.atleast_2d(points)
    worst = 0.0
    for s1, s2 in pairs:
        lhs = action.apply(s1, action.apply(s2, pts))
        rhs = action.apply(action.product(s1, s2), pts)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


# pullbacks ------------------------------------------------------------------------------


def pullback_metric_fn(g_fn, action: GroupAction, sigma: float):
    def fn(p):
        q = action.act(sigma, p)
        D = ad.transpose(ad.jacobian(lambda s: action.act(sigma, s), p))  # D[i][j] = d q_i / d p_j
        return ad.matmul(ad.transpose(D), ad.matmul(g_fn(q), D))

    return fn


def pullback_form_fn(a_fn, action: GroupAction, sigma: float):
    """Pullback of a 1-form."""
    def fn(p):
        q = action.act(sigma, p)
        D = ad.transpose(ad.jacobian(lambda s: action.act(sigma, s), p))
        return ad.matvec(ad.transpose(D), a_fn(q))

    return fn


def metric_invariance_residual(g: MetricField, action: GroupAction, points,
                               sigmas: Sequence[float] | None = None) -> np.ndarray:
    """Frobenius norm of ``rho* g - g`` per point, maximized over ``sigmas``."""
    pts = np.atleast_2d(points)
    sigmas = action.params if sigmas is None else sigmas
    base = g.eval(pts)
    out = np.zeros(len(pts))
    for s in sigmas:
        pulled = ad.realize(pullback_metric_fn(g.fn, action, s)(ad.as_point(pts)), (len(pts),))
        out = np.maximum(out, np.linalg.norm(pulled - base, axis=(1, 2)))
    return out


def form_invariance_residual(a: KForm, action: GroupAction, points,
                             sigmas: Sequence[float] | None = None) -> np.ndarray:
    """Coefficient max-norm of ``rho* a - a`` for a 1-form."""
    pts = np.atleast_2d(points)
    sigmas = action.params if sigmas is None else sigmas
    base = a.eval(pts)
    out = np.zeros(len(pts))
    for s in sigmas:
        pulled = ad.realize(pullback_form_fn(a.fn, action, s)(ad.as_point(pts)), (len(pts),))
        out = np.maximum(out, np.max(np.abs(pulled - base), axis=1))
    return out


def vector_invariance_residual(X: VectorField, action: GroupAction, points,
                               sigmas: Sequence[float] | None = None) -> np.ndarray:
    """Euclidean norm of ``X(rho p) - D rho X(p)`` per point."""
    pts = np.atleast_2d(points)
    sigmas = action.params if sigmas is None else sigmas
    Xp = X.eval(pts)
    out = np.zeros(len(pts))
    for s in sigmas:
        moved = X.eval(action.apply(s, pts))
        pushed = np.einsum("nij,nj->ni", action.tangent_act(s, pts), Xp)
        out = np.maximum(out, np.linalg.norm(moved - pushed, axis=1))
    return out


# averaging -------------------------------------------------------------------------------


def _average_fn(g_fn, action: GroupAction):
    terms = [(pullback_metric_fn(g_fn, action, s), w) for s, w in action.quadrature]

    def fn(p):
        acc = None
        for t, w in terms:
            m = ad.tree_map(lambda v, w=w: w * v, t(p))
            acc = m if acc is None else [[a + b for a, b in zip(ra, rb)] for ra, rb in zip(acc, m)]
        return acc

    return fn


def haar_average_metric(g: MetricField, action: GroupAction, probe=None,
                        tol: float = 1e-9) -> MetricField:
    """``sum_s w_s rho_s* g``.

    With ``probe`` points (or an action sampler) a circle quadrature is compared
    against twice as many nodes; a difference above ``tol`` raises
    :class:`QuadratureTooCoarse`.
    """
    out = MetricField(g.chart, _average_fn(g.fn, action), f"avg[{g.name}]")
    if action.kind is ActionKind.CIRCLE:
        if probe is None and action.sampler is not None:
            probe = action.sample(16, seed=12345)
        if probe is not None:
            fine = MetricField(g.chart, _average_fn(g.fn, action.refined(2 * len(action.quadrature))))
            diff = float(np.max(np.abs(out.eval(probe) - fine.eval(probe))))
            if diff > tol:
                raise QuadratureTooCoarse(f"doubling nodes changed the average by {diff:.3e}")
    return out


# direction one: Beltrami -> contact --------------------------------------------------------


@dataclass
class BeltramiReport:
    eigenfactor: ScalarField
    curl_residual: float
    divergence_residual: float
    contact_residual: float
    passed: bool
    eigenfactor_range: tuple[float, float] = (np.nan, np.nan)
    tolerances: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.passed

    def to_dict(self) -> dict:
        return {"curl_residual": self.curl_residual, "divergence_residual": self.divergence_residual,
                "contact_residual": self.contact_residual, "pass": self.passed,
                "eigenfactor_min": self.eigenfactor_range[0],
                "eigenfactor_max": self.eigenfactor_range[1], "tolerances": dict(self.tolerances)}


def eigenfactor(X: VectorField, g: MetricField, mu: VolumeForm) -> ScalarField:
    """Pointwise least-squares ``f`` in ``curl X ~ f X``."""
    cx = curl(X, g, mu)

    def fn(p):
        a, b = cx.fn(p), X.fn(p)
        return ad.dot(a, b) / ad.dot(b, b)

    return ScalarField(X.chart, fn)


def beltrami_report(X: VectorField, g: MetricField, mu: VolumeForm, points,
                    curl_tol: float = 1e-8, div_tol: float = 1e-9,
                    contact_tol: float = 1e-9) -> BeltramiReport:
    pts = X.chart.require(points)
    f = eigenfactor(X, g, mu)
    fv = np.atleast_1d(f.eval(pts))
    cres = vector_residual(curl(X, g, mu), X.scaled(f), pts)
    dres = np.abs(np.atleast_1d(divergence(X, mu).eval(pts)))
    alpha = flat(X, g)
    ires = np.abs(np.atleast_2d(interior_product(X, exterior_derivative(alpha)).eval(pts)))
    cmax, dmax, imax = float(np.max(cres)), float(np.max(dres)), float(np.max(ires))
    ok = cmax < curl_tol and dmax < div_tol and imax < contact_tol and np.min(np.abs(fv)) > 1e-8
    return BeltramiReport(f, cmax, dmax, imax, bool(ok), (float(np.min(fv)), float(np.max(fv))),
                          {"curl": curl_tol, "divergence": div_tol, "contact": contact_tol})


def beltrami_to_contact(X: VectorField, g: MetricField, mu: VolumeForm, points,
                        tol: float = 1e-8) -> KForm:
    """``alpha = iota_X g`` for a nonsingular Beltrami field, verified at ``points``."""
    pts = X.chart.require(points)
    xv = np.atleast_2d(X.eval(pts))
    if np.min(np.linalg.norm(xv, axis=1)) < 1e-12:
        raise VanishingField("X vanishes at a sample")
    rep = beltrami_report(X, g, mu, pts, curl_tol=tol)
    lo, hi = rep.eigenfactor_range
    if rep.curl_residual > tol:
        raise NotBeltrami(f"curl X is not parallel to X (residual {rep.curl_residual:.3e})")
    if min(abs(lo), abs(hi)) < 1e-8 or lo * hi <= 0:
        raise NotBeltrami("the eigenfactor vanishes, so X is singular Beltrami")
    return flat(X, g)


# direction two: Reeb-like -> metric -------------------------------------------------------


def _two_form_matrix(c):
    c01, c02, c12 = c
    z = 0.0 * c01
    return [[z, c01, c02], [-c01, z, c12], [-c02, -c12, z]]


@dataclass(frozen=True)
class AlmostComplexStructure:
    """``J`` on ``ker alpha`` built from ``d alpha`` and an auxiliary metric, extended by zero
    along the auxiliary normal of ``ker alpha``."""

    alpha: KForm
    auxiliary: MetricField
    fn: Callable[[Sequence[Any]], list]

    def eval(self, points) -> np.ndarray:
        pts = np.atleast_2d(points)
        return ad.realize(self.fn(ad.as_point(pts)), (len(pts),))


def construct_J(alpha: KForm, auxiliary: MetricField | None = None, points=None) -> AlmostComplexStructure:
    """Polar part of the map ``A`` on ``ker alpha`` with ``aux(A u, v) = d alpha(u, v)``.

    On the 2-plane ``ker alpha`` the map ``A`` is skew for the auxiliary metric,
    so its polar part is ``A / kappa`` with ``kappa^2 = -tr(A^2)/2``, and
    ``d alpha(v, J v) = kappa |v|^2 > 0``.
    """
    from .chart_geometry import euclidean_metric

    if alpha.chart.dim != 3:
        raise ValueError("construct_J is implemented in dimension 3")
    B = auxiliary or euclidean_metric(3, alpha.chart)
    da = exterior_derivative(alpha)

    def parts(p):
        a = alpha.fn(p)
        W = _two_form_matrix(da.fn(p))
        Bi = ad.inv(B.fn(p))
        ba = ad.matvec(Bi, a)
        s = ad.dot(a, ba)
        P = [[(1.0 if i == j else 0.0) - ba[i] * a[j] / s for j in range(3)] for i in range(3)]
        A = ad.matmul(P, ad.matmul(Bi, W))
        A = [[-v for v in row] for row in A]
        M = ad.matmul(A, P)
        M2 = ad.matmul(M, M)
        k2 = -0.5 * (M2[0][0] + M2[1][1] + M2[2][2])
        return M, k2

    def fn(p):
        M, k2 = parts(p)
        kappa = ad.sqrt(k2)
        return [[v / kappa for v in row] for row in M]

    if points is not None:
        pts = alpha.chart.require(points)
        k2 = ad.realize(parts(ad.as_point(pts))[1], (len(pts),))
        if np.min(np.abs(k2)) < 1e-12:
            raise DegenerateTwoForm("d alpha degenerates on ker alpha")
    return AlmostComplexStructure(alpha, B, fn)


def j_invariants(J: AlmostComplexStructure, points, seed: int = 0) -> dict[str, float]:
    """``J^2 = -1`` on ``ker alpha`` and the minimum of ``d alpha(v, J v) / |v|^2``."""
    pts = np.atleast_2d(points)
    Jm = J.eval(pts)
    a = J.alpha.eval(pts)
    W = ad.realize(_two_form_matrix(exterior_derivative(J.alpha).fn(ad.as_point(pts))), (len(pts),))
    rng = np.random.default_rng(seed)
    v = rng.normal(size=pts.shape)
    v = v - (np.einsum("ni,ni->n", a, v) / np.einsum("ni,ni->n", a, a))[:, None] * a  # Euclidean proj
    jv = np.einsum("nij,nj->ni", Jm, v)
    jjv = np.einsum("nij,nj->ni", Jm, jv)
    sq = np.linalg.norm(jjv + v, axis=1) / np.linalg.norm(v, axis=1)
    tame = np.einsum("ni,nij,nj->n", v, W, jv) / np.einsum("ni,ni->n", v, v)
    in_kernel = np.abs(np.einsum("ni,ni->n", a, jv))
    return {"square_residual": float(np.max(sq)), "min_taming": float(np.min(tame)),
            "kernel_residual": float(np.max(in_kernel))}


def adapted_metric_fn(X: VectorField, alpha: KForm, J: AlmostComplexStructure, part: str = "full"):
    """``(1/h) a a^T + Pi^T W J Pi`` with ``Pi = I - R a^T`` and ``R = X / h``.

    ``part`` selects ``"full"``, ``"alpha"`` (first summand) or ``"j"`` (second).
    """
    da = exterior_derivative(alpha)

    def fn(p):
        a = alpha.fn(p)
        x = X.fn(p)
        h = ad.dot(a, x)
        out = [[0.0 * h] * 3 for _ in range(3)]
        if part in ("full", "alpha"):
            out = [[out[i][j] + a[i] * a[j] / h for j in range(3)] for i in range(3)]
        if part in ("full", "j"):
            R = [v / h for v in x]
            Pi = [[(1.0 if i == j else 0.0) - R[i] * a[j] for j in range(3)] for i in range(3)]
            W = _two_form_matrix(da.fn(p))
            WJ = ad.matmul(W, J.fn(p))
            S = ad.matmul(ad.transpose(Pi), ad.matmul(WJ, Pi))
            # symmetrize to remove rounding asymmetry
            S = [[0.5 * (S[i][j] + S[j][i]) for j in range(3)] for i in range(3)]
            out = [[out[i][j] + S[i][j] for j in range(3)] for i in range(3)]
        return out

    return fn


def reeb_to_metric(X: VectorField, alpha: KForm, action: GroupAction | None = None,
                   points=None, auxiliary: MetricField | None = None, average: str = "full",
                   invariance_tol: float = 1e-9) -> tuple[MetricField, VolumeForm]:
    """Metric and volume making the Reeb-like field ``X`` Beltrami with eigenvalue 1.

    ``average`` chooses whether the whole metric (``"full"``) or only its
    ``J`` part (``"j"``) is averaged over ``action``; both agree since the
    first summand is already invariant.
    """
    chart = X.chart
    if points is None and action is not None and action.sampler is not None:
        points = action.sample(32, seed=2024)
    if points is not None:
        pts = chart.require(points)
        h = np.atleast_1d(ad.realize(ad.dot(alpha.fn(ad.as_point(pts)), X.fn(ad.as_point(pts))),
                                     (len(pts),)))
        if np.min(h) <= 0:
            raise NotReebLike(f"alpha(X) has minimum {np.min(h):.3e} <= 0")
        if action is not None:
            ra = float(np.max(form_invariance_residual(alpha, action, pts)))
            rx = float(np.max(vector_invariance_residual(X, action, pts)))
            if max(ra, rx) > invariance_tol:
                raise NotInvariant(f"alpha or X not invariant (residuals {ra:.2e}, {rx:.2e})")
    J = construct_J(alpha, auxiliary, points)
    if action is None:
        gfn = adapted_metric_fn(X, alpha, J)
    elif average == "full":
        gfn = _average_fn(adapted_metric_fn(X, alpha, J), action)
    else:
        first = adapted_metric_fn(X, alpha, J, "alpha")
        second = _average_fn(adapted_metric_fn(X, alpha, J, "j"), action)

        def gfn(p):
            u, v = first(p), second(p)
            return [[a + b for a, b in zip(ru, rv)] for ru, rv in zip(u, v)]

    g = MetricField(chart, gfn, "reeb_adapted")
    da = exterior_derivative(alpha)
    vol = wedge(alpha, da)

    def mu_fn(p):
        h = ad.dot(alpha.fn(p), X.fn(p))
        return [vol.fn(p)[0] / h]

    return g, VolumeForm(KForm(chart, 3, mu_fn))


def reeb_to_metric_report(X: VectorField, alpha: KForm, g: MetricField, mu: VolumeForm,
                          points, regime_c=None) -> VerificationReport:
    pts = X.chart.require(points)
    iota = np.max(np.abs(np.atleast_2d(flat(X, g).eval(pts) - alpha.eval(pts))), axis=1)
    cres = vector_residual(curl(X, g, mu), X, pts)
    dres = np.abs(np.atleast_1d(divergence(X, mu).eval(pts)))
    eig = np.linalg.eigvalsh(g.eval(pts))[:, 0]
    reports = [
        VerificationReport.from_residuals("iota_X_g_equals_alpha", iota, 1e-9, regime_c),
        VerificationReport.from_residuals("curl_X_equals_X", cres, 1e-8, regime_c),
        VerificationReport.from_residuals("divergence_free", dres, 1e-9, regime_c),
    ]
    out = combine("reeb_to_metric", reports, regime_c)
    out.details["min_eigenvalue"] = float(np.min(eig))
    out.passed = out.passed and float(np.min(eig)) > 0
    return out


# the Kepler instance ------------------------------------------------------------------------


def kepler_invariance_report(c: float, points=None, nodes: int = 16,
                             tol: float = 1e-9) -> VerificationReport:
    """Invariance of ``X_c``, the Liouville form and the lifted metric under the circle action."""
    action = kepler_symmetry_action(c, nodes)
    pts = action.sample(200, seed=3) if points is None else np.atleast_2d(points)
    g = conformal_metric(c)
    reports = [
        VerificationReport.from_residuals("field", vector_invariance_residual(reeb_field(c), action, pts), tol, c),
        VerificationReport.from_residuals("liouville", form_invariance_residual(liouville_form(g), action, pts), tol, c),
        VerificationReport.from_residuals("lift_metric", metric_invariance_residual(lift_metric(g), action, pts), tol, c),
    ]
    return combine("kepler_invariance", reports, c)

"""Kepler Hamiltonian, its regularizations, and Hamiltonian vector fields.

Phase space is the chart ``(q1, q2, p1, p2)`` with symplectic form
``omega = dp ^ dq`` and the convention ``iota_X omega = -dH``, so that
``qdot = dH/dp`` and ``pdot = -dH/dq``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from . import autodiff as ad
from .chart_geometry import PHASE_CHART, Chart, MetricField, conformal_metric
from .errors import CollisionSingularity, EnergyBelowPotential, EnergyDriftExceeded
from .exterior_calculus import KForm, ScalarField, VectorField
from .reports import VerificationReport

COLLISION_EPS = 1e-8
DENSE_SAMPLES = 20000  # interpolant samples per trace before arc-length resampling


class HamiltonianLabel(enum.Enum):
    KEPLER = "Kepler"
    BAR_H = "BarH"
    K = "K"
    MECHANICAL = "Mechanical"
    CUSTOM = "Custom"


@dataclass(frozen=True)
class PhasePoint:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).reshape(2))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float).reshape(2))

    @property
    def state(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    @classmethod
    def from_state(cls, z) -> PhasePoint:
        z = np.asarray(z, dtype=float)
        return cls(z[:2], z[2:4])


@dataclass(frozen=True)
class Hamiltonian:
    fn: Callable[[Sequence[Any]], Any]
    label: HamiltonianLabel
    c: float | None = None
    chart: Chart = PHASE_CHART
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __call__(self, z):
        return self.fn(z)

    def eval(self, points) -> np.ndarray | float:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = ad.realize(self.fn(ad.as_point(pts)), (len(pts),))
        return float(out[0]) if np.ndim(points) == 1 else out

    def at(self, pt: PhasePoint) -> float:
        return self.eval(pt.state)

    @property
    def scalar(self) -> ScalarField:
        return ScalarField(self.chart, self.fn)


def _norm2(a, b):
    return a * a + b * b


def _guard_collision(q1, q2) -> None:
    r2 = np.asarray(ad.primal(q1)) ** 2 + np.asarray(ad.primal(q2)) ** 2
    if np.any(r2 < COLLISION_EPS**2):
        raise CollisionSingularity("|q| below collision threshold")


def kepler_hamiltonian() -> Hamiltonian:
    """``H = |p|^2/2 - 1/|q|``."""
    def fn(z):
        _guard_collision(z[0], z[1])
        return 0.5 * _norm2(z[2], z[3]) - 1.0 / ad.sqrt(_norm2(z[0], z[1]))

    return Hamiltonian(fn, HamiltonianLabel.KEPLER, name="kepler")


def regularized_K(c: float) -> Hamiltonian:
    """``K_c = |q|^2/2 * ((|p|^2 - 2c)/2)^2``; its flow on ``K_c = 1/2`` is the geodesic flow."""
    c = float(c)

    def fn(z):
        w = 0.5 * (_norm2(z[2], z[3]) - 2.0 * c)
        return 0.5 * _norm2(z[0], z[1]) * w * w

    return Hamiltonian(fn, HamiltonianLabel.K, c=c, name=f"K({c:g})")


def reparametrized(H: Hamiltonian, G: Callable[[Sequence[Any]], Any], c: float) -> Hamiltonian:
    """``Hbar = G (H - c)``: on ``Hbar = 0`` the flow is the ``H = c`` flow at speed ``G``."""
    c = float(c)
    return Hamiltonian(lambda z: G(z) * (H.fn(z) - c), HamiltonianLabel.BAR_H, c=c,
                       name=f"G*({H.name}-{c:g})")


def squared_shift(H: Hamiltonian, k: float) -> Hamiltonian:
    """``(H + k)^2 / 2``, whose flow is the ``H`` flow at constant speed ``H + k``."""
    k = float(k)

    def fn(z):
        s = H.fn(z) + k
        return 0.5 * s * s

    return Hamiltonian(fn, HamiltonianLabel.BAR_H, c=H.c, name=f"sq({H.name}+{k:g})",
                       meta={"shift": k})


def bar_H(c: float) -> Hamiltonian:
    """``|q| (H - c)`` for the Kepler ``H``; equals ``(|q|/2)(|p|^2 - 2c) - 1``."""
    c = float(c)

    def fn(z):
        return 0.5 * ad.sqrt(_norm2(z[0], z[1])) * (_norm2(z[2], z[3]) - 2.0 * c) - 1.0

    return Hamiltonian(fn, HamiltonianLabel.BAR_H, c=c, name=f"barH({c:g})")


def mechanical_hamiltonian(U: ScalarField | Callable, g: MetricField | None = None) -> Hamiltonian:
    """``H = |p|^2_{g*}/2 + U(q)``; ``g`` defaults to the Euclidean metric."""
    ufn = U.fn if isinstance(U, ScalarField) else U

    def fn(z):
        q, p = [z[0], z[1]], [z[2], z[3]]
        if g is None:
            kin = 0.5 * _norm2(p[0], p[1])
        else:
            kin = 0.5 * ad.dot(p, ad.matvec(ad.inv(g.fn(q)), p))
        return kin + ufn(q)

    return Hamiltonian(fn, HamiltonianLabel.MECHANICAL, name="mechanical")


def kepler_potential(q):
    _guard_collision(q[0], q[1])
    return -1.0 / ad.sqrt(_norm2(q[0], q[1]))


# symplectic structure ----------------------------------------------------------


def symplectic_switch(pt: PhasePoint) -> PhasePoint:
    """``(x, y) -> (q, p) = (y, -x)``; ``pt.q`` holds ``x`` and ``pt.p`` holds ``y``."""
    return PhasePoint(pt.p, -pt.q)


def switch_state(z):
    """Array form of the switch for states ``(..., 4)``."""
    z = np.asarray(z, dtype=float)
    return np.concatenate([z[..., 2:4], -z[..., 0:2]], axis=-1)


def switch_matrix() -> np.ndarray:
    m = np.zeros((4, 4))
    m[0, 2] = m[1, 3] = 1.0
    m[2, 0] = m[3, 1] = -1.0
    return m


def symplectic_matrix() -> np.ndarray:
    """``omega(u, v) = u^T W v`` for ``omega = dp1^dq1 + dp2^dq2`` in ``(q, p)``."""
    w = np.zeros((4, 4))
    w[2, 0] = w[3, 1] = 1.0
    w[0, 2] = w[1, 3] = -1.0
    return w


def hamiltonian_vector_field(H: Hamiltonian) -> VectorField:
    def fn(z):
        d = ad.jacobian(H.fn, z)
        return [d[2], d[3], -d[0], -d[1]]

    return VectorField(H.chart, fn)


def canonical_liouville() -> KForm:
    """``p dq`` on the phase chart."""
    return KForm(PHASE_CHART, 1, lambda z: [z[2], z[3], 0.0 * z[0], 0.0 * z[0]])


def switched_liouville() -> KForm:
    """``y dx`` written in ``(q, p) = (y, -x)``: ``-q dp``.

    This is the form whose Reeb field on ``K_c = 1/2`` is ``X_{K_c}``.
    """
    return KForm(PHASE_CHART, 1, lambda z: [0.0 * z[0], 0.0 * z[0], -z[0], -z[1]])


def dual_norm_switched(c: float, z) -> np.ndarray:
    """``|y|^2_{g*}/2`` for ``g = conformal_metric(c)`` at ``x = -p``, ``y = q``."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    x, y = -z[:, 2:4], z[:, 0:2]
    ginv = np.linalg.inv(conformal_metric(c).eval(x))
    return 0.5 * np.einsum("ni,nij,nj->n", y, ginv, y)


# checks ------------------------------------------------------------------------


def reparametrize_check(H: Hamiltonian, G: Callable[[Sequence[Any]], Any], c: float,
                        k: float, traj, tol: float = 1e-6,
                        energy_tol: float = 1e-9) -> VerificationReport:
    """Compare the trace of ``traj`` (an ``X_H`` curve on ``H = c``) with the ``G (H - c)`` flow.

    The reparametrized flow carries a clock ``dt/dtau = G`` and stops when the
    original time span is used up, so both traces cover the same arc.
    The squared variant ``(H + k)^2 / 2`` is checked to carry energy ``(c + k)^2 / 2``.
    """
    from .dynamics import IntegratorConfig, direct_positions, hausdorff, integrate_clocked

    h = np.atleast_1d(H.eval(traj.states))
    drift = float(np.max(np.abs(h - c)))
    if drift > 1e-6:
        raise EnergyDriftExceeded(f"trajectory is off the level H = {c} by {drift:.3e}")
    cfg = IntegratorConfig.from_meta(traj.meta)
    span = float(traj.t[-1] - traj.t[0])

    hbar = reparametrized(H, G, c)
    rep = integrate_clocked(hamiltonian_vector_field(hbar), traj.states[0], G, span, cfg)
    base = direct_positions(traj, DENSE_SAMPLES)
    d_bar = hausdorff(base, direct_positions(rep, DENSE_SAMPLES))

    sq = squared_shift(H, k)
    rep_sq = integrate_clocked(hamiltonian_vector_field(sq), traj.states[0],
                               lambda z: H.fn(z) + k, span, cfg)
    e_sq = np.atleast_1d(sq.eval(rep_sq.states))
    target = 0.5 * (c + k) ** 2
    d_sq = hausdorff(base, direct_positions(rep_sq, DENSE_SAMPLES))

    reports = [
        VerificationReport.from_residuals("reparametrized_trace", [d_bar], tol, c),
        VerificationReport.from_residuals("squared_shift_trace", [d_sq], tol, c),
        VerificationReport.from_residuals("squared_shift_energy", e_sq - target, energy_tol, c,
                                          details={"target": target}),
    ]
    from .reports import combine
    out = combine("reparametrize", reports, c)
    out.details["level_drift"] = drift
    return out


def sample_annulus(n: int, r_min: float, r_max: float, rng: np.random.Generator) -> np.ndarray:
    """Area-uniform annulus samples; the first two sit on the inner and outer circles."""
    u = rng.uniform(0.0, 1.0, n)
    r = np.sqrt(r_min**2 + u * (r_max**2 - r_min**2))
    if n >= 2:
        r[0], r[1] = r_min, r_max
    th = rng.uniform(0.0, 2.0 * np.pi, n)
    return np.stack([r * np.cos(th), r * np.sin(th)], axis=1)


def sample_level(U: ScalarField | Callable, g: MetricField | None, c: float,
                 qs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Points of ``{H = c}`` above the base samples ``qs`` with uniform momentum direction."""
    ufn = U.fn if isinstance(U, ScalarField) else U
    u = np.asarray(ufn(ad.as_point(qs)), dtype=float) * np.ones(len(qs))
    speed = np.sqrt(2.0 * (c - u))
    th = rng.uniform(0.0, 2.0 * np.pi, len(qs))
    dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    if g is None:
        p = dirs * speed[:, None]
    else:
        L = np.linalg.cholesky(g.eval(qs))
        p = np.einsum("nij,nj->ni", L, dirs) * speed[:, None]
    return np.concatenate([qs, p], axis=1)


def mechanical_contact_check(U: ScalarField | Callable, g: MetricField | None, c: float,
                             qs: np.ndarray | None = None, n: int = 1000, seed: int = 0,
                             r_min: float = 0.5, r_max: float = 5.0) -> VerificationReport:
    """Reeb-like check of ``X_H`` on ``H = c`` for ``H = |p|^2_{g*}/2 + U``.

    Reports the sampled minimum kinetic energy ``c - max U`` and the minimum of
    ``alpha(X_H)`` for ``alpha = p dq``, which equals ``|p|^2_{g*} = 2(c - U)``.
    Passes iff the minimum is positive.  Without ``qs`` the base is sampled on an
    annulus.
    """
    rng = np.random.default_rng(seed)
    if qs is None:
        qs = sample_annulus(n, r_min, r_max, rng)
    qs = np.atleast_2d(np.asarray(qs, dtype=float))
    ufn = U.fn if isinstance(U, ScalarField) else U
    u = np.asarray(ufn(ad.as_point(qs)), dtype=float) * np.ones(len(qs))
    max_u = float(np.max(u))
    if c <= max_u:
        raise EnergyBelowPotential(f"c = {c} does not exceed sampled max U = {max_u}")
    z = sample_level(U, g, c, qs, rng)
    H = mechanical_hamiltonian(U, g)
    X = hamiltonian_vector_field(H).eval(z)
    alpha_x = np.einsum("ni,ni->n", z[:, 2:4], X[:, 0:2])
    kinetic = c - u
    level = np.atleast_1d(H.eval(z)) - c
    rep = VerificationReport.from_residuals(
        "mechanical_contact", np.abs(level), 1e-9, c,
        notes=["alpha(X_H) evaluates to |p|^2 = 2(c - U); the kinetic energy c - U is reported alongside"],
        details={"min_kinetic": float(np.min(kinetic)), "max_potential": max_u,
                 "min_alpha_XH": float(np.min(alpha_x)),
                 "alpha_minus_twice_kinetic": float(np.max(np.abs(alpha_x - 2.0 * kinetic)))})
    rep.passed = bool(rep.passed and np.min(alpha_x) > 0 and np.min(kinetic) > 0)
    return rep

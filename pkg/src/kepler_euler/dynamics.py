"""Integration of the direct and regularized Kepler flows and orbit analysis.

The regularized flow lives on the unit cotangent bundle of the regime metric,
in bundle charts ``(x1, x2, a)`` augmented by the physical clock ``t`` with
``dt/dtau = |q|``.  An atlas of two base charts per regime covers the points
that correspond to collisions:

* ``c < 0``: stereographic charts from the north and the south pole;
* ``c = 0``: the stereographic plane and the involuted plane;
* ``c > 0``: the stereographic plane and the upper half-plane.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from . import autodiff as ad
from .chart_geometry import (PHASE_CHART, Chart, ChartKind, half_plane_chart, involuted_chart,
                             regime_metric, stereo_chart, transition_fn)
from .cotangent_lift import bundle_chart, fiber_angle, fiber_fn, reeb_field
from .errors import (ChartMismatch, Collision, OutOfDomain, StepSizeUnderflow, TooSparse)
from .exterior_calculus import VectorField
from .kepler_hamiltonians import (Hamiltonian, HamiltonianLabel, PhasePoint,
                                  hamiltonian_vector_field, kepler_hamiltonian, regularized_K)
from .reports import VerificationReport

RESAMPLE_POINTS = 2000


class Method(enum.Enum):
    EXPLICIT_RK4 = "ExplicitRK4"
    RK45 = "EmbeddedRK45Adaptive"
    IMPLICIT_MIDPOINT = "ImplicitMidpoint"


@dataclass(frozen=True)
class IntegratorConfig:
    method: Method = Method.RK45
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_step: float = math.inf
    collision_radius: float = 1e-3
    step: float = 1e-3  # fixed-step methods

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.collision_radius < 0:
            raise ValueError("collision_radius must be nonnegative")
        if self.step <= 0 or self.max_step <= 0:
            raise ValueError("step sizes must be positive")

    def to_meta(self) -> dict:
        return {"method": self.method.value, "abs_tol": self.abs_tol, "rel_tol": self.rel_tol,
                "max_step": self.max_step if math.isfinite(self.max_step) else None,
                "collision_radius": self.collision_radius, "step": self.step}

    @classmethod
    def from_meta(cls, meta: dict) -> IntegratorConfig:
        return cls(Method(meta.get("method", Method.RK45.value)),
                   meta.get("abs_tol", 1e-10), meta.get("rel_tol", 1e-10),
                   meta.get("max_step") or math.inf, meta.get("collision_radius", 1e-3),
                   meta.get("step", 1e-3))


@dataclass
class Segment:
    chart: Chart
    start: int
    stop: int  # exclusive
    t0: float
    t1: float
    sol: Callable[[np.ndarray], np.ndarray] | None = None  # t -> (d, len(t))


@dataclass
class Trajectory:
    chart: Chart
    t: np.ndarray
    states: np.ndarray
    segments: list[Segment] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        if not self.segments:
            self.segments = [Segment(self.chart, 0, len(self.t), float(self.t[0]), float(self.t[-1]))]

    def __len__(self) -> int:
        return len(self.t)

    def chart_of(self, i: int) -> Chart:
        for s in self.segments:
            if s.start <= i < s.stop:
                return s.chart
        return self.segments[-1].chart

    def segment_arrays(self, seg: Segment) -> tuple[np.ndarray, np.ndarray]:
        return self.t[seg.start:seg.stop], self.states[seg.start:seg.stop]

    def dense(self, seg: Segment, n: int) -> tuple[np.ndarray, np.ndarray]:
        """``n`` evenly spaced samples of a segment from its interpolant (or raw samples)."""
        if seg.sol is None or seg.t1 <= seg.t0:
            return self.segment_arrays(seg)
        ts = np.linspace(seg.t0, seg.t1, n)
        return ts, seg.sol(ts).T

    def uniform_samples(self, dt: float, base: Chart | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Uniform grid over the first segment (in chart ``base`` if given)."""
        for seg in self.segments:
            if base is not None and (seg.chart.base or seg.chart) != base:
                continue
            if seg.sol is None:
                return self.segment_arrays(seg)
            n = int(math.floor((seg.t1 - seg.t0) / dt)) + 1
            ts = seg.t0 + dt * np.arange(n)
            return ts, seg.sol(ts).T
        raise ChartMismatch("no segment in the requested chart")


class OrbitClass(enum.Enum):
    PERIODIC = "Periodic"
    ESCAPE = "Escape"
    COLLISION = "Collision"
    UNDETERMINED = "Undetermined"


@dataclass
class OrbitReport:
    classification: OrbitClass
    return_residual: float = math.inf
    period: float | None = None
    direction: Any = None
    time: float | None = None

    def to_dict(self) -> dict:
        d = self.direction
        if isinstance(d, np.ndarray):
            d = d.tolist()
        return {"classification": self.classification.value, "period": self.period,
                "direction": d, "time": self.time,
                "return_residual": self.return_residual if math.isfinite(self.return_residual) else None}


# core integration -----------------------------------------------------------------------


def _rhs(fn: Callable[[Sequence[Any]], list]) -> Callable[[float, np.ndarray], np.ndarray]:
    def f(t, z):
        return np.array([float(v) for v in fn([float(s) for s in z])])

    return f


def _event(fn, terminal=True, direction=0):
    def ev(t, z):
        return float(fn(z))

    ev.terminal = terminal
    ev.direction = direction
    return ev


def _default_collision(chart: Chart, cfg: IntegratorConfig):
    if chart == PHASE_CHART and cfg.collision_radius > 0:
        r = cfg.collision_radius
        return lambda z: math.hypot(z[0], z[1]) - r
    return None


def _domain_margin(chart: Chart):
    if chart.kind in (ChartKind.PHASE_4D, ChartKind.EUCLIDEAN):
        return None
    return lambda z: float(chart.margin([float(v) for v in z[:chart.dim]]))


def _fixed_step(f, z0, tmax, h, implicit: bool, stops):
    n = max(1, int(math.ceil(tmax / h - 1e-12)))
    h = tmax / n
    ts = [0.0]
    zs = [np.asarray(z0, dtype=float)]
    z = zs[0]
    for i in range(n):
        t = i * h
        if implicit:
            zn = z + h * f(t, z)
            for _ in range(100):
                nxt = z + h * f(t + 0.5 * h, 0.5 * (z + zn))
                done = np.max(np.abs(nxt - zn)) <= 1e-15 * (1.0 + np.max(np.abs(nxt)))
                zn = nxt
                if done:
                    break
        else:
            k1 = f(t, z)
            k2 = f(t + 0.5 * h, z + 0.5 * h * k1)
            k3 = f(t + 0.5 * h, z + 0.5 * h * k2)
            k4 = f(t + h, z + h * k3)
            zn = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        for name, g in stops:
            g0, g1 = g(z), g(zn)
            if g0 > 0 >= g1:
                frac = g0 / (g0 - g1)
                ts.append(t + frac * h)
                zs.append(z + frac * (zn - z))
                return np.array(ts), np.array(zs), name
        z = zn
        ts.append(t + h)
        zs.append(z)
    return np.array(ts), np.array(zs), None


def integrate(field: VectorField | Callable, z0, tmax: float, cfg: IntegratorConfig | None = None,
              chart: Chart | None = None, collision: Callable | None = None,
              events: Sequence[tuple[str, Callable]] = (), raise_on_stop: bool = True,
              t0: float = 0.0) -> Trajectory:
    """Integrate ``zdot = field(z)`` from ``z0`` over ``[t0, t0 + tmax]``.

    The trajectory stops at ``|q| < collision_radius`` (direct flows on the
    phase chart) and at the chart boundary; these raise :class:`Collision` and
    :class:`OutOfDomain` with the partial trajectory attached unless
    ``raise_on_stop`` is false.  Extra terminal ``events`` are ``(name, g)``
    pairs stopping where ``g`` crosses zero from above; the event name is stored
    in ``meta["stop"]``.
    """
    cfg = cfg or IntegratorConfig()
    fn = field.fn if isinstance(field, VectorField) else field
    chart = chart or (field.chart if isinstance(field, VectorField) else PHASE_CHART)
    z0 = np.asarray(z0, dtype=float)
    if chart.dim <= len(z0) and not chart.domain_predicate(z0[:chart.dim]):
        raise OutOfDomain(f"initial state {z0.tolist()} outside {chart.id}")
    collision = collision or _default_collision(chart, cfg)
    stops = []
    if collision is not None:
        stops.append(("collision", collision))
    margin = _domain_margin(chart)
    if margin is not None:
        stops.append(("domain", margin))
    stops.extend(events)
    f = _rhs(fn)
    sol = None
    if cfg.method is Method.RK45:
        evs = [_event(g, True, -1) for _, g in stops]
        res = solve_ivp(lambda t, z: f(t, z), (t0, t0 + tmax), z0, method="RK45",
                        rtol=cfg.rel_tol, atol=cfg.abs_tol, max_step=cfg.max_step,
                        dense_output=True, events=evs or None)
        if res.status == -1:
            raise StepSizeUnderflow(res.message)
        ts, zs = res.t, res.y.T
        sol = res.sol
        stop = None
        if res.status == 1:
            for (name, _), te, ye in zip(stops, res.t_events, res.y_events):
                if len(te):
                    stop = name
                    if ts[-1] < te[0]:
                        ts, zs = np.append(ts, te[0]), np.vstack([zs, ye[0]])
                    break
    else:
        ts, zs, stop = _fixed_step(f, z0, tmax, cfg.step, cfg.method is Method.IMPLICIT_MIDPOINT, stops)
        ts = ts + t0
    keep = np.concatenate([[True], np.diff(ts) > 0])
    ts, zs = ts[keep], zs[keep]
    traj = Trajectory(chart, ts, zs, [Segment(chart, 0, len(ts), float(ts[0]), float(ts[-1]), sol)],
                      dict(cfg.to_meta(), stop=stop))
    if raise_on_stop and stop == "collision":
        raise Collision(float(ts[-1]), trajectory=traj)
    if raise_on_stop and stop == "domain":
        raise OutOfDomain(f"left {chart.id} at t={ts[-1]:.6g}", trajectory=traj)
    return traj


def integrate_clocked(field: VectorField, z0, G: Callable, span: float,
                      cfg: IntegratorConfig | None = None, tau_max: float | None = None) -> Trajectory:
    """Integrate ``field`` with a clock ``dt/dtau = G(z)`` until the clock reaches ``span``."""
    n = len(z0)

    def fn(z):
        v = field.fn(z[:n])
        return list(v) + [G(z[:n])]

    zc = np.append(np.asarray(z0, dtype=float), 0.0)
    tau_max = tau_max or 1e3 * max(span, 1.0)
    traj = integrate(fn, zc, tau_max, cfg, chart=field.chart,
                     events=[("clock", lambda z: span - z[-1])], raise_on_stop=True)
    return traj


def direct_field() -> VectorField:
    return hamiltonian_vector_field(kepler_hamiltonian())


# the regularized atlas -------------------------------------------------------------------


@dataclass(frozen=True)
class RegularizedAtlas:
    c: float

    @property
    def k(self) -> float:
        return math.sqrt(2.0 * abs(self.c))

    @property
    def primary(self) -> Chart:
        return stereo_chart(self.c)

    @property
    def secondary(self) -> Chart:
        if self.c < 0:
            return stereo_chart(self.c, "south")
        if self.c == 0:
            return involuted_chart()
        return half_plane_chart(self.c)

    def metric(self, base: Chart):
        return regime_metric(self.c, base.kind, base.pole)

    def field(self, base: Chart) -> VectorField:
        return reeb_field(self.c, base.kind, base.pole)

    def switch_function(self, base: Chart) -> Callable:
        """Positive while the state should stay in ``base``."""
        k = self.k
        if base == self.primary:
            lim = 2.0 * k if self.c != 0 else 2.0
            return lambda z: lim - math.hypot(z[0], z[1])
        if self.c < 0:
            return lambda z: 2.0 * k - math.hypot(z[0], z[1])
        if self.c == 0:
            return lambda z: 2.0 - math.hypot(z[0], z[1])
        # half-plane: leave when the stereographic radius falls below 1.5 k
        T = transition_fn(base, self.primary)
        return lambda z: math.hypot(*T([z[0], z[1]])) - 1.5 * k

    def other(self, base: Chart) -> Chart:
        return self.secondary if base == self.primary else self.primary

    def transfer(self, src: Chart, dst: Chart, z: np.ndarray) -> np.ndarray:
        """Move a bundle state ``(x1, x2, a, ...)`` between base charts."""
        x = [float(z[0]), float(z[1])]
        T = transition_fn(src, dst)
        xn = [float(v) for v in T(x)]
        y = np.array(ad.realize(fiber_fn(self.metric(src))([x[0], x[1], float(z[2])])), dtype=float)
        Dt = ad.realize(ad.jacobian(T, x))  # Dt[i][j] = d xn_j / d x_i
        yn = np.linalg.solve(Dt, y)  # y_i = Dt[i][j] yn_j
        an = fiber_angle(self.metric(dst), xn, yn)[0]
        # keep the angle continuous where the charts agree in orientation
        out = np.array(z, dtype=float)
        out[0], out[1], out[2] = xn[0], xn[1], an
        return out

    def chart_for(self, x: np.ndarray) -> Chart:
        r = math.hypot(x[0], x[1])
        lim = 2.0 * self.k if self.c != 0 else 2.0
        return self.primary if r <= lim else self.secondary

    def to_stereo(self, base: Chart, states: np.ndarray) -> np.ndarray:
        """Stereographic base coordinates (possibly infinite at the collision point)."""
        if base == self.primary:
            return states[:, :2]
        T = transition_fn(base, self.primary)
        with np.errstate(divide="ignore", invalid="ignore"):
            return ad.realize(T(ad.as_point(states[:, :2])), (len(states),))

    def positions(self, base: Chart, states: np.ndarray) -> np.ndarray:
        """Kepler positions ``q = y`` (covector in stereographic coordinates)."""
        states = np.atleast_2d(states)
        x, a = states[:, :2], states[:, 2]
        u = np.stack([np.cos(a), np.sin(a)], axis=1)
        k = self.k
        if base == self.primary:
            lam = 2.0 / (np.sum(x * x, axis=1) - 2.0 * self.c)
            return lam[:, None] * u
        if base.kind is ChartKind.INVOLUTED_PLANE:
            r2 = np.sum(x * x, axis=1)
            return 0.5 * (r2[:, None] * u - 2.0 * x * np.einsum("ni,ni->n", x, u)[:, None])
        y = ad.realize(fiber_fn(self.metric(base))(ad.as_point(states[:, :3])), (len(states),))
        z = x[:, 0] + 1j * x[:, 1]
        if base.kind is ChartKind.STEREO_PLANE:  # south pole chart: x_s = k^2 / z
            D = -z * z / (k * k)
        else:  # half-plane: x_s = k (zeta + i) / (zeta - i)
            D = 1j * (z - 1j) ** 2 / (2.0 * k)
        q = np.conj(D) * (y[:, 0] + 1j * y[:, 1])
        return np.stack([q.real, q.imag], axis=1)

    def momenta(self, base: Chart, states: np.ndarray) -> np.ndarray:
        return -self.to_stereo(base, np.atleast_2d(states))

    def bundle_state(self, pt: PhasePoint) -> tuple[Chart, np.ndarray]:
        """Bundle chart and state ``(x1, x2, a)`` of a phase point on ``H = c``."""
        x = -pt.p
        y = pt.q
        prim = self.primary
        a = fiber_angle(self.metric(prim), x, y)[0]
        z = np.array([x[0], x[1], a])
        base = self.chart_for(x)
        if base != prim:
            z = self.transfer(prim, base, z)
        return base, z


def integrate_regularized(c: float, start, tau_max: float, cfg: IntegratorConfig | None = None,
                          clock_stop: float | None = None, max_switches: int = 100) -> Trajectory:
    """Integrate the Reeb field of regime ``c`` with chart switching and a physical clock.

    ``start`` is a :class:`PhasePoint` on ``H = c`` or a pair ``(base_chart, (x1, x2, a))``.
    States are ``(x1, x2, a, t)``; ``t`` is the Kepler time, ``dt/dtau = |q|``.
    """
    cfg = cfg or IntegratorConfig()
    atlas = RegularizedAtlas(float(c))
    if isinstance(start, PhasePoint):
        base, z = atlas.bundle_state(start)
    else:
        base, z = start
        z = np.asarray(z, dtype=float)
    z = np.append(z[:3], 0.0)
    tau, ts, zs, segs = 0.0, [], [], []
    for _ in range(max_switches + 1):
        X = atlas.field(base)

        def fn(s, X=X, base=base):
            v = X.fn(s[:3])
            q = atlas.positions(base, np.array([[float(w) for w in s[:3]]]))[0]
            return list(v) + [math.hypot(q[0], q[1])]

        events = [("switch", atlas.switch_function(base))]
        if clock_stop is not None:
            events.append(("clock", lambda s: clock_stop - s[3]))
        part = integrate(fn, z, tau_max - tau, cfg, chart=bundle_chart(base), events=events,
                         raise_on_stop=False, t0=tau)
        start_idx = len(ts)
        ts.extend(part.t.tolist())
        zs.extend(part.states.tolist())
        seg = part.segments[0]
        segs.append(Segment(bundle_chart(base), start_idx, len(ts), seg.t0, seg.t1, seg.sol))
        tau = float(part.t[-1])
        stop = part.meta.get("stop")
        if stop == "domain":
            traj = _assemble(atlas, ts, zs, segs, cfg, stop)
            raise OutOfDomain(f"left {base.id} at tau={tau:.6g}", trajectory=traj)
        if stop != "switch" or tau >= tau_max:
            return _assemble(atlas, ts, zs, segs, cfg, stop)
        nxt = atlas.other(base)
        z = atlas.transfer(base, nxt, part.states[-1])
        base = nxt
        # the new segment starts at the same tau; nudge the bookkeeping forward
        ts.pop()
        zs.pop()
        segs[-1].stop -= 1
    return _assemble(atlas, ts, zs, segs, cfg, "max_switches")


def _assemble(atlas, ts, zs, segs, cfg, stop) -> Trajectory:
    ts = np.array(ts)
    zs = np.array(zs)
    keep = np.concatenate([[True], np.diff(ts) > 0])
    if not np.all(keep):
        # remap segment indices after dropping duplicates
        idx = np.cumsum(keep) - 1
        for s in segs:
            s.start = int(idx[min(s.start, len(idx) - 1)])
            s.stop = int(idx[s.stop - 1]) + 1
        ts, zs = ts[keep], zs[keep]
    meta = dict(cfg.to_meta(), stop=stop, regime_c=atlas.c,
                switches=len(segs) - 1, charts=[s.chart.id for s in segs])
    return Trajectory(segs[0].chart, ts, zs, segs, meta)


def regularized_positions(traj: Trajectory, dense: int | None = None) -> np.ndarray:
    """Kepler positions along a regularized trajectory (dense resampling optional)."""
    atlas = RegularizedAtlas(traj.meta["regime_c"])
    out = []
    for seg in traj.segments:
        if dense:
            n = max(2, int(dense * (seg.t1 - seg.t0) / max(traj.t[-1] - traj.t[0], 1e-300)) + 2)
            _, st = traj.dense(seg, n)
        else:
            _, st = traj.segment_arrays(seg)
        if len(st):
            out.append(atlas.positions(seg.chart.base, st))
    return np.vstack(out)


def direct_positions(traj: Trajectory, dense: int | None = None) -> np.ndarray:
    if dense:
        return np.vstack([traj.dense(s, dense)[1][:, :2] for s in traj.segments])
    return traj.states[:, :2]


# comparison --------------------------------------------------------------------------------


def resample_by_arclength(points: np.ndarray, n: int = RESAMPLE_POINTS) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0:
        return np.repeat(pts[:1], n, axis=0)
    keep = np.concatenate([[True], seg > 0])
    s, pts = s[keep], pts[keep]
    target = np.linspace(0.0, s[-1], n)
    return np.stack([np.interp(target, s, pts[:, i]) for i in range(pts.shape[1])], axis=1)


def _point_to_polyline(P: np.ndarray, Q: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Distance from each point of ``P`` to the polyline through ``Q``."""
    a, b = Q[:-1], Q[1:]
    d = b - a
    dd = np.maximum(np.einsum("ij,ij->i", d, d), 1e-300)
    out = np.empty(len(P))
    for i in range(0, len(P), chunk):
        p = P[i:i + chunk, None, :]
        t = np.clip(np.einsum("nmj,mj->nm", p - a[None], d) / dd, 0.0, 1.0)
        proj = a[None] + t[..., None] * d[None]
        out[i:i + chunk] = np.min(np.linalg.norm(p - proj, axis=2), axis=1)
    return out


def hausdorff(A: np.ndarray, B: np.ndarray, n: int = RESAMPLE_POINTS) -> float:
    """Symmetric Hausdorff distance between two traces after arc-length resampling."""
    ra, rb = resample_by_arclength(A, n), resample_by_arclength(B, n)
    return float(max(np.max(_point_to_polyline(ra, rb)), np.max(_point_to_polyline(rb, ra))))


def default_window(c: float) -> float:
    """One Kepler period for ``c < 0``; a fixed window otherwise."""
    if c < 0:
        return 2.0 * math.pi / (-2.0 * c) ** 1.5
    return 10.0


def compare_regularized(c: float, z0: PhasePoint, cfg: IntegratorConfig | None = None,
                        tmax: float | None = None, tol: float = 1e-5, window_tol: float = 1e-4,
                        dense: int = 20000) -> VerificationReport:
    """Hausdorff distance between direct and regularized position traces on ``H = c``.

    If the direct flow collides, both traces are cut at the collision time
    (windowed comparison, tolerance ``window_tol``) and the regularized flow is
    continued past it to show that it passes through.
    """
    cfg = cfg or IntegratorConfig()
    H = kepler_hamiltonian()
    level = abs(H.at(z0) - c)
    if level > 1e-10:
        raise ValueError(f"initial state has energy {H.at(z0):.12g}, not c = {c}")
    tmax = default_window(c) if tmax is None else tmax
    windowed = False
    collision_time = None
    try:
        direct = integrate(direct_field(), z0.state, tmax, cfg)
    except Collision as exc:
        direct = exc.trajectory
        windowed = True
        collision_time = exc.time
    t_end = float(direct.t[-1])
    reg = integrate_regularized(c, z0, tau_max=1e3 * max(t_end, 1.0), cfg=cfg, clock_stop=t_end)
    qa = direct_positions(direct, dense)
    qb = regularized_positions(reg, dense)
    dist = hausdorff(qa, qb)
    details = {"hausdorff": dist, "direct_end_time": t_end, "windowed": windowed,
               "regularized_tau": float(reg.t[-1]), "chart_switches": reg.meta["switches"]}
    notes = []
    if windowed:
        cont = integrate_regularized(c, z0, tau_max=1e3 * max(t_end, 1.0), cfg=cfg,
                                     clock_stop=t_end + 0.1 * max(t_end, 1.0))
        details.update(collision_time=collision_time, continued_clock=float(cont.states[-1, 3]),
                       continued_past_collision=bool(cont.states[-1, 3] > t_end))
        notes.append("direct flow collided; comparison windowed at the collision time")
    rep = VerificationReport.from_residuals("regularization_equivalence", [dist],
                                            window_tol if windowed else tol, c,
                                            notes=notes, details=details)
    if windowed:
        rep.passed = rep.passed and details["continued_past_collision"]
    return rep


# orbit analysis ------------------------------------------------------------------------------


def _state_distance(chart: Chart, states: np.ndarray, ref: np.ndarray) -> np.ndarray:
    d = states[:, :chart.dim] - ref[:chart.dim]
    if chart.kind is ChartKind.BUNDLE:
        d[:, 2] = np.angle(np.exp(1j * d[:, 2]))
    return np.linalg.norm(d, axis=1)


def _to_chart_fn(traj: Trajectory, seg: Segment, chart: Chart):
    """Map states of ``seg`` into ``chart`` (regularized atlases only); NaN where undefined."""
    if seg.chart == chart:
        return lambda st: st
    if "regime_c" not in traj.meta or chart.kind is not ChartKind.BUNDLE:
        return None
    atlas = RegularizedAtlas(traj.meta["regime_c"])

    def fn(st):
        out = np.full_like(st, np.nan)
        for i, z in enumerate(st):
            with np.errstate(all="ignore"):
                try:
                    w = atlas.transfer(seg.chart.base, chart.base, z)
                except (ZeroDivisionError, np.linalg.LinAlgError, ValueError):
                    continue
            if np.all(np.isfinite(w[:3])) and chart.domain_predicate(w[:3]):
                out[i] = w
        return out

    return fn


def detect_periodicity(traj: Trajectory, tol: float = 1e-6, leave: float | None = None
                       ) -> OrbitReport:
    """First return to the initial state within ``tol`` (angles compared on the circle).

    Distances are measured in the initial chart; samples of regularized
    trajectories in other charts are mapped into it where it is defined.  A
    candidate return is a local minimum of the distance after the orbit has left
    the ``leave`` neighbourhood; its time is refined on the dense interpolant.
    """
    if len(traj) < 2:
        raise TooSparse("need at least two samples")
    chart = traj.segments[0].chart
    ref = traj.states[0]
    leave = leave if leave is not None else max(1e3 * tol, 1e-3)
    left = False
    for s in traj.segments:
        to_init = _to_chart_fn(traj, s, chart)
        if to_init is None:
            continue
        ts, st = traj.segment_arrays(s)
        d = _state_distance(chart, to_init(st), ref)
        d = np.where(np.isfinite(d), d, np.inf)
        for i in range(1, len(d) - 1):
            if not left:
                left = d[i] > leave
                continue
            if np.isfinite(d[i]) and d[i] <= d[i - 1] and d[i] <= d[i + 1]:
                lo, hi = ts[i - 1], ts[i + 1]
                if s.sol is not None:
                    def f(t, s=s, to_init=to_init):
                        v = _state_distance(chart, to_init(s.sol(np.array([t])).T), ref)[0]
                        return float(v) if np.isfinite(v) else 1e300
                    r = minimize_scalar(f, bounds=(lo, hi), method="bounded",
                                        options={"xatol": 1e-13})
                    t_ret, res = float(r.x), float(r.fun)
                else:
                    t_ret, res = float(ts[i]), float(d[i])
                if res < tol:
                    return OrbitReport(OrbitClass.PERIODIC, res, period=t_ret - float(traj.t[0]))
    return _escape_or_undetermined(traj)


def _escape_or_undetermined(traj: Trajectory) -> OrbitReport:
    seg = traj.segments[-1]
    chart = seg.chart.base or seg.chart
    ts, st = traj.dense(seg, 200)
    if len(ts) < 8:
        return OrbitReport(OrbitClass.UNDETERMINED)
    tail = st[len(st) * 3 // 4:]
    if chart.kind is ChartKind.HALF_PLANE:
        dy = np.diff(tail[:, 1])
        if np.all(dy < 0):
            return OrbitReport(OrbitClass.ESCAPE, direction="y->0")
        if np.all(dy > 0):
            return OrbitReport(OrbitClass.ESCAPE, direction="y->inf")
        return OrbitReport(OrbitClass.UNDETERMINED)
    r = np.linalg.norm(tail[:, :2], axis=1)
    if np.all(np.diff(r) > 0) and r[-1] > 1.5 * np.linalg.norm(st[0, :2]):
        v = tail[-1, :2] - tail[-2, :2]
        return OrbitReport(OrbitClass.ESCAPE, direction=v / np.linalg.norm(v))
    return OrbitReport(OrbitClass.UNDETERMINED)


def energy_drift_report(traj: Trajectory, H: Hamiltonian) -> float:
    """``max |H(z(t)) - H(z(0))|``.

    Regularized bundle trajectories are mapped back to ``(q, p)`` through the
    switch and evaluated with ``K_c``; samples at the collision point
    (infinite momentum) are skipped.
    """
    if traj.chart == PHASE_CHART:
        h = np.atleast_1d(H.eval(traj.states[:, :4]))
        return float(np.max(np.abs(h - h[0])))
    if traj.chart.kind is ChartKind.BUNDLE and H.label is HamiltonianLabel.K:
        atlas = RegularizedAtlas(traj.meta["regime_c"])
        if H.c != atlas.c:
            raise ChartMismatch(f"K({H.c}) does not match regime {atlas.c}")
        vals = []
        for seg in traj.segments:
            _, st = traj.segment_arrays(seg)
            if not len(st):
                continue
            q = atlas.positions(seg.chart.base, st)
            p = atlas.momenta(seg.chart.base, st)
            ok = np.all(np.isfinite(p), axis=1) & (np.linalg.norm(p, axis=1) < 1e6)
            if np.any(ok):
                vals.append(np.atleast_1d(H.eval(np.concatenate([q[ok], p[ok]], axis=1))))
        v = np.concatenate(vals)
        return float(np.max(np.abs(v - 0.5)))
    raise ChartMismatch(f"cannot evaluate {H.name} on {traj.chart.id}")


def unit_covector_residual(traj: Trajectory) -> float:
    """``max | |y|_{g*} - 1 |`` over all samples, chart by chart."""
    atlas = RegularizedAtlas(traj.meta["regime_c"])
    worst = 0.0
    for seg in traj.segments:
        _, st = traj.segment_arrays(seg)
        if not len(st):
            continue
        g = atlas.metric(seg.chart.base)
        y = ad.realize(fiber_fn(g)(ad.as_point(st[:, :3])), (len(st),))
        gi = np.linalg.inv(g.eval(st[:, :2]))
        n = np.sqrt(np.einsum("ni,nij,nj->n", y, gi, y))
        worst = max(worst, float(np.max(np.abs(n - 1.0))))
    return worst


def half_plane_asymptotics(traj: Trajectory) -> dict:
    """Peak of ``y`` and strict monotonicity after it, for half-plane trajectories."""
    if (traj.chart.base or traj.chart).kind is not ChartKind.HALF_PLANE:
        raise ChartMismatch("expected a half-plane trajectory")
    y = traj.states[:, 1]
    i = int(np.argmax(y))
    after = np.diff(y[i:])
    if i == len(y) - 1:
        return {"peak_index": i, "monotone_after": float(traj.t[i]), "limit": "inf",
                "monotone": bool(np.all(np.diff(y) > 0))}
    return {"peak_index": i, "monotone_after": float(traj.t[i]),
            "limit": "0" if after[-1] < 0 else "inf",
            "monotone": bool(np.all(after < 0) or np.all(after > 0)),
            "final_ratio": float(y[-1] / y[i])}


def circular_state(r: float = 1.0) -> PhasePoint:
    """Circular orbit of radius ``r`` (energy ``-1/(2r)``)."""
    return PhasePoint([r, 0.0], [0.0, 1.0 / math.sqrt(r)])


def state_on_level(c: float, q, direction) -> PhasePoint:
    """Phase point at ``q`` on ``H = c`` with momentum along ``direction``."""
    q = np.asarray(q, dtype=float)
    speed2 = 2.0 * (c + 1.0 / np.linalg.norm(q))
    if speed2 < 0:
        raise ValueError("position not reachable on this energy level")
    d = np.asarray(direction, dtype=float)
    nd = np.linalg.norm(d)
    p = np.zeros(2) if nd == 0 else d / nd * math.sqrt(speed2)
    return PhasePoint(q, p)

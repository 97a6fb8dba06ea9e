"""Command-line entry point.

Subcommands: ``verify``, ``simulate``, ``compare``, ``average-metric`` and
``classify``.  Every command accepts ``--config FILE`` (JSON, keys named like
the long options with dashes replaced by underscores); explicit flags override
the file.  Relative output paths are resolved against ``$KEPLER_EULER_OUTPUT_DIR``
when it is set.

Exit codes: 0 success, 1 check or integration failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .chart_geometry import (ChartKind, MetricField, conformal_metric, gauss_curvature,
                             sample_regime_base, stereo_chart)
from .correspondence import (haar_average_metric, kepler_invariance_report,
                             kepler_symmetry_action, metric_invariance_residual, reeb_to_metric,
                             reeb_to_metric_report, form_invariance_residual)
from .cotangent_lift import (GeodesicKind, adapted_metric_check, classify_geodesic,
                             contact_volume, lift_curvature_report, lift_metric, liouville_form,
                             reeb_field)
from .dynamics import (IntegratorConfig, Method, OrbitClass, OrbitReport, compare_regularized,
                       detect_periodicity, direct_field, energy_drift_report, integrate,
                       integrate_regularized)
from .errors import Collision, KeplerEulerError
from .exterior_calculus import contact_check, curl, divergence, flat, vector_residual
from .kepler_hamiltonians import PhasePoint, kepler_hamiltonian, regularized_K
from .reports import VerificationReport, combine

VERSION = f"v{__version__}"
CHECKS = ("beltrami", "contact", "adapted", "divergence", "curvature", "equivariance")
OUTPUT_ENV = "KEPLER_EULER_OUTPUT_DIR"

# Formula discrepancies carried in every verification report.
DISCREPANCY_NOTES = [
    "stereographic field: the angle coefficient derived from K_c is x1 sin(a) - x2 cos(a); "
    "a transcription with x2 sin(a) does not satisfy curl X = X",
    "half-plane field: the derived angle rate is -sqrt(2c) cos(a)",
    "Reeb field sign: derived from iota_X omega = -dH with omega = dp^dq, giving alpha(R) = +1",
]

DEFAULTS: dict[str, dict[str, Any]] = {
    "verify": {"c": None, "all": False, "which": None, "samples": 1000, "seed": 0, "out": None},
    "simulate": {"c": None, "direct": False, "q": None, "p": None, "x": None, "alpha": None,
                 "tmax": 10.0, "out": "trajectory.csv", "detect_period": False,
                 "method": Method.RK45.value, "tol": 1e-10, "step": 1e-3,
                 "collision_radius": 1e-3},
    "compare": {"c": None, "q": None, "p": None, "tmax": None, "tol": 1e-10,
                "collision_radius": 1e-3, "out": None},
    "average-metric": {"c": None, "nodes": 64, "samples": 32, "seed": 0, "aux": "1,2,1",
                       "out": None},
    "classify": {"c": None, "x": None, "alpha": None, "tmax": 1.0, "fiber_rate": 0.0,
                 "freeze_base": False, "out": None},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _finite_float(text: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"not a finite number: {text!r}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kepler-euler", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=VERSION)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    def add(name, help_text):
        sp = sub.add_parser(name, help=help_text, description=help_text, formatter_class=fmt,
                            argument_default=argparse.SUPPRESS)
        sp.add_argument("--config", help="JSON file of option values")
        return sp

    v = add("verify", "run theorem-level checks on an energy level")
    v.add_argument("--c", type=_finite_float, help="energy level (required)")
    v.add_argument("--all", action="store_true", help="run every check")
    v.add_argument("--which", help=f"comma-separated subset of {','.join(CHECKS)}")
    v.add_argument("--samples", type=int, help="sample count (default 1000)")
    v.add_argument("--seed", type=int, help="random seed (default 0)")
    v.add_argument("--out", help="write the JSON report here as well as to stdout")

    s = add("simulate", "integrate the direct or the regularized flow and write CSV")
    s.add_argument("--c", type=_finite_float, help="energy level of the regularized flow")
    s.add_argument("--direct", action="store_true", help="integrate the direct Kepler flow")
    s.add_argument("--q", type=_finite_float, nargs=2, help="initial position")
    s.add_argument("--p", type=_finite_float, nargs=2, help="initial momentum")
    s.add_argument("--x", type=_finite_float, nargs=2, help="initial bundle base point")
    s.add_argument("--alpha", type=_finite_float, help="initial fiber angle")
    s.add_argument("--tmax", type=_finite_float, help="integration time (default 10)")
    s.add_argument("--out", help="CSV path (default trajectory.csv); sidecar JSON alongside")
    s.add_argument("--detect-period", dest="detect_period", action="store_true",
                   help="classify the orbit")
    s.add_argument("--method", choices=[m.value for m in Method],
                   help=f"integrator (default {Method.RK45.value})")
    s.add_argument("--tol", type=_finite_float, help="absolute and relative tolerance (default 1e-10)")
    s.add_argument("--step", type=_finite_float, help="fixed step (default 1e-3)")
    s.add_argument("--collision-radius", dest="collision_radius", type=_finite_float,
                   help="direct-flow collision radius (default 1e-3)")

    c = add("compare", "compare direct and regularized position traces")
    c.add_argument("--c", type=_finite_float, help="energy level (required)")
    c.add_argument("--q", type=_finite_float, nargs=2, help="initial position (required)")
    c.add_argument("--p", type=_finite_float, nargs=2, help="initial momentum (required)")
    c.add_argument("--tmax", type=_finite_float, help="time window (default: one period, or 10)")
    c.add_argument("--tol", type=_finite_float, help="integrator tolerance (default 1e-10)")
    c.add_argument("--collision-radius", dest="collision_radius", type=_finite_float,
                   help="direct-flow collision radius (default 1e-3)")
    c.add_argument("--out", help="write the JSON report here as well")

    a = add("average-metric", "Haar-average the metric reconstructed from the Reeb field")
    a.add_argument("--c", type=_finite_float, help="energy level (required)")
    a.add_argument("--nodes", type=int, help="circle quadrature nodes (default 64)")
    a.add_argument("--samples", type=int, help="probe points (default 32)")
    a.add_argument("--seed", type=int, help="random seed (default 0)")
    a.add_argument("--aux", help="diagonal of the auxiliary metric (default 1,2,1)")
    a.add_argument("--out", help="write the JSON report here as well")

    k = add("classify", "classify a bundle curve as horizontal, vertical or oblique")
    k.add_argument("--c", type=_finite_float, help="energy level (required)")
    k.add_argument("--x", type=_finite_float, nargs=2, help="base point (required)")
    k.add_argument("--alpha", type=_finite_float, help="fiber angle (required)")
    k.add_argument("--tmax", type=_finite_float, help="curve length in flow time (default 1)")
    k.add_argument("--fiber-rate", dest="fiber_rate", type=_finite_float,
                   help="extra constant angular drift added to the flow curve (default 0)")
    k.add_argument("--freeze-base", dest="freeze_base", action="store_true",
                   help="hold the base point fixed and rotate the fiber")
    k.add_argument("--out", help="write the JSON report here as well")
    return p


def resolve_config(command: str, ns: argparse.Namespace) -> dict[str, Any]:
    cfg = dict(DEFAULTS[command])
    given = vars(ns)
    if "config" in given:
        try:
            data = json.loads(Path(given["config"]).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError("config must be a JSON object")
        unknown = set(data) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(data)
    for key, val in given.items():
        if key not in ("command", "config"):
            cfg[key] = val
    return cfg


def _output_path(path: str | None) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    base = os.environ.get(OUTPUT_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _clean(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(obj: Any) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _emit(report: dict, out: str | None) -> None:
    text = dump_json(report)
    sys.stdout.write(text)
    path = _output_path(out)
    if path is not None:
        path.write_text(text, newline="\n")


def _require(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise UsageError(f"missing required option(s): {', '.join('--' + k for k in missing)}")


def _number(cfg: dict, key: str) -> float:
    try:
        v = float(cfg[key])
    except (TypeError, ValueError) as exc:
        raise UsageError(f"--{key} must be a number") from exc
    if not math.isfinite(v):
        raise UsageError(f"--{key} must be finite")
    return v


# verification suite ------------------------------------------------------------------------


def regime_samples(c: float, n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.c_[sample_regime_base(c, n, rng), rng.uniform(0.0, 2.0 * np.pi, n)]


def run_check(name: str, c: float, n: int, seed: int) -> VerificationReport:
    g = conformal_metric(c)
    lm = lift_metric(g)
    alpha = liouville_form(g)
    X = reeb_field(c)
    pts = regime_samples(c, n, seed)
    if name == "beltrami":
        mu = contact_volume(alpha)
        rep = VerificationReport.from_residuals("beltrami", vector_residual(curl(X, lm, mu), X, pts),
                                                1e-8, c)
    elif name == "contact":
        rep = contact_check(flat(X, lm), pts, threshold=1e-3, regime_c=c)
    elif name == "adapted":
        rep = adapted_metric_check(alpha, X, lm, pts, tol=1e-9, regime_c=c)
    elif name == "divergence":
        rep = VerificationReport.from_residuals(
            "divergence", np.abs(divergence(X, contact_volume(alpha)).eval(pts)), 1e-9, c)
    elif name == "curvature":
        base = VerificationReport.from_residuals(
            "gauss_curvature", gauss_curvature(g, pts[:, :2]) + 2.0 * c, 1e-8, c)
        sub = pts[: min(len(pts), 200)]
        if c == 0:
            lift = lift_curvature_report(g, sub, 0.0, 1e-6, c)
        elif abs(c + 0.5) < 1e-15:
            lift = lift_curvature_report(g, sub, 0.25, 1e-6, c)
        else:
            lift = lift_curvature_report(g, sub, None, 1e-3, c)
        # headline residual is |K_gauss + 2c|; the lift curvature check gates pass/fail too
        rep = base
        rep.details["lift_curvature"] = lift.to_dict()
        rep.passed = base.passed and lift.passed
    elif name == "equivariance":
        sub = pts[: min(len(pts), 100)]
        inv = kepler_invariance_report(c, sub, nodes=16)
        action = kepler_symmetry_action(c, 16)
        a_res = form_invariance_residual(flat(X, lm), action, sub)
        aux = _diag_metric(action.chart, (1.0, 2.0, 1.0))
        probe = sub[:16]
        rg, _ = reeb_to_metric(X, alpha, action, probe, aux)
        g_res = metric_invariance_residual(rg, action, probe[:8], action.params[::2])
        rep = combine("equivariance", [
            inv,
            VerificationReport.from_residuals("contact_form_invariance", a_res, 1e-9, c),
            VerificationReport.from_residuals("reconstructed_metric_invariance", g_res, 1e-9, c),
        ], c)
    else:
        raise UsageError(f"unknown check {name!r}")
    rep.check = name
    rep.regime_c = c
    rep.notes = rep.notes + DISCREPANCY_NOTES
    return rep


def _diag_metric(chart, diag) -> MetricField:
    d = [float(v) for v in diag]
    n = len(d)
    return MetricField(chart, lambda p: [[d[i] if i == j else 0.0 for j in range(n)]
                                         for i in range(n)], "diag")


def cmd_verify(cfg: dict) -> int:
    _require(cfg, "c")
    c = _number(cfg, "c")
    if cfg.get("all"):
        which = list(CHECKS)
    elif cfg.get("which"):
        which = [w.strip() for w in str(cfg["which"]).split(",") if w.strip()]
    else:
        raise UsageError("choose checks with --all or --which")
    bad = [w for w in which if w not in CHECKS]
    if bad:
        raise UsageError(f"unknown checks: {bad}")
    n, seed = int(cfg["samples"]), int(cfg["seed"])
    if n < 1:
        raise UsageError("--samples must be positive")
    reports = [run_check(w, c, n, seed) for w in sorted(set(which))]
    ok = all(r.passed for r in reports)
    _emit({"version": VERSION, "command": "verify", "config": cfg,
           "checks": [r.to_dict() for r in reports], "pass": ok}, cfg.get("out"))
    return 0 if ok else 1


# simulation ----------------------------------------------------------------------------


def _format_row(values) -> str:
    return ",".join("%.17g" % v for v in values)


def write_csv(path: Path, header: Sequence[str], rows: np.ndarray) -> None:
    lines = [",".join(header)] + [_format_row(r) for r in rows]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _integrator(cfg: dict) -> IntegratorConfig:
    try:
        return IntegratorConfig(Method(cfg["method"]), abs_tol=float(cfg["tol"]),
                                rel_tol=float(cfg["tol"]), step=float(cfg["step"]),
                                collision_radius=float(cfg["collision_radius"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_simulate(cfg: dict) -> int:
    icfg = _integrator(cfg)
    tmax = _number(cfg, "tmax")
    out = _output_path(cfg["out"])
    sidecar = out.with_suffix(".json")
    info: dict[str, Any] = {"version": VERSION, "command": "simulate", "config": cfg}
    status = 0
    if cfg.get("direct"):
        _require(cfg, "q", "p")
        z0 = PhasePoint(cfg["q"], cfg["p"])
        try:
            traj = integrate(direct_field(), z0.state, tmax, icfg)
            info["classification"] = (detect_periodicity(traj).to_dict() if cfg.get("detect_period")
                                      else None)
        except Collision as exc:
            traj = exc.trajectory
            info["classification"] = OrbitReport(OrbitClass.COLLISION, time=exc.time).to_dict()
            info["error"] = type(exc).__name__
            status = 1
        except KeplerEulerError as exc:
            traj = getattr(exc, "trajectory", None)
            info["error"] = type(exc).__name__
            status = 1
        if traj is not None:
            rows = np.c_[traj.t, traj.states[:, :4]]
            rows[0, 1:] = z0.state
            write_csv(out, ["t", "q1", "q2", "p1", "p2"], rows)
            info["energy_drift"] = energy_drift_report(traj, kepler_hamiltonian())
    else:
        _require(cfg, "c")
        c = _number(cfg, "c")
        if cfg.get("x") is not None:
            _require(cfg, "alpha")
            start = (stereo_chart(c), np.array([*cfg["x"], cfg["alpha"]], dtype=float))
        else:
            _require(cfg, "q", "p")
            start = PhasePoint(cfg["q"], cfg["p"])
            level = kepler_hamiltonian().at(start)
            if abs(level - c) > 1e-10:
                raise UsageError(f"initial state has energy {level:.12g}, not c = {c}")
        try:
            traj = integrate_regularized(c, start, tmax, icfg)
        except KeplerEulerError as exc:
            traj = getattr(exc, "trajectory", None)
            info["error"] = type(exc).__name__
            status = 1
        if traj is not None:
            write_csv(out, ["t", "x1", "x2", "alpha"], np.c_[traj.t, traj.states[:, :3]])
            info["segments"] = [{"chart": s.chart.id, "rows": [s.start, s.stop]}
                                for s in traj.segments]
            info["energy_drift"] = energy_drift_report(traj, regularized_K(c))
            info["classification"] = (detect_periodicity(traj).to_dict() if cfg.get("detect_period")
                                      else None)
    info["csv"] = str(out)
    sidecar.write_text(dump_json(info), newline="\n")
    sys.stdout.write(dump_json(info))
    return status


def cmd_compare(cfg: dict) -> int:
    _require(cfg, "c", "q", "p")
    c = _number(cfg, "c")
    z0 = PhasePoint(cfg["q"], cfg["p"])
    level = kepler_hamiltonian().at(z0)
    if abs(level - c) > 1e-10:
        raise UsageError(f"initial state has energy {level:.12g}, not c = {c}")
    icfg = IntegratorConfig(abs_tol=float(cfg["tol"]), rel_tol=float(cfg["tol"]),
                            collision_radius=float(cfg["collision_radius"]))
    tmax = None if cfg.get("tmax") is None else _number(cfg, "tmax")
    rep = compare_regularized(c, z0, icfg, tmax=tmax)
    rep.notes = rep.notes + DISCREPANCY_NOTES
    _emit({"version": VERSION, "command": "compare", "config": cfg,
           "checks": [rep.to_dict()], "hausdorff": rep.details["hausdorff"],
           "windowed": rep.details["windowed"], "pass": rep.passed}, cfg.get("out"))
    return 0 if rep.passed else 1


def cmd_average_metric(cfg: dict) -> int:
    _require(cfg, "c")
    c = _number(cfg, "c")
    try:
        aux_diag = [float(v) for v in str(cfg["aux"]).split(",")]
    except ValueError as exc:
        raise UsageError("--aux must be three comma-separated numbers") from exc
    if len(aux_diag) != 3 or min(aux_diag) <= 0:
        raise UsageError("--aux must be three positive numbers")
    nodes, n = int(cfg["nodes"]), int(cfg["samples"])
    if nodes < 1 or n < 1:
        raise UsageError("--nodes and --samples must be positive")
    action = kepler_symmetry_action(c, nodes)
    pts = action.sample(n, int(cfg["seed"]))
    g = conformal_metric(c)
    alpha, X = liouville_form(g), reeb_field(c)
    aux = _diag_metric(action.chart, aux_diag)
    g_avg, mu = reeb_to_metric(X, alpha, action, pts, aux)
    g_fine, _ = reeb_to_metric(X, alpha, action.refined(2 * nodes), pts, aux)
    g_raw, _ = reeb_to_metric(X, alpha, None, pts, aux)
    check_sig = action.params[:: max(1, nodes // 8)]
    inv = metric_invariance_residual(g_avg, action, pts, check_sig)
    raw = metric_invariance_residual(g_raw, action, pts, check_sig)
    doubling = float(np.max(np.abs(g_avg.eval(pts) - g_fine.eval(pts))))
    beltrami = reeb_to_metric_report(X, alpha, g_avg, mu, pts, c)
    reports = [
        VerificationReport.from_residuals("averaged_invariance", inv, 1e-10, c,
                                          details={"before_averaging": float(np.max(raw))}),
        VerificationReport.from_residuals("quadrature_doubling", [doubling], 1e-12, c),
        beltrami,
    ]
    ok = all(r.passed for r in reports)
    _emit({"version": VERSION, "command": "average-metric", "config": cfg,
           "checks": [r.to_dict() for r in reports], "pass": ok}, cfg.get("out"))
    return 0 if ok else 1


def cmd_classify(cfg: dict) -> int:
    _require(cfg, "c", "x", "alpha")
    c = _number(cfg, "c")
    tmax = _number(cfg, "tmax")
    g = conformal_metric(c)
    z = np.array([*cfg["x"], cfg["alpha"]], dtype=float)
    ts = 1e-3 * np.arange(int(round(tmax / 1e-3)) + 1)
    if cfg.get("freeze_base"):
        states = np.c_[np.tile(z[:2], (len(ts), 1)), z[2] + ts]
    else:
        traj = integrate_regularized(c, (stereo_chart(c), z), tmax, IntegratorConfig())
        ts, states = traj.uniform_samples(1e-3, stereo_chart(c))
        states = states[:, :3].copy()
        states[:, 2] += float(cfg["fiber_rate"]) * (ts - ts[0])
    kind = classify_geodesic((ts, states), g)
    _emit({"version": VERSION, "command": "classify", "config": cfg,
           "classification": kind.value, "pass": True}, cfg.get("out"))
    return 0


COMMANDS = {"verify": cmd_verify, "simulate": cmd_simulate, "compare": cmd_compare,
            "average-metric": cmd_average_metric, "classify": cmd_classify}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        cfg = resolve_config(ns.command, ns)
        return COMMANDS[ns.command](cfg)
    except UsageError as exc:
        sys.stderr.write(f"kepler-euler: error: {exc}\n")
        return 2
    except KeplerEulerError as exc:
        sys.stderr.write(f"kepler-euler: {type(exc).__name__}: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())

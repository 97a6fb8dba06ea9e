import json
import math
import subprocess
import sys

import numpy as np
import pytest

from kepler_euler.cli import CHECKS, VERSION, main


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_verify_all(capsys):
    code, out, _ = run(["verify", "--c=-0.5", "--all", "--samples", "200"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["pass"] and rep["version"] == VERSION
    assert sorted(c["check"] for c in rep["checks"]) == sorted(CHECKS)
    for c in rep["checks"]:
        assert set(c) >= {"check", "regime_c", "samples", "max_residual", "tolerance", "pass", "notes"}
        assert any("x1 sin(a) - x2 cos(a)" in n for n in c["notes"])


def test_verify_curvature_headline(capsys):
    code, out, _ = run(["verify", "--c=0.3", "--which=curvature"], capsys)
    rep = json.loads(out)["checks"][0]
    assert code == 0 and rep["max_residual"] < 1e-8
    assert rep["details"]["lift_curvature"]["details"]["spread"] > 1e-3


@pytest.mark.parametrize("argv", [["verify", "--c=abc", "--all"], ["verify", "--all"],
                                  ["verify", "--c=1", "--which=nonsense"], ["frobnicate"]])
def test_usage_errors(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == 2 and "error" in err


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"c": -2.0, "which": "divergence", "samples": 50}))
    code, out, _ = run(["verify", "--config", str(cfg), "--samples", "30"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["config"]["c"] == -2.0 and rep["config"]["samples"] == 30
    assert rep["checks"][0]["samples"] == 30
    cfg.write_text("{not json")
    assert run(["verify", "--config", str(cfg)], capsys)[0] == 2


def test_verify_deterministic(tmp_path, capsys):
    path = tmp_path / "r.json"
    argv = ["verify", "--c=0.3", "--which=beltrami,contact", "--samples", "100", "--seed", "5",
            "--out", str(path)]
    a = run(argv, capsys)[1]
    first = path.read_bytes()
    b = run(argv, capsys)[1]
    assert a == b and path.read_bytes() == first == a.encode()


def test_simulate_direct_circular(tmp_path, capsys):
    out = tmp_path / "circ.csv"
    code, _, _ = run(["simulate", "--direct", "--q", "1", "0", "--p", "0", "1", "--tmax", "7",
                      "--out", str(out), "--detect-period"], capsys)
    assert code == 0
    raw = out.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "t,q1,q2,p1,p2" and lines[1] == "0,1,0,0,1"
    side = json.loads(out.with_suffix(".json").read_text())
    assert side["classification"]["classification"] == "Periodic"
    assert abs(side["classification"]["period"] - 2 * math.pi) < 1e-6
    assert side["energy_drift"] < 1e-8
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    assert np.max(np.abs(np.hypot(data[:, 1], data[:, 2]) - 1)) < 1e-8


def test_simulate_csv_roundtrip(tmp_path, capsys):
    out = tmp_path / "b.csv"
    x = [0.1234567890123456789, -0.3]
    run(["simulate", "--c=-0.5", "--x", repr(x[0]), repr(x[1]), "--alpha", "0.7",
         "--tmax", "1", "--out", str(out)], capsys)
    first = out.read_text().splitlines()[1].split(",")
    assert [float(v) for v in first] == [0.0, x[0], x[1], 0.7]


def test_simulate_regularized_period(tmp_path, capsys):
    out = tmp_path / "reg.csv"
    code, _, _ = run(["simulate", "--c=-0.5", "--x", "0.5", "0.2", "--alpha", "0.3",
                      "--tmax", "8", "--out", str(out), "--detect-period"], capsys)
    side = json.loads(out.with_suffix(".json").read_text())
    assert code == 0 and out.read_text().startswith("t,x1,x2,alpha\n")
    assert side["classification"]["classification"] == "Periodic"
    assert abs(side["classification"]["period"] - 2 * math.pi) < 1e-6


def test_simulate_collision(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("KEPLER_EULER_OUTPUT_DIR", str(tmp_path / "runs"))
    code, _, _ = run(["simulate", "--direct", "--q", "1", "0", "--p", "0", "0", "--out", "fall.csv"],
                     capsys)
    side = json.loads((tmp_path / "runs" / "fall.json").read_text())
    assert code == 1 and side["error"] == "Collision"
    assert side["classification"]["classification"] == "Collision"
    assert math.isfinite(side["classification"]["time"])


def test_simulate_level_mismatch(tmp_path, capsys):
    code, _, _ = run(["simulate", "--c=-0.4", "--q", "1", "0", "--p", "0", "1",
                      "--out", str(tmp_path / "x.csv")], capsys)
    assert code == 2


def test_compare(capsys):
    code, out, _ = run(["compare", "--c=-0.5", "--q", "1", "0", "--p", "0", "1"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["pass"] and rep["hausdorff"] < 1e-5 and not rep["windowed"]


def test_compare_near_collision_windowed(capsys):
    c = 0.5 * 0.1**2 - 1.0
    code, out, _ = run(["compare", f"--c={c!r}", "--q", "1", "0", "--p", "0", "0.1",
                        "--collision-radius", "1e-2"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["windowed"]


def test_compare_level_mismatch(capsys):
    assert run(["compare", "--c=-0.3", "--q", "1", "0", "--p", "0", "1"], capsys)[0] == 2


def test_average_metric(capsys):
    code, out, _ = run(["average-metric", "--c=-0.5", "--nodes", "32", "--samples", "6"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["pass"]
    inv = next(c for c in rep["checks"] if c["check"] == "averaged_invariance")
    assert inv["max_residual"] < 1e-10 and inv["details"]["before_averaging"] > 1e-3


@pytest.mark.parametrize("extra, label", [([], "Horizontal"), (["--fiber-rate", "0.05"], "Oblique"),
                                          (["--freeze-base"], "Vertical")])
def test_classify(extra, label, capsys):
    code, out, _ = run(["classify", "--c=-0.5", "--x", "0.3", "0.4", "--alpha", "1"] + extra, capsys)
    assert code == 0 and json.loads(out)["classification"] == label


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "kepler_euler.cli", "simulate", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "default 1e-10" in res.stdout

import json
import subprocess
import sys

import pytest

from qikt.harness.cli import main

FAST = """\
scenario = free_gaussian
[particles]
n = 2000
n_seeds = 1
[time]
dt_ode = 0.01
t_end = 2.0
"""


def _write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _report(out):
    return json.loads((out / "report.json").read_text())


def test_bench_passes(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["bench", "--config", _write(tmp_path, FAST), "--out", str(out)]) == 0
    rep = _report(out)
    assert rep["schema"] == 1 and rep["pass"] is True and "failed_at" not in rep
    assert {c["name"] for c in rep["checks"]} >= {"qhe_continuity_residual", "heisenberg_bound_ratio"}
    assert all(set(c) >= {"name", "value", "tolerance", "pass"} for c in rep["checks"])
    assert (out / "fields_t2.csv").exists() and (out / "residuals.csv").exists()
    assert "overall: PASS" in capsys.readouterr().out


def test_flags_after_or_before_subcommand(tmp_path):
    cfg = _write(tmp_path, FAST)
    assert main(["--config", cfg, "--out", str(tmp_path / "a"), "--seed", "3", "bench"]) == 0
    assert _report(tmp_path / "a")["seed"] == 3


def test_coarse_grid_fails_a_check(tmp_path):
    cfg = _write(tmp_path, FAST + "[grid]\nn = 64\n")
    out = tmp_path / "run"
    assert main(["bench", "--config", cfg, "--out", str(out)]) == 1
    rep = _report(out)
    assert rep["pass"] is False
    assert not next(c for c in rep["checks"] if c["name"] == "qhe_continuity_residual")["pass"]


@pytest.mark.parametrize("argv", [
    ["bench"],
    ["bench", "--config", "/nonexistent.ini"],
    ["frobnicate"],
    ["bench", "--seed", "x"],
])
def test_usage_errors_exit_2(argv):
    # argparse errors exit from inside main; config errors return
    try:
        code = main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == 2


def test_invalid_config_exits_2(tmp_path, capsys):
    cfg = _write(tmp_path, FAST + "[temps]\nT_o = -1\n")
    assert main(["verify", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "T_o must be > 0" in capsys.readouterr().err
    cfg = _write(tmp_path, "scenario = free_gaussian\nscenario = harmonic_ground\n", "dup.ini")
    assert main(["bench", "--config", cfg]) == 2
    assert main(["bench", "--config", _write(tmp_path, FAST), "--threads", "0"]) == 2


def test_solve_needs_one_dimension(tmp_path):
    cfg = _write(tmp_path, FAST + "[grid]\ndim = 2\nn = 32\n")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_runtime_error_marks_failed_stage(tmp_path, capsys):
    # a 6-wide box cannot hold the spreading packet
    cfg = _write(tmp_path, FAST + "[grid]\nn = 64\nextent = 3.0\n")
    out = tmp_path / "run"
    assert main(["ikt-run", "--config", cfg, "--out", str(out)]) == 3
    rep = _report(out)
    assert rep["failed_at"] == "particles"
    assert rep["pass"] is False
    assert "ParticleEscapedDomain" in capsys.readouterr().err


def test_plots_need_artifacts(tmp_path):
    assert main(["plots", "--out", str(tmp_path / "missing")]) == 3
    cfg = _write(tmp_path, FAST)
    out = tmp_path / "run"
    assert main(["bench", "--config", cfg, "--out", str(out)]) == 0
    assert main(["plots", "--out", str(out)]) == 3


def test_verify_then_plots(tmp_path):
    cfg = _write(tmp_path, FAST)
    out = tmp_path / "run"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == 0
    rep = _report(out)
    assert next(c for c in rep["checks"] if c["name"] == "constant_H_frozen_control")["mandatory"] is False
    assert main(["plots", "--out", str(out)]) == 0
    scripts = sorted(out.glob("plot_*.py"))
    assert len(scripts) == 4
    before = [s.read_bytes() for s in scripts]
    assert main(["plots", "--out", str(out)]) == 0
    assert [s.read_bytes() for s in scripts] == before
    for s in scripts:
        text = s.read_text()
        assert any(name in text for name in ("entropy_trace.csv", "moment_check.csv", "residuals.csv"))


def test_frozen_control_is_expected_fail(tmp_path):
    cfg = _write(tmp_path, FAST + "[diagnostics]\nfrozen_T0 = true\n")
    out = tmp_path / "run"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == 0
    drift = next(c for c in _report(out)["checks"] if c["name"] == "constant_H_drift")
    assert drift["pass"] is False and drift["mandatory"] is False
    assert "expected-fail" in drift["note"]


def test_stationary_control_note(tmp_path):
    cfg = _write(tmp_path, FAST.replace("free_gaussian", "harmonic_ground"))
    out = tmp_path / "run"
    assert main(["h-theorem", "--config", cfg, "--out", str(out)]) == 0
    drift = next(c for c in _report(out)["checks"] if c["name"] == "constant_H_drift")
    assert drift["pass"] and drift["note"] == "stationary control"


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "qikt", "bench", "--config", _write(tmp_path, FAST),
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip().endswith("overall: PASS")

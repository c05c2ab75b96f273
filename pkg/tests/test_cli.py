import json
import subprocess
import sys

import numpy as np
import pytest

from layerlab.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, main

FAST = ["--layer-n", "8001", "--corner-n", "300"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_check_assumptions_exit_codes(tmp_path, capsys):
    code, out, _ = run(capsys, "check-assumptions", "--fixture", "MP-CUBIC", "-o", tmp_path)
    assert code == EXIT_OK and "FAIL" not in out
    rep = json.loads((tmp_path / "assumptions.json").read_text())
    assert rep["config"]["fixture"] == "MP-CUBIC" and rep["version"].startswith("0.1.0")
    code, out, _ = run(capsys, "check-assumptions", "--problem", "custom_problems:flat_data", "-o", tmp_path)
    assert code == EXIT_FAIL and "A4" in out and "FAIL" in out


def test_malformed_config_exits_2_with_line(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text('fixture = "MP-LIN"\nwhat = 3\n')
    code, _, err = run(capsys, "check-assumptions", "--config", cfg)
    assert code == EXIT_CONFIG and f"{cfg}:2:" in err
    cfg.write_text('fixture = "MP-LIN\n')
    code, _, err = run(capsys, "check-assumptions", "--config", cfg)
    assert code == EXIT_CONFIG and f"{cfg}:1:" in err


def test_bad_flags_exit_2(tmp_path, capsys, monkeypatch):
    assert run(capsys, "verify", "--which", "residual,vibes", "-o", tmp_path)[0] == EXIT_CONFIG
    assert run(capsys, "verify", "--eps", "0.1,x", "-o", tmp_path)[0] == EXIT_CONFIG
    monkeypatch.setenv("LAYERLAB_THREADS", "0")
    assert run(capsys, "check-assumptions", "-o", tmp_path)[0] == EXIT_CONFIG


def test_solve_layers_linear_profile(tmp_path, capsys):
    code, _, _ = run(capsys, "solve", "--fixture", "MP-LIN", "--target", "layers", "-o", tmp_path)
    assert code == EXIT_OK
    data = np.loadtxt(tmp_path / "v0.csv", delimiter=",", skiprows=1)
    xi, v = data[:, 0], data[:, 1]
    j = np.searchsorted(xi, 1.0)
    # cubic Lagrange interpolation through the four nodes around xi = 1
    idx = np.arange(j - 2, j + 2)
    val = sum(v[i] * np.prod([(1.0 - xi[k]) / (xi[i] - xi[k]) for k in idx if k != i]) for i in idx)
    assert val == pytest.approx(np.exp(-1.0), abs=1e-7)
    names = set(json.loads((tmp_path / "manifest.json").read_text())["files"])
    assert {"v0.csv", "v0_minus.csv", "v1.csv", "dv0_dp.csv"} <= names


def test_solve_corner_passes_and_is_deterministic(tmp_path, capsys):
    args = ("solve", "--fixture", "MP-CUBIC", "--target", "corner", "--p", "0", "-o", tmp_path, *FAST)
    code, out, _ = run(capsys, *args)
    assert code == EXIT_OK and "pass" in out
    summary = json.loads((tmp_path / "corner_check.json").read_text())["summary"]
    assert summary["passed"] and summary["upper_violations"] == 0
    first = (tmp_path / "manifest.json").read_bytes()
    assert run(capsys, *args)[0] == EXIT_OK
    assert (tmp_path / "manifest.json").read_bytes() == first
    assert {"z0.bin", "q0.bin", "q1.bin"} <= set(json.loads(first)["files"])


def test_verify_residual(tmp_path, capsys):
    args = ("verify", "--which", "residual", "--n-points", "4000", *FAST)
    code, out, _ = run(capsys, *args, "--fixture", "MP-VAR", "-o", tmp_path / "var")
    rec = json.loads((tmp_path / "var" / "verify.json").read_text())["checks"]["residual"]
    assert code == EXIT_OK and abs(rec["constants"]["slope"] - 2.0) <= 0.3 and "| residual |" in out
    # constant data on an x-independent reaction: u_as solves the problem up to roundoff
    code, _, _ = run(capsys, *args, "--fixture", "MP-CUBIC", "-o", tmp_path / "cubic")
    rec = json.loads((tmp_path / "cubic" / "verify.json").read_text())["checks"]["residual"]
    assert code == EXIT_OK and rec["status"] == "identically satisfied"


def test_verify_monotone(tmp_path, capsys):
    code, _, _ = run(capsys, "verify", "--fixture", "MP-CUBIC", "--which", "monotone", "--p-rule", "K*eps^2",
                     "-o", tmp_path, "--n-points", "4000", *FAST)
    rec = json.loads((tmp_path / "verify.json").read_text())["checks"]["monotone"]
    assert code == EXIT_OK and rec["constants"]["min_margin_over_theta_p"] >= 0.45


def test_sign_negative_control(tmp_path, capsys):
    base = ("verify", "--problem", "custom_problems:unstable_spot", "--which", "sign", "-o", tmp_path,
            "--n-points", "2000", *FAST)
    code, _, err = run(capsys, *base)
    assert code == EXIT_FAIL and "A1" in err and not (tmp_path / "verify.json").exists()
    code, _, _ = run(capsys, *base, "--force")
    rec = json.loads((tmp_path / "verify.json").read_text())["checks"]["sign"]
    assert code == EXIT_FAIL and rec["status"] == "fail" and rec["constants"]["K"] is None


def test_report(tmp_path, capsys):
    code, _, err = run(capsys, "report", "-o", tmp_path / "empty")
    assert code == EXIT_FAIL and "nothing to report" in err
    assert run(capsys, "verify", "--fixture", "MP-LIN", "--which", "residual,boundary", "-o", tmp_path,
               "--n-points", "2000", *FAST)[0] == EXIT_OK
    code, out, _ = run(capsys, "report", "-o", tmp_path)
    assert code == EXIT_OK
    text = (tmp_path / "report.md").read_text()
    assert "identically satisfied" in text and '"fixture": "MP-LIN"' in text
    gp = tmp_path / "plots" / "residual_MP-LIN.gp"
    dat = (tmp_path / "plots" / "residual_MP-LIN.dat").read_bytes()
    assert gp.is_file()
    run(capsys, "report", "-o", tmp_path)
    assert (tmp_path / "plots" / "residual_MP-LIN.dat").read_bytes() == dat


def test_sweep_with_thread_cap(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("LAYERLAB_THREADS", "2")
    code, out, _ = run(capsys, "sweep", "--fixtures", "MP-LIN,MP-VAR", "-o", tmp_path, "--n-points", "2000", *FAST)
    assert code == EXIT_OK
    rows = (tmp_path / "sweep.csv").read_text().splitlines()
    assert rows[0] == "fixture,eps,interior,boundary" and len(rows) == 1 + 2 * 4
    assert (tmp_path / "plots" / "residual_MP-VAR.gp").is_file()


def test_version_and_entry_point():
    out = subprocess.run([sys.executable, "-m", "layerlab.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("layerlab 0.1.0")


def test_full_pipeline_report(pipeline_runs):
    out, runs = pipeline_runs
    for codes, _ in runs:
        assert [c for _, c, _ in codes] == [EXIT_OK] * 4, codes
    text = (out / "report.md").read_text()
    table = text.split("## Checks", 1)[1].split("all passed", 1)[0]
    rows = [r for r in table.splitlines() if r.startswith("| ") and not r.startswith("| check")]
    assert len(rows) == 8 and all("| pass |" in r for r in rows)
    assert "all passed: yes" in text and (out / "plots" / "residual_MP-VAR.gp").is_file()
    assert json.loads((out / "verify.json").read_text())["all_passed"] is True


def test_config_checks_select_default_which(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text(f'fixture = "MP-LIN"\nchecks = ["decay"]\noutput = "{tmp_path}"\n')
    assert run(capsys, "verify", "--config", cfg, *FAST)[0] == EXIT_OK
    assert list(json.loads((tmp_path / "verify.json").read_text())["checks"]) == ["decay"]

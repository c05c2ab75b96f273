import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from layerlab.expansion import ExpansionSettings, ExpansionWorkspace  # noqa: E402
from layerlab.problem import builtin_fixture  # noqa: E402

_WORKSPACES = {}


def workspace(name: str, **settings) -> ExpansionWorkspace:
    """Session-wide workspace cache; corner solves are the expensive part."""
    key = (name, tuple(sorted(settings.items())))
    if key not in _WORKSPACES:
        _WORKSPACES[key] = ExpansionWorkspace(builtin_fixture(name), ExpansionSettings(**settings))
    return _WORKSPACES[key]


@pytest.fixture(scope="session")
def ws_lin():
    return workspace("MP-LIN")


@pytest.fixture(scope="session")
def ws_cubic():
    return workspace("MP-CUBIC")


@pytest.fixture(scope="session")
def ws_var():
    return workspace("MP-VAR")


# -- acceptance summary -------------------------------------------------------

ACCEPTANCE = {}


def record(n: int, title: str, passed: bool, measured: str) -> bool:
    """Store one acceptance line; printed in the terminal summary."""
    ACCEPTANCE[n] = (title, bool(passed), measured)
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, measured = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {measured}")


# -- full pipeline, run twice in fresh processes -------------------------------

PIPELINE = ("check-assumptions", "solve", "verify", "report")


@pytest.fixture(scope="session")
def pipeline_runs(tmp_path_factory):
    """Run the CLI pipeline on MP-VAR twice with one config; returns ``(outdir, [(cmd, code), ...], verify bytes per run)``."""
    import subprocess
    import sys

    base = tmp_path_factory.mktemp("pipeline")
    out = base / "out"
    cfg = base / "config.toml"
    cfg.write_text(f'fixture = "MP-VAR"\noutput = "{out}"\n')
    runs = []
    for _ in range(2):
        codes = []
        for cmd in PIPELINE:
            proc = subprocess.run([sys.executable, "-m", "layerlab.cli", cmd, "--config", str(cfg)],
                                  capture_output=True, text=True)
            codes.append((cmd, proc.returncode, proc.stderr[-2000:]))
        runs.append((codes, (out / "verify.json").read_bytes()))
    return out, runs

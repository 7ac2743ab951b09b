import subprocess
import sys
from pathlib import Path

import pytest

PLOTS_DIR = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(PLOTS_DIR))


def run_cli(workdir, *argv):
    """Invoke the primary component's installed CLI (its external interface)."""
    proc = subprocess.run(
        ["twopatch", *argv], cwd=workdir, capture_output=True, text=True, timeout=300
    )
    return proc


@pytest.fixture(scope="session")
def artifacts(tmp_path_factory):
    """One set of primary-CLI outputs shared by all rendering tests."""
    work = tmp_path_factory.mktemp("artifacts")
    checks = [
        ("gamma", "--n", "60", "--sigma-max", "6", "--out", "growth"),
        ("simulate", "--strategy", "optimal", "--x0", "4,1.5", "--out", "opt_d01"),
        ("simulate", "--strategy", "optimal", "--x0", "4,1.5", "--set", "params.d=10", "--out", "opt_d10"),
        ("simulate", "--strategy", "onepump:1", "--x0", "3,1.2", "--out", "onepump"),
        ("value", "--which", "v0", "--grid", "0,5,0,5", "--resolution", "16,16", "--out", "grid_v0"),
        ("value", "--which", "vinf", "--grid", "0,5,0,5", "--resolution", "16,16", "--out", "grid_vinf"),
        ("full", "--epsilon-list", "0.1,0.02", "--x0", "4,1.5", "--out", "full"),
        ("compare", "--x0-list", "4,0.5", "--d-list", "0.1,10", "--out", "cmp"),
    ]
    for argv in checks:
        proc = run_cli(work, *argv)
        assert proc.returncode == 0, f"{argv}: {proc.stderr}"
    return work

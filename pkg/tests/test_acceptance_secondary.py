"""Criterion 10 (secondary component): every figure kind renders from the
criterion-1 run, and the dual-surface overlay deviation stays below 5e-3.

Requires the plots package to be built (`cd plots && npm install && npm run
build`); skipped otherwise so the primary suite stands alone.
"""

import shutil
import subprocess
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
PLOT_CLI = ROOT / "plots" / "dist" / "cli.js"

pytestmark = pytest.mark.skipif(
    shutil.which("node") is None or not PLOT_CLI.exists(),
    reason="plots package not built")


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory):
    from dualhjb.cli import main

    out = tmp_path_factory.mktemp("crit1run")
    cfg = ROOT / "configs" / "merton.cfg"
    rh = ROOT / "configs" / "random_horizon.cfg"
    assert main(["solve", "--config", str(cfg), "--out", str(out)]) == 0
    assert main(["recover", "--config", str(cfg), "--dual", str(out / "dual.csv"),
                 "--out", str(out)]) == 0
    assert main(["simulate", "--config", str(cfg), "--primal", str(out / "primal.csv"),
                 "--out", str(out)]) == 0
    assert main(["app", "--config", str(rh), "--out", str(out)]) == 0
    return out


def render(kind, inputs, out_path, extra=()):
    return subprocess.run(
        ["node", str(PLOT_CLI), kind, "--in", inputs, "--out", str(out_path), *extra],
        capture_output=True, text=True)


def test_criterion_10_every_figure_renders(artifacts, tmp_path):
    jobs = [
        ("dual_surface", f"{artifacts / 'dual.csv'},{artifacts / 'solve_manifest.json'}"),
        ("primal_curves", str(artifacts / "primal.csv")),
        ("policy_curves", str(artifacts / "primal.csv")),
        ("gap_heatmap", str(artifacts / "primal.csv")),
        ("mc_fan", str(artifacts / "simreport.json")),
        ("equivalence_bars", str(artifacts / "rh_equivalence.json")),
    ]
    for kind, inputs in jobs:
        out = tmp_path / f"{kind}.svg"
        proc = render(kind, inputs, out)
        assert proc.returncode == 0, (kind, proc.stderr)
        assert out.exists() and out.read_text().rstrip().endswith("</svg>")

    # overlay deviation assertion on the oracle run
    proc = render("dual_surface",
                  f"{artifacts / 'dual.csv'},{artifacts / 'solve_manifest.json'}",
                  tmp_path / "overlay.svg", extra=("--assert-overlay", "5e-3"))
    assert proc.returncode == 0, proc.stdout + proc.stderr
    dev = float(proc.stdout.split("maxRelDeviation=")[1].split(" ")[0].rstrip(")"))
    print(f"[criterion 10] PASS: all 6 figure kinds render; overlay deviation "
          f"{dev:.2e} <= 5e-3")

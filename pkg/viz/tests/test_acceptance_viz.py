"""Renderer acceptance: real exported run dirs, end to end (slow).

Builds three genuine run directories through the optimizer CLI (the only
interface the renderer is allowed to consume), then renders every figure
kind and applies the high-potential sample check to the obstacle run.
"""

import glob
import os
import subprocess
import sys

import pytest

from pathviz import (count_high_potential, render_metrics, render_opinion_hist,
                     render_path_panels)

SMALL = ["--set", "flow_match.steps=60", "--set", "flow_match.batch_size=64",
         "--set", "architecture.hidden_width=8", "--set", "optim.epochs=2",
         "--set", "optim.path_steps=4", "--set", "optim.coupling_steps=2",
         "--set", "optim.warmup_steps=5", "--set", "quadrature.N=6",
         "--set", "quadrature.M=32", "--set", "problem.K=2"]


def _cli_run(args, root):
    env = dict(os.environ, DENSITYPATH_RUNS=root)
    proc = subprocess.run([sys.executable, "-m", "densitypath.cli", *args],
                          capture_output=True, text=True, env=env, timeout=1800)
    assert proc.returncode == 0, proc.stdout + proc.stderr
    line = [ln for ln in proc.stdout.splitlines() if ln.startswith("run dir:")]
    assert line, proc.stdout
    return line[0].split("run dir:")[1].strip()


@pytest.fixture(scope="session")
def real_runs(tmp_path_factory):
    pytest.importorskip("densitypath")
    root = str(tmp_path_factory.mktemp("runs"))
    return {
        # full desk preset: the optimized path must clear the toll gates
        "scc": _cli_run(["run", "--problem", "scc", "--desk", "--seed", "1"], root),
        "gauss-pair": _cli_run(["run", "--problem", "gauss-pair", "--desk",
                                "--seed", "3", *SMALL], root),
        "opinion": _cli_run(["run", "--problem", "opinion", "--desk",
                             "--seed", "0", *SMALL], root),
    }


def _optimizer_never_imports_renderer() -> bool:
    import densitypath
    src = os.path.dirname(densitypath.__file__)
    for path in glob.glob(os.path.join(src, "*.py")):
        with open(path) as f:
            if "pathviz" in f.read():
                return False
    return True


def test_renderer_end_to_end(real_runs, tmp_path, criterion_report):
    sizes = {}
    for name in ("gauss-pair", "scc"):
        panel = render_path_panels(real_runs[name], str(tmp_path / f"{name}-path.png"))
        metric = render_metrics(real_runs[name], str(tmp_path / f"{name}-metrics.png"))
        sizes[name] = (os.path.getsize(panel), os.path.getsize(metric))
    count, threshold, peak = count_high_potential(real_runs["scc"])
    hist = render_opinion_hist(real_runs["opinion"], str(tmp_path / "opinion-hist.png"))
    hist_ok = os.path.getsize(hist) > 5_000
    figures_ok = all(s > 10_000 for pair in sizes.values() for s in pair)
    standalone = _optimizer_never_imports_renderer()

    passed = figures_ok and count == 0 and hist_ok and standalone
    criterion_report(
        12, passed,
        f"path+metrics figures rendered for gauss-pair and scc; scc export has "
        f"{count} samples with V > {threshold:.1f} (50% of peak {peak:.1f}); "
        f"opinion histogram rendered; optimizer sources never import the renderer")

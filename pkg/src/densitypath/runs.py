"""Run-directory layout and trajectory export.

A run directory is the hand-off surface to external tooling:

    <root>/<problem>-<YYYYmmdd-HHMMSS>-s<seed>/
        config.yaml        full config snapshot, re-runnable
        metrics.csv        one row per epoch
        theta0.ckpt        boundary parameters at the end of the run
        theta1.ckpt
        epoch-000/controls.ckpt   spline control points after each epoch
        trajectory.csv     51 evaluation times x 2000 reference samples
        controls.csv       pushforward of the same samples at control times

The output root comes from DENSITYPATH_RUNS (default ./runs). Export files are
plain columnar text: header line, then time,sample,x1..xd rows.
"""

from __future__ import annotations

import csv
import os
import time

import torch
import yaml

from .checkpoints import save_controls, save_params
from .errors import ConfigurationError
from .node import IntegratorConfig, transport
from .problems import ProblemConfig, from_dict, reference_sampler, to_dict
from .spline import SplinePath

ENV_ROOT = "DENSITYPATH_RUNS"
EXPORT_TIMES = 51
EXPORT_SAMPLES = 2000
METRIC_COLUMNS = ("epoch", "total", "kinetic", "linear", "entropy", "interaction",
                  "fisher", "w2_boundary0", "w2_boundary1", "wall_time")


def output_root() -> str:
    return os.environ.get(ENV_ROOT, os.path.join(os.getcwd(), "runs"))


def create_run_dir(problem: ProblemConfig, root: str | None = None) -> str:
    base = root if root is not None else output_root()
    stamp = time.strftime("%Y%m%d-%H%M%S")
    name = f"{problem.name}-{stamp}-s{problem.seed}"
    run_dir = os.path.join(base, name)
    suffix = 0
    while os.path.exists(run_dir):
        suffix += 1
        run_dir = os.path.join(base, f"{name}-{suffix}")
    os.makedirs(run_dir)
    return run_dir


def write_config(run_dir: str, problem: ProblemConfig):
    with open(os.path.join(run_dir, "config.yaml"), "w") as f:
        yaml.safe_dump(to_dict(problem), f, sort_keys=False)


def read_config(path: str) -> ProblemConfig:
    target = path
    if os.path.isdir(path):
        target = os.path.join(path, "config.yaml")
    if not os.path.exists(target):
        raise ConfigurationError(f"no config file at {target}")
    with open(target) as f:
        data = yaml.safe_load(f)
    if not isinstance(data, dict):
        raise ConfigurationError(f"config file {target} is not a mapping")
    return from_dict(data)


def write_metrics(run_dir: str, history: list):
    with open(os.path.join(run_dir, "metrics.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(METRIC_COLUMNS)
        for row in history:
            writer.writerow([row[c] for c in METRIC_COLUMNS])


def save_epoch(run_dir: str, epoch: int, spline: SplinePath):
    ep_dir = os.path.join(run_dir, f"epoch-{epoch:03d}")
    os.makedirs(ep_dir, exist_ok=True)
    save_controls(os.path.join(ep_dir, "controls.ckpt"), spline, tag=f"epoch-{epoch}")


def _write_cloud_csv(path: str, times, clouds):
    """Rows (time, sample, x1..xd) for one cloud per time."""
    d = clouds[0].shape[1]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["time", "sample"] + [f"x{i + 1}" for i in range(d)])
        for t, cloud in zip(times, clouds):
            arr = cloud.detach().cpu().numpy()
            for j in range(arr.shape[0]):
                writer.writerow([f"{t:.6f}", j] + [f"{v:.17g}" for v in arr[j]])


def export_trajectory(run_dir: str, problem: ProblemConfig, spline: SplinePath,
                      n_times: int = EXPORT_TIMES, n_samples: int = EXPORT_SAMPLES):
    """Push one fixed reference batch through the path at the evaluation grid.

    Writes trajectory.csv over n_times equispaced times and controls.csv at
    the control-point times; both use the same samples so particle tracks are
    joinable on the sample column.
    """
    ref = reference_sampler(problem)
    gen = torch.Generator().manual_seed(problem.seed + 424242)
    z = ref(n_samples, gen)
    cfg = problem.integrator

    times = [i / (n_times - 1) for i in range(n_times)]
    clouds = []
    with torch.no_grad():
        for t in times:
            clouds.append(transport(spline.eval(t), z, cfg))
    _write_cloud_csv(os.path.join(run_dir, "trajectory.csv"), times, clouds)

    knots = spline.knots.tolist()
    kclouds = []
    with torch.no_grad():
        for t in knots:
            kclouds.append(transport(spline.eval(t), z, cfg))
    _write_cloud_csv(os.path.join(run_dir, "controls.csv"), knots, kclouds)


def finalize_run(run_dir: str, problem: ProblemConfig, result) -> str:
    """Write every artifact the external contract promises for a finished run."""
    write_config(run_dir, problem)
    write_metrics(run_dir, result.history)
    save_params(os.path.join(run_dir, "theta0.ckpt"), result.theta0, tag="boundary0")
    save_params(os.path.join(run_dir, "theta1.ckpt"), result.theta1, tag="boundary1")
    export_trajectory(run_dir, problem, result.path)
    return run_dir

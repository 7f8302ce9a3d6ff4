"""Read-only parsing of run-directory exports.

A finished run directory contains config.yaml (the full config snapshot),
metrics.csv (one row per epoch), trajectory.csv (a fixed sample cloud pushed
through the path at equispaced times) and controls.csv (the same cloud at the
spline control times). Cloud files are columnar text: time,sample,x1..xd.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import pandas as pd
import yaml

from .errors import MalformedExportError, MissingExportError


def require_file(run_dir: str, filename: str) -> str:
    path = os.path.join(run_dir, filename)
    if not os.path.isfile(path):
        raise MissingExportError(f"run dir {run_dir!r} is missing {filename}; expected {path}")
    return path


def load_config(run_dir: str) -> dict:
    """Parse config.yaml into the raw snapshot mapping."""
    path = require_file(run_dir, "config.yaml")
    with open(path) as f:
        data = yaml.safe_load(f)
    if not isinstance(data, dict) or "problem" not in data or "action" not in data:
        raise MalformedExportError(f"{path} is not a config snapshot")
    return data


def load_metrics(run_dir: str) -> pd.DataFrame:
    path = require_file(run_dir, "metrics.csv")
    df = pd.read_csv(path)
    if "epoch" not in df.columns or "total" not in df.columns:
        raise MalformedExportError(f"{path} lacks the epoch/total columns")
    return df


@dataclass(frozen=True)
class CloudFrames:
    """One sample cloud per export time, in file order."""
    times: np.ndarray            # (T,)
    frames: list                 # T arrays of shape (n_samples, d)

    @property
    def d(self) -> int:
        return self.frames[0].shape[1]

    def terminal(self) -> np.ndarray:
        return self.frames[-1]

    def stacked(self) -> np.ndarray:
        """All exported points as one (T * n_samples, d) array."""
        return np.concatenate(self.frames, axis=0)


def load_cloud(path: str) -> CloudFrames:
    """Parse a trajectory.csv/controls.csv style file into per-time frames."""
    # %.17g columns carry full float64; the default parser drops ulps
    df = pd.read_csv(path, float_precision="round_trip")
    xcols = sorted((c for c in df.columns if c.startswith("x") and c[1:].isdigit()),
                   key=lambda c: int(c[1:]))
    if "time" not in df.columns or "sample" not in df.columns or not xcols:
        raise MalformedExportError(f"{path} lacks time/sample/x* columns")
    times, frames = [], []
    for t, group in df.groupby("time", sort=True):
        times.append(float(t))
        frames.append(group.sort_values("sample")[xcols].to_numpy(dtype=np.float64))
    sizes = {f.shape for f in frames}
    if len(sizes) != 1:
        raise MalformedExportError(f"{path} has ragged frames: {sorted(sizes)}")
    return CloudFrames(np.asarray(times), frames)


def load_trajectory(run_dir: str) -> CloudFrames:
    return load_cloud(require_file(run_dir, "trajectory.csv"))


def load_controls(run_dir: str) -> CloudFrames:
    return load_cloud(require_file(run_dir, "controls.csv"))

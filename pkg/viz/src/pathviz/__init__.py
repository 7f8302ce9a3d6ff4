"""Batch renderer for run directories exported by the densitypath CLI.

The package reads only the documented export files (config.yaml, metrics.csv,
trajectory.csv, controls.csv); it never imports the optimizer and never
writes into a run directory.
"""

from .errors import MalformedExportError, MissingExportError
from .figures import (count_high_potential, cosine_similarities, render_metrics,
                      render_opinion_hist, render_path_panels)
from .loader import CloudFrames, load_cloud, load_config, load_metrics

__all__ = [
    "CloudFrames",
    "MalformedExportError",
    "MissingExportError",
    "cosine_similarities",
    "count_high_potential",
    "load_cloud",
    "load_config",
    "load_metrics",
    "render_metrics",
    "render_opinion_hist",
    "render_path_panels",
]

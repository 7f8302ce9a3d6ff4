"""Rendering-side copies of the named obstacle potentials.

The config snapshot records only the potential id, so contour overlays and
the high-potential sample check need their own evaluators. Constants must
stay in sync with the optimizer's registry; a cross-check against the
installed optimizer lives in the test suite.
"""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np

from .errors import MalformedExportError


def _compact_bumps(centers, heights, radii, sharpness: int = 2) -> Callable:
    """Sum of h * exp(1 - u^-q) bumps, u = 1 - r^2/R^2, zero at r >= R."""
    centers = np.asarray(centers, dtype=np.float64)
    heights = np.asarray(heights, dtype=np.float64)
    radii = np.asarray(radii, dtype=np.float64)

    def V(x: np.ndarray) -> np.ndarray:
        diff = x[..., None, :] - centers
        u = 1.0 - (diff * diff).sum(-1) / radii ** 2
        safe = np.clip(u, 1e-9, None)
        bump = np.exp(1.0 - safe ** -sharpness) * (u > 0)
        return (heights * bump).sum(-1)

    return V


def _gaussian_bumps(centers, heights, radii) -> Callable:
    centers = np.asarray(centers, dtype=np.float64)
    heights = np.asarray(heights, dtype=np.float64)
    radii = np.asarray(radii, dtype=np.float64)

    def V(x: np.ndarray) -> np.ndarray:
        diff = (x[..., None, :] - centers) / radii[:, None]
        sq = (diff * diff).sum(-1)
        return (heights * np.exp(-0.5 * sq)).sum(-1)

    return V


def _sigmoid_wedge(slope: float, gap: float, smoothing: float, height: float) -> Callable:
    def V(x: np.ndarray) -> np.ndarray:
        arg = x[..., 1] ** 2 - (slope ** 2 * x[..., 0] ** 2 + gap)
        return height / (1.0 + np.exp(-arg / smoothing))
    return V


def _ring() -> Callable:
    k = 8
    angles = [2.0 * math.pi * (i + 0.5) / k for i in range(k)]
    centers = [[12.0 * math.cos(a), 12.0 * math.sin(a)] for a in angles]
    return _gaussian_bumps(centers, [1.0] * k, [1.0] * k)


_REGISTRY: dict[str, Callable] = {
    "scc-bumps": _compact_bumps(
        centers=[[-0.7, -0.7], [0.7, 0.7], [-0.84, -0.56], [0.84, 0.56]],
        heights=[40.0, 40.0, 10.0, 10.0],
        radii=[0.3, 0.3, 0.9, 0.9],
    ),
    "vneck-wedge": _sigmoid_wedge(slope=0.3, gap=0.36, smoothing=0.1, height=1.0),
    "gmm-ring": _ring(),
}


def potential_fn(potential_id: Optional[str]) -> Optional[Callable]:
    """Evaluator for a snapshot's potential id; None when the run had none."""
    if potential_id is None:
        return None
    if potential_id not in _REGISTRY:
        raise MalformedExportError(
            f"unknown potential {potential_id!r}; renderer knows {sorted(_REGISTRY)}")
    return _REGISTRY[potential_id]


def potential_names() -> list:
    return sorted(_REGISTRY)

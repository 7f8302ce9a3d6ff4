"""Named obstacle potentials.

Analytic stand-ins with fully documented constants; the geometry (a pair of
gates forcing an S-shaped detour, a narrowing wedge, a ring of bumps) is what
the benchmark problems rely on, never the exact numbers. All potentials broadcast over arbitrary
leading batch dimensions, map (..., d) -> (...), are >= 0, and are finite on
[-20, 20]^d.

Registry constants:

  scc-bumps      two toll gates on the (-2,-2) -> (2,2) diagonal, each a tall
                 narrow core (height 40, support 0.3) at (-0.7,-0.7)/(0.7,0.7)
                 under a low wide apron (height 10, support 0.9) offset
                 perpendicular at (-0.84,-0.56)/(0.84,0.56); the straight
                 transport pays the cores near peak, the aprons steer the
                 detour into an S, and outside the supports the cost is
                 exactly zero
  vneck-wedge    sigmoid of x2^2 - (a^2 x1^2 + c), a=0.3, c=0.36, s=0.1, height 1:
                 a hyperbolic channel through the origin, open at (-11,-1)/(11,1)
  gmm-ring       8 Gaussian bumps, height 1, radius 1.0, on a circle of radius 12
                 at angles offset half a step from the outer boundary modes
"""

from __future__ import annotations

import math
from typing import Callable

import torch

from .errors import ConfigurationError


def gaussian_mixture_obstacle(centers, heights, radii) -> Callable:
    """Sum of Gaussian bumps; radii may be scalars or per-axis (anisotropic)."""
    centers = torch.as_tensor(centers, dtype=torch.float64)
    heights = torch.as_tensor(heights, dtype=torch.float64)
    radii = torch.as_tensor(radii, dtype=torch.float64)
    if radii.ndim == 1:
        radii = radii.unsqueeze(-1).expand(-1, centers.shape[-1])

    def V(x: torch.Tensor) -> torch.Tensor:
        diff = (x.unsqueeze(-2) - centers) / radii    # (..., k, d)
        sq = (diff * diff).sum(-1)
        return (heights * torch.exp(-0.5 * sq)).sum(-1)

    return V


def compact_bump_obstacle(centers, heights, radii, sharpness: int = 2) -> Callable:
    """Sum of C^inf bumps h * exp(1 - u^-q), u = 1 - r^2/R^2, identically zero at r >= R.

    Compact support matters for avoidance benchmarks: once the flow clears a
    bump's support the term vanishes exactly instead of leaving a Gaussian tail
    that every scattered sample keeps paying. Larger sharpness q pulls the
    half-peak radius inward (q=2: 0.48 R) while keeping a graded core.
    """
    centers = torch.as_tensor(centers, dtype=torch.float64)
    heights = torch.as_tensor(heights, dtype=torch.float64)
    radii = torch.as_tensor(radii, dtype=torch.float64)

    def V(x: torch.Tensor) -> torch.Tensor:
        diff = x.unsqueeze(-2) - centers                  # (..., k, d)
        u = 1.0 - (diff * diff).sum(-1) / radii ** 2
        # clamp keeps exp's argument finite; the mask zeroes the outside anyway
        safe = u.clamp_min(1e-9)
        bump = torch.exp(1.0 - safe ** -sharpness) * (u > 0)
        return (heights * bump).sum(-1)

    return V


def smoothed_box(a, b, height: float, smoothing: float) -> Callable:
    a = torch.as_tensor(a, dtype=torch.float64)
    b = torch.as_tensor(b, dtype=torch.float64)

    def V(x: torch.Tensor) -> torch.Tensor:
        lo = torch.sigmoid((x - a) / smoothing)
        hi = torch.sigmoid((b - x) / smoothing)
        return height * (lo * hi).prod(-1)

    return V


def _sum_potentials(parts) -> Callable:
    def V(x: torch.Tensor) -> torch.Tensor:
        return sum(p(x) for p in parts)
    return V


def sigmoid_wedge(slope: float, gap: float, smoothing: float, height: float) -> Callable:
    def V(x: torch.Tensor) -> torch.Tensor:
        arg = x[..., 1] ** 2 - (slope ** 2 * x[..., 0] ** 2 + gap)
        return height * torch.sigmoid(arg / smoothing)
    return V


def _gmm_ring_obstacle() -> Callable:
    k = 8
    angles = [2.0 * math.pi * (i + 0.5) / k for i in range(k)]
    centers = [[12.0 * math.cos(a), 12.0 * math.sin(a)] for a in angles]
    return gaussian_mixture_obstacle(centers, [1.0] * k, [1.0] * k)


_REGISTRY: dict[str, Callable] = {
    "scc-bumps": compact_bump_obstacle(
        centers=[[-0.7, -0.7], [0.7, 0.7], [-0.84, -0.56], [0.84, 0.56]],
        heights=[40.0, 40.0, 10.0, 10.0],
        radii=[0.3, 0.3, 0.9, 0.9],
    ),
    "vneck-wedge": sigmoid_wedge(slope=0.3, gap=0.36, smoothing=0.1, height=1.0),
    "gmm-ring": _gmm_ring_obstacle(),
}


def lookup_potential(name: str) -> Callable:
    if name not in _REGISTRY:
        raise ConfigurationError(f"unknown potential {name!r}; have {sorted(_REGISTRY)}")
    return _REGISTRY[name]


def potential_names() -> list[str]:
    return sorted(_REGISTRY)

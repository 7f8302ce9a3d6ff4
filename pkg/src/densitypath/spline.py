"""Piecewise cubic Hermite spline through K+2 parameter vectors on uniform knots.

Tangents are local finite differences of the control points: central
differences in the interior, one-sided three-point (quadratic) differences at
the endpoints, which keeps the interpolant C^1, reproduces straight lines for
collinear control points, and preserves third-order max error up to the
boundary. With only two control points the endpoint rule degenerates to the
secant, so the K=0 spline is exactly the linear interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import ConfigurationError, DomainError
from .mlp import Architecture, ParamVector


def _tangents(values: torch.Tensor, h: float) -> torch.Tensor:
    """Finite-difference tangents for control values of shape (K+2, D)."""
    n = values.shape[0]
    if n == 2:
        m = (values[1] - values[0]) / h
        return torch.stack([m, m])
    interior = (values[2:] - values[:-2]) / (2.0 * h)
    first = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h)
    last = (3.0 * values[-1] - 4.0 * values[-2] + values[-3]) / (2.0 * h)
    return torch.cat([first.unsqueeze(0), interior, last.unsqueeze(0)])


@dataclass(frozen=True)
class SplinePath:
    """Immutable spline over [0,1]; rebuild after any control-point update."""

    control: tuple[ParamVector, ...]
    values: torch.Tensor      # (K+2, D), stacked control values
    tangents: torch.Tensor    # (K+2, D)
    arch: Architecture
    frozen_boundary: bool = True

    @property
    def num_interior(self) -> int:
        return len(self.control) - 2

    @property
    def knots(self) -> torch.Tensor:
        n = len(self.control)
        return torch.linspace(0.0, 1.0, n, dtype=self.values.dtype)

    def _locate(self, t: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, float]:
        segs = len(self.control) - 1
        if bool((t < 0).any()) or bool((t > 1).any()):
            raise DomainError(f"spline evaluated outside [0,1]")
        j = torch.clamp((t * segs).long(), max=segs - 1)
        h = 1.0 / segs
        u = t / h - j.to(t.dtype)
        return j, u, h

    def eval_many(self, ts: torch.Tensor) -> torch.Tensor:
        """Spline values at times ts (shape (B,)) as a (B, D) tensor."""
        j, u, h = self._locate(ts)
        u = u.unsqueeze(1)
        u2, u3 = u * u, u * u * u
        h00 = 2.0 * u3 - 3.0 * u2 + 1.0
        h10 = u3 - 2.0 * u2 + u
        h01 = -2.0 * u3 + 3.0 * u2
        h11 = u3 - u2
        p0, p1 = self.values[j], self.values[j + 1]
        m0, m1 = self.tangents[j], self.tangents[j + 1]
        return h00 * p0 + h10 * h * m0 + h01 * p1 + h11 * h * m1

    def deriv_many(self, ts: torch.Tensor) -> torch.Tensor:
        """d theta/dt at times ts as a (B, D) tensor."""
        j, u, h = self._locate(ts)
        u = u.unsqueeze(1)
        u2 = u * u
        d00 = 6.0 * u2 - 6.0 * u
        d10 = 3.0 * u2 - 4.0 * u + 1.0
        d01 = -6.0 * u2 + 6.0 * u
        d11 = 3.0 * u2 - 2.0 * u
        p0, p1 = self.values[j], self.values[j + 1]
        m0, m1 = self.tangents[j], self.tangents[j + 1]
        return (d00 * p0 + d10 * h * m0 + d01 * p1 + d11 * h * m1) / h

    def eval(self, t: float) -> ParamVector:
        vec = self.eval_many(torch.as_tensor([t], dtype=self.values.dtype))[0]
        return ParamVector(vec, self.arch)

    def deriv(self, t: float) -> torch.Tensor:
        return self.deriv_many(torch.as_tensor([t], dtype=self.values.dtype))[0]


def build_spline(control: list[ParamVector], frozen_boundary: bool = True) -> SplinePath:
    """Assemble the spline; tangents are recomputed from the control points."""
    if len(control) < 2:
        raise ConfigurationError("need at least two control points")
    arch = control[0].arch
    for c in control[1:]:
        if c.arch != arch:
            raise ConfigurationError("control points mix architectures")
    values = torch.stack([c.values for c in control])
    h = 1.0 / (len(control) - 1)
    return SplinePath(tuple(control), values, _tangents(values, h), arch, frozen_boundary)


def linear_init(theta0: ParamVector, theta1: ParamVector, K: int) -> SplinePath:
    """Spline through K+2 control points on the segment from theta0 to theta1."""
    if theta0.arch != theta1.arch:
        raise ConfigurationError("endpoint architectures differ")
    if K < 0:
        raise ConfigurationError("K must be >= 0")
    ts = torch.linspace(0.0, 1.0, K + 2, dtype=theta0.values.dtype)
    control = [
        ParamVector((1.0 - t) * theta0.values + t * theta1.values, theta0.arch)
        for t in ts
    ]
    return build_spline(control)

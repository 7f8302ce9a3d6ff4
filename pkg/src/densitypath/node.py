"""Neural-ODE pushforward transport with optional log-density and score channels.

The map T_theta(z) = z + int_0^1 v_theta(tau, psi) dtau is realized by fixed-step
midpoint integration, unrolled so gradients w.r.t. theta are the exact gradients
of the discrete objective. Alongside the positions the integrator can carry

    d/dtau log rho = -div v
    d/dtau s       = -grad(div v) - (grad v)^T s

with standard-normal initial conditions log rho(0,z) = -d/2 log(2pi) - |z|^2/2
and s(0) = -z. Divergence terms are exact (d nested backward passes) or, for the
log-density channel only, Hutchinson estimates with Rademacher probes; the score
channel has no unbiased trace-free estimator and demands exact mode.

Everything integrates B parameter vectors at once on states of shape (B, M, d);
the single-theta entry points are thin wrappers over the stacked core.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass
from typing import Callable

import torch

from .errors import (ConfigurationError, NumericalBlowupError, ShapeMismatchError,
                     UnsupportedModeError)
from .mlp import Architecture, ParamVector, mlp_forward_stacked


@dataclass(frozen=True)
class IntegratorConfig:
    num_steps: int = 10
    scheme: str = "midpoint"
    divergence_mode: str = "exact"   # exact | hutchinson
    hutchinson_probes: int = 8

    def __post_init__(self):
        if self.num_steps < 1:
            raise ConfigurationError("num_steps must be >= 1")
        if self.scheme != "midpoint":
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        if self.divergence_mode not in ("exact", "hutchinson"):
            raise ConfigurationError(f"unknown divergence mode {self.divergence_mode!r}")
        if self.hutchinson_probes < 1:
            raise ConfigurationError("hutchinson_probes must be >= 1")


@dataclass
class AugmentedBatch:
    """Particle states with optional transported channels.

    positions: (M, d) or stacked (B, M, d); logdens matches without the last
    axis; score matches positions. sample_seed records the seed that drew z,
    when the caller knows it.
    """

    positions: torch.Tensor
    logdens: torch.Tensor | None = None
    score: torch.Tensor | None = None
    sample_seed: int | None = None


def standard_normal_logdens(z: torch.Tensor) -> torch.Tensor:
    d = z.shape[-1]
    return -0.5 * d * math.log(2.0 * math.pi) - 0.5 * (z * z).sum(-1)


def _grad_or_zero(out: torch.Tensor, x: torch.Tensor, create_graph: bool = True) -> torch.Tensor:
    """autograd.grad treating graph-free outputs as constants with zero gradient.

    Affine and constant velocity fields produce divergences (and products) that
    do not depend on x at all; autograd refuses such outputs, but the channel
    equations are still well defined there.
    """
    if not out.requires_grad:
        return torch.zeros_like(x)
    return torch.autograd.grad(out, x, create_graph=create_graph,
                               allow_unused=True, materialize_grads=True)[0]


def _exact_divergence(v: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    parts = []
    for i in range(v.shape[-1]):
        g = _grad_or_zero(v[..., i].sum(), x)
        parts.append(g[..., i])
    return sum(parts)


def _hutchinson_divergence(v: torch.Tensor, x: torch.Tensor, probes: int,
                           generator: torch.Generator | None) -> torch.Tensor:
    est = None
    for _ in range(probes):
        eps = torch.randint(0, 2, x.shape, generator=generator, dtype=torch.int64)
        eps = (eps * 2 - 1).to(x.dtype)
        g = _grad_or_zero((v * eps).sum(), x)
        term = (g * eps).sum(-1)
        est = term if est is None else est + term
    return est / probes


def divergence(v_eval: Callable, tau, x: torch.Tensor, mode: str = "exact",
               probes: int = 8, generator: torch.Generator | None = None) -> torch.Tensor:
    """div v at (tau, x) for a velocity callable v_eval(tau, x) -> v."""
    with torch.enable_grad():
        xx = x.detach().clone().requires_grad_(True)
        v = v_eval(tau, xx)
        if mode == "exact":
            return _exact_divergence(v, xx).detach()
        return _hutchinson_divergence(v, xx, probes, generator).detach()


def grad_divergence(v_eval: Callable, tau, x: torch.Tensor) -> torch.Tensor:
    """Spatial gradient of div v at (tau, x), exact mode only."""
    with torch.enable_grad():
        xx = x.detach().clone().requires_grad_(True)
        v = v_eval(tau, xx)
        div = _exact_divergence(v, xx)
        return _grad_or_zero(div.sum(), xx, create_graph=False).detach()


def _field_from_values(values: torch.Tensor, arch: Architecture) -> Callable:
    def f(taus: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
        return mlp_forward_stacked(x, taus, values, arch)
    return f


def _aug_rhs(field: Callable, taus: torch.Tensor, x: torch.Tensor,
             s: torch.Tensor | None, want_logdens: bool, want_score: bool,
             cfg: IntegratorConfig, generator: torch.Generator | None):
    v = field(taus, x)
    dlog = None
    ds = None
    if want_logdens or want_score:
        if want_score or cfg.divergence_mode == "exact":
            div = _exact_divergence(v, x)
        else:
            div = _hutchinson_divergence(v, x, cfg.hutchinson_probes, generator)
        dlog = -div
        if want_score:
            gdiv = _grad_or_zero(div.sum(), x)
            jts = _grad_or_zero((v * s).sum(), x)
            ds = -gdiv - jts
    return v, dlog, ds


def _integrate_stacked(field: Callable, z: torch.Tensor, num_nodes: int,
                       cfg: IntegratorConfig, want_logdens: bool, want_score: bool,
                       t_span=(0.0, 1.0), generator: torch.Generator | None = None,
                       initial: AugmentedBatch | None = None) -> AugmentedBatch:
    """Midpoint integration of B copies of the (augmented) system.

    field(taus, x) evaluates B velocity fields on (B, M, d) states; all B
    systems share the initial batch. Channels require grad-enabled graph
    construction, so this never runs under no_grad when channels are on.
    """
    a, b = float(t_span[0]), float(t_span[1])
    channels = want_logdens or want_score
    if want_score and cfg.divergence_mode == "hutchinson":
        raise UnsupportedModeError(
            "score channel has no unbiased stochastic divergence estimator; use exact mode"
        )
    if z.ndim != 2:
        raise ShapeMismatchError(f"z must be (M, d), got {tuple(z.shape)}")

    base = z.unsqueeze(0).expand(num_nodes, *z.shape)
    if initial is not None:
        x = initial.positions
        l = initial.logdens
        s = initial.score
    elif channels:
        # x must be grad-enabled for divergence; s keeps its own route to z so
        # the (grad v)^T s product does not pick up a spurious path through x.
        x = base.clone()
        l = standard_normal_logdens(z).unsqueeze(0).expand(num_nodes, z.shape[0]) if want_logdens else None
        s = (-z).unsqueeze(0).expand_as(base) if want_score else None
    else:
        x = base
        l, s = None, None
    if channels and not x.requires_grad:
        x = x.clone().requires_grad_(True)

    dt = (b - a) / cfg.num_steps
    with torch.enable_grad() if channels else contextlib.nullcontext():
        for k in range(cfg.num_steps):
            t0 = a + k * dt
            taus = torch.full((num_nodes,), t0, dtype=z.dtype)
            v1, dl1, ds1 = _aug_rhs(field, taus, x, s, want_logdens, want_score, cfg, generator)
            xm = x + 0.5 * dt * v1
            sm = s + 0.5 * dt * ds1 if want_score else None
            taus = torch.full((num_nodes,), t0 + 0.5 * dt, dtype=z.dtype)
            v2, dl2, ds2 = _aug_rhs(field, taus, xm, sm, want_logdens, want_score, cfg, generator)
            x = x + dt * v2
            if want_logdens:
                l = l + dt * dl2
            if want_score:
                s = s + dt * ds2
            if not bool(torch.isfinite(x.detach()).all()):
                raise NumericalBlowupError(k)
    return AugmentedBatch(positions=x, logdens=l, score=s)


def _wrap_plain_field(v_eval: Callable) -> Callable:
    def f(taus: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
        return v_eval(float(taus[0]), x)
    return f


def transport(theta: ParamVector, z: torch.Tensor, cfg: IntegratorConfig = IntegratorConfig(),
              t_span=(0.0, 1.0)) -> torch.Tensor:
    """T_theta(z) for a (M, d) batch of reference samples."""
    field = _field_from_values(theta.values.unsqueeze(0), theta.arch)
    out = _integrate_stacked(field, z, 1, cfg, False, False, t_span)
    return out.positions[0]


def transport_field(v_eval: Callable, z: torch.Tensor, cfg: IntegratorConfig = IntegratorConfig(),
                    t_span=(0.0, 1.0)) -> torch.Tensor:
    """Transport under an arbitrary velocity callable v_eval(tau, x) -> v."""
    out = _integrate_stacked(_wrap_plain_field(v_eval), z, 1, cfg, False, False, t_span)
    return out.positions[0]


def transport_augmented(theta: ParamVector, z: torch.Tensor,
                        cfg: IntegratorConfig = IntegratorConfig(),
                        want_logdens: bool = True, want_score: bool = False,
                        t_span=(0.0, 1.0), generator: torch.Generator | None = None,
                        initial: AugmentedBatch | None = None,
                        sample_seed: int | None = None) -> AugmentedBatch:
    """Transport with channels; reference must be standard normal unless
    `initial` supplies the starting channel values (needed when t_span does not
    start at 0)."""
    if t_span[0] != 0.0 and initial is None:
        raise ConfigurationError("restarting mid-flight requires the initial AugmentedBatch")
    field = _field_from_values(theta.values.unsqueeze(0), theta.arch)
    if initial is not None:
        initial = AugmentedBatch(
            positions=initial.positions.unsqueeze(0) if initial.positions.ndim == 2 else initial.positions,
            logdens=initial.logdens.unsqueeze(0) if initial.logdens is not None and initial.logdens.ndim == 1 else initial.logdens,
            score=initial.score.unsqueeze(0) if initial.score is not None and initial.score.ndim == 2 else initial.score,
        )
    out = _integrate_stacked(field, z, 1, cfg, want_logdens, want_score, t_span, generator, initial)
    return AugmentedBatch(
        positions=out.positions[0],
        logdens=out.logdens[0] if out.logdens is not None else None,
        score=out.score[0] if out.score is not None else None,
        sample_seed=sample_seed,
    )


def transport_augmented_field(v_eval: Callable, z: torch.Tensor,
                              cfg: IntegratorConfig = IntegratorConfig(),
                              want_logdens: bool = True, want_score: bool = False,
                              t_span=(0.0, 1.0),
                              generator: torch.Generator | None = None) -> AugmentedBatch:
    """Augmented transport under an arbitrary velocity callable (oracle stubs)."""
    out = _integrate_stacked(_wrap_plain_field(v_eval), z, 1, cfg, want_logdens, want_score,
                             t_span, generator)
    return AugmentedBatch(
        positions=out.positions[0],
        logdens=out.logdens[0] if out.logdens is not None else None,
        score=out.score[0] if out.score is not None else None,
    )


def transport_grid(values: torch.Tensor, arch: Architecture, z: torch.Tensor,
                   cfg: IntegratorConfig, want_logdens: bool = False,
                   want_score: bool = False,
                   generator: torch.Generator | None = None) -> AugmentedBatch:
    """Transport the same z batch under B parameter vectors simultaneously.

    values: (B, D). Returns stacked channels of shape (B, M, ...). This is the
    hot path for action evaluation over a time grid.
    """
    field = _field_from_values(values, arch)
    return _integrate_stacked(field, z, values.shape[0], cfg, want_logdens, want_score,
                              (0.0, 1.0), generator)

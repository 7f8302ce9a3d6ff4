"""Conditional flow matching for fitting boundary maps.

A velocity field is regressed onto straight-line probability paths between
reference and target samples: x_tau = (1 - (1 - sigma_min) tau) z + tau x1
with target velocity u = x1 - (1 - sigma_min) z. Minimizing the expected
squared error over tau ~ U[0,1] and independent (z, x1) pairs trains the
transport map to push the reference onto the target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .errors import ConfigurationError, TrainingDivergedError
from .mlp import Architecture, ParamVector, init_params, mlp_forward
from .optim import adam_step, init_adam


@dataclass(frozen=True)
class FMConfig:
    batch_size: int = 256
    steps: int = 2000
    learning_rate: float = 1e-3
    sigma_min: float = 1e-2

    def __post_init__(self):
        if self.batch_size < 1 or self.steps < 0:
            raise ConfigurationError("batch_size must be >= 1 and steps >= 0")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        if not 0.0 <= self.sigma_min <= 1.0:
            raise ConfigurationError("sigma_min must lie in [0, 1]")


def fm_loss(theta: ParamVector, x1: torch.Tensor, z: torch.Tensor,
            sigma_min: float = 1e-2,
            generator: torch.Generator | None = None) -> torch.Tensor:
    """Flow-matching regression loss for one batch of (reference, target) pairs."""
    if x1.shape != z.shape:
        raise ConfigurationError(
            f"target batch {tuple(x1.shape)} and reference batch {tuple(z.shape)} must match")
    n = x1.shape[0]
    tau = torch.rand(n, dtype=x1.dtype, generator=generator)
    shrink = 1.0 - (1.0 - sigma_min) * tau
    xt = shrink.unsqueeze(1) * z + tau.unsqueeze(1) * x1
    u = x1 - (1.0 - sigma_min) * z
    v = mlp_forward(xt, tau, theta)
    return ((v - u) ** 2).sum(dim=1).mean()


@dataclass(frozen=True)
class PretrainResult:
    params: ParamVector
    final_loss: float
    losses: tuple


def pretrain_boundary(target_sampler, arch: Architecture, cfg: FMConfig = FMConfig(),
                      seed: int = 0, reference_sampler=None) -> PretrainResult:
    """Fit a velocity field carrying the reference onto the target density.

    target_sampler / reference_sampler are callables (n, generator) -> (n, d)
    float64 tensors; the reference defaults to a standard normal. The same
    seed gives bitwise-identical results. Learning rate decays on a cosine
    from learning_rate to learning_rate/20 over the run.
    """
    gen = torch.Generator().manual_seed(seed)
    theta = init_params(arch, gen)
    state = init_adam(theta.values)
    d = arch.input_dim
    losses = []
    loss = torch.zeros(())
    for step in range(cfg.steps):
        values = state.params.clone().requires_grad_(True)
        x1 = target_sampler(cfg.batch_size, gen)
        if reference_sampler is None:
            z = torch.randn(cfg.batch_size, d, dtype=torch.float64, generator=gen)
        else:
            z = reference_sampler(cfg.batch_size, gen)
        loss = fm_loss(ParamVector(values, arch), x1, z, cfg.sigma_min, gen)
        if not bool(torch.isfinite(loss.detach())):
            raise TrainingDivergedError(step=step, seed=seed)
        grad = torch.autograd.grad(loss, values)[0]
        frac = step / max(cfg.steps - 1, 1)
        lr = cfg.learning_rate * (0.525 + 0.475 * math.cos(math.pi * frac))
        state = adam_step(state, grad, lr)
        losses.append(float(loss.detach()))
    return PretrainResult(params=ParamVector(state.params.detach().clone(), arch),
                          final_loss=float(loss.detach()) if cfg.steps else float("nan"),
                          losses=tuple(losses))

"""Adam with step/cosine-restart schedules and the alternating optimization loop.

The optimizer is functional: parameters are plain tensors, adam_step maps
(state, grad, lr) to a new state, and the spline is rebuilt from fresh leaf
tensors every step so each action evaluation owns its graph. Three procedures:

  path_optimize     Adam on the interior control points, boundaries frozen
  coupling_optimize Adam on the endpoint parameters against
                    alpha (fm_loss(theta0) + fm_loss(theta1)) + action
  geodesic_warmup   path_optimize with all potentials off on a coarse grid

and `solve` runs the outer loop: pretrain/accept boundary parameters, linear
init, warmup, then alternate the two phases for a fixed number of epochs with
a fresh reference batch per epoch, recording per-epoch metrics.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, fields, replace
from typing import Callable

import torch

from .action import ActionSpec, ActionValue, Quadrature, action
from .errors import ConfigurationError
from .mlp import ParamVector, param_count
from .node import IntegratorConfig, transport
from .spline import SplinePath, build_spline, linear_init

BETA1, BETA2, EPS = 0.9, 0.999, 1e-8


@dataclass(frozen=True)
class AdamState:
    params: torch.Tensor
    m: torch.Tensor
    v: torch.Tensor
    step: int = 0


def init_adam(params: torch.Tensor) -> AdamState:
    p = params.detach().clone()
    return AdamState(p, torch.zeros_like(p), torch.zeros_like(p), 0)


def adam_step(state: AdamState, grad: torch.Tensor, lr: float) -> AdamState:
    """One bias-corrected Adam update; returns the new state."""
    if grad.shape != state.params.shape:
        raise ConfigurationError(
            f"gradient shape {tuple(grad.shape)} does not match parameters {tuple(state.params.shape)}"
        )
    t = state.step + 1
    m = BETA1 * state.m + (1.0 - BETA1) * grad
    v = BETA2 * state.v + (1.0 - BETA2) * grad * grad
    mhat = m / (1.0 - BETA1 ** t)
    vhat = v / (1.0 - BETA2 ** t)
    params = state.params - lr * mhat / (vhat.sqrt() + EPS)
    return AdamState(params, m, v, t)


@dataclass(frozen=True)
class SchedulerSpec:
    """Learning-rate schedule evaluated per epoch of the outer loop."""

    kind: str = "constant"           # constant | step | cosine-restarts
    step_size: int = 10
    gamma: float = 0.1
    t0: int = 5
    t_mult: int = 2
    eta_min: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "step", "cosine-restarts"):
            raise ConfigurationError(f"unknown scheduler kind {self.kind!r}")
        if self.kind == "step" and self.step_size < 1:
            raise ConfigurationError("step scheduler needs step_size >= 1")
        if self.kind == "cosine-restarts" and (self.t0 < 1 or self.t_mult < 1):
            raise ConfigurationError("cosine-restarts needs t0 >= 1 and t_mult >= 1")

    def lr_at(self, base_lr: float, epoch: int) -> float:
        if self.kind == "constant":
            return base_lr
        if self.kind == "step":
            return base_lr * self.gamma ** (epoch // self.step_size)
        rem, ti = epoch, self.t0
        while rem >= ti:
            rem -= ti
            ti *= self.t_mult
        return self.eta_min + 0.5 * (base_lr - self.eta_min) * (1.0 + math.cos(math.pi * rem / ti))


@dataclass(frozen=True)
class OptimBudget:
    epochs: int = 10
    path_steps: int = 30
    coupling_steps: int = 20
    warmup_steps: int = 100
    path_lr: float = 1e-3
    coupling_lr: float = 1e-4
    path_scheduler: SchedulerSpec = field(default_factory=SchedulerSpec)
    coupling_scheduler: SchedulerSpec = field(default_factory=SchedulerSpec)
    alpha: float = 1e5

    def __post_init__(self):
        if min(self.epochs, self.path_steps, self.coupling_steps, self.warmup_steps) < 0:
            raise ConfigurationError("budget counts must be >= 0")
        if self.path_lr <= 0 or self.coupling_lr <= 0:
            raise ConfigurationError("learning rates must be positive")
        if self.alpha < 0:
            raise ConfigurationError("alpha must be >= 0")


def _rebuild(values0: torch.Tensor, interior: torch.Tensor, values1: torch.Tensor,
             arch) -> SplinePath:
    stacked = torch.cat([values0.unsqueeze(0), interior, values1.unsqueeze(0)])
    control = [ParamVector(stacked[i], arch) for i in range(stacked.shape[0])]
    return build_spline(control)


def path_optimize(path: SplinePath, spec: ActionSpec, quad: Quadrature, steps: int,
                  lr: float, z: torch.Tensor,
                  cfg: IntegratorConfig = IntegratorConfig(),
                  state: AdamState | None = None,
                  generator: torch.Generator | None = None,
                  xi_sampler: Callable | None = None):
    """Adam on the interior control points; boundaries stay bit-identical.

    Returns (path, losses, state). A non-finite loss aborts the phase and the
    last finite path is returned. K=0 or steps=0 is a no-op.
    """
    K = path.num_interior
    if K == 0 or steps == 0:
        return path, [], state
    b0 = path.values[0].detach().clone()
    b1 = path.values[-1].detach().clone()
    if state is None:
        state = init_adam(path.values[1:-1])
    losses: list[float] = []
    best = path
    for _ in range(steps):
        interior = state.params.clone().requires_grad_(True)
        current = _rebuild(b0, interior, b1, path.arch)
        val = action(current, z, spec, quad, cfg, generator, xi_sampler)
        loss = val.total
        if not bool(torch.isfinite(loss.detach())):
            return best, losses, state
        grad = torch.autograd.grad(loss, interior)[0]
        state = adam_step(state, grad, lr)
        losses.append(float(loss.detach()))
        best = current
    final = _rebuild(b0, state.params, b1, path.arch)
    return final, losses, state


def geodesic_warmup(path: SplinePath, quad: Quadrature, steps: int, lr: float,
                    z: torch.Tensor, cfg: IntegratorConfig = IntegratorConfig(),
                    state: AdamState | None = None):
    """Potential-free path optimization on a grid capped at 15 nodes."""
    coarse = Quadrature(min(quad.N, 15), quad.M)
    return path_optimize(path, ActionSpec(), coarse, steps, lr, z, cfg, state)


def coupling_optimize(theta0: ParamVector, theta1: ParamVector, path: SplinePath,
                      spec: ActionSpec, quad: Quadrature, steps: int, lr: float,
                      alpha: float, samplers, z: torch.Tensor,
                      cfg: IntegratorConfig = IntegratorConfig(),
                      state: AdamState | None = None,
                      generator: torch.Generator | None = None,
                      freeze_theta0: bool = False,
                      sigma_min: float = 1e-2,
                      action_weight: float = 1.0,
                      xi_sampler: Callable | None = None):
    """Adam on the endpoint parameters; interior control points frozen.

    Minimizes alpha*(fm_loss(theta0, rho0 batch, z) + fm_loss(theta1, rho1
    batch, z)) + action, resampling the boundary batches every step. samplers
    is a (sampler0, sampler1) pair of callables (n, generator) -> samples.
    Returns (theta0, theta1, losses, state).
    """
    from .flowmatch import fm_loss

    if steps == 0:
        return theta0, theta1, [], state
    sampler0, sampler1 = samplers
    arch = theta0.arch
    D = theta0.dim
    interior = path.values[1:-1].detach().clone()
    frozen0 = theta0.values.detach().clone()
    if state is None:
        flat = theta1.values if freeze_theta0 else torch.cat([theta0.values, theta1.values])
        state = init_adam(flat)
    losses: list[float] = []
    M = z.shape[0]
    for _ in range(steps):
        flat = state.params.clone().requires_grad_(True)
        if freeze_theta0:
            v0, v1 = frozen0, flat
        else:
            v0, v1 = flat[:D], flat[D:]
        th0 = ParamVector(v0, arch)
        th1 = ParamVector(v1, arch)
        x0 = sampler0(M, generator)
        x1 = sampler1(M, generator)
        fit = fm_loss(th0, x0, z, sigma_min, generator) + fm_loss(th1, x1, z, sigma_min, generator)
        current = _rebuild(v0, interior, v1, arch)
        loss = alpha * fit
        if action_weight != 0.0:
            loss = loss + action_weight * action(current, z, spec, quad, cfg, generator, xi_sampler).total
        if not bool(torch.isfinite(loss.detach())):
            break
        grad = torch.autograd.grad(loss, flat)[0]
        state = adam_step(state, grad, lr)
        losses.append(float(loss.detach()))
    flat = state.params
    if freeze_theta0:
        out0, out1 = ParamVector(frozen0, arch), ParamVector(flat.detach().clone(), arch)
    else:
        out0 = ParamVector(flat[:D].detach().clone(), arch)
        out1 = ParamVector(flat[D:].detach().clone(), arch)
    return out0, out1, losses, state


@dataclass
class SolveResult:
    path: SplinePath
    theta0: ParamVector
    theta1: ParamVector
    history: list[dict]
    warmup_action: float
    init_action: ActionValue
    final_action: ActionValue


def _draw(generator: torch.Generator, n: int, d: int) -> torch.Tensor:
    return torch.randn(n, d, dtype=torch.float64, generator=generator)


def xi_sampler_for(problem, seed_offset: int = 101):
    """Per-node random directions for the alignment drift; None otherwise."""
    if problem.action.kinetic_mode != "drift_mismatch":
        return None
    gen = torch.Generator().manual_seed(problem.seed + seed_offset)
    return lambda j: torch.randn(problem.d, dtype=torch.float64, generator=gen)


def solve(problem, theta0: ParamVector | None = None, theta1: ParamVector | None = None,
          initial_path: SplinePath | None = None, on_epoch: Callable | None = None,
          progress: Callable | None = None) -> SolveResult:
    """Run the full alternating optimization for a registered problem.

    Boundary parameters are flow-matching pretrained unless supplied. Per
    epoch: one fresh reference batch feeds both phases, then metrics are
    evaluated on a held-out batch with a fixed evaluation seed. on_epoch, when
    given, receives (epoch_index, path, metrics_row) after each epoch.

    initial_path resumes from an existing spline instead of the linear
    interpolant; boundary parameters are taken from its endpoints and
    pretraining is skipped. Resumed paths are already shaped, so callers
    normally zero warmup_steps to avoid re-flattening them.
    """
    from .flowmatch import pretrain_boundary
    from .problems import reference_sampler, torch_sampler

    budget = problem.budget
    quad = problem.quad
    cfg = problem.integrator
    gen = torch.Generator().manual_seed(problem.seed)
    eval_gen_seed = problem.seed + 7919

    ref = reference_sampler(problem)
    s0 = torch_sampler(problem.boundary0)
    s1 = torch_sampler(problem.boundary1)

    log = progress if progress is not None else lambda msg: None

    if initial_path is not None:
        expected = param_count(problem.arch)
        if initial_path.control[0].values.numel() != expected:
            raise ConfigurationError(
                f"initial_path has {initial_path.control[0].values.numel()} parameters "
                f"per control point, architecture needs {expected}")
        theta0 = initial_path.control[0]
        theta1 = initial_path.control[-1]
    if theta0 is None:
        if problem.freeze_theta0:
            theta0 = problem.zero_params()
        else:
            log("pretraining boundary 0")
            theta0 = pretrain_boundary(s0, problem.arch, problem.fm,
                                       seed=problem.seed + 11, reference_sampler=ref).params
    if theta1 is None:
        log("pretraining boundary 1")
        theta1 = pretrain_boundary(s1, problem.arch, problem.fm,
                                   seed=problem.seed + 13, reference_sampler=ref).params

    xi_sampler = xi_sampler_for(problem)

    path = initial_path if initial_path is not None else linear_init(theta0, theta1, problem.K)
    z0 = ref(quad.M, gen)
    init_val = _eval_metrics(problem, path, theta0, theta1, ref, eval_gen_seed, cfg, xi_seed=problem.seed + 101)
    log(f"linear init: action {init_val['total']:.4f}")

    path_state = None
    if budget.warmup_steps > 0:
        path, warm_losses, path_state = geodesic_warmup(
            path, quad, budget.warmup_steps, budget.path_lr, z0, cfg, None)
        log(f"warmup done ({budget.warmup_steps} steps)")
    warm_val = _eval_metrics(problem, path, theta0, theta1, ref, eval_gen_seed, cfg, xi_seed=problem.seed + 101)
    warmup_action = warm_val["total"]

    coup_state = None
    history: list[dict] = []
    for epoch in range(budget.epochs):
        t_start = time.perf_counter()
        z = ref(quad.M, gen)
        lr_p = budget.path_scheduler.lr_at(budget.path_lr, epoch)
        lr_c = budget.coupling_scheduler.lr_at(budget.coupling_lr, epoch)
        path, _, path_state = path_optimize(
            path, problem.action, quad, budget.path_steps, lr_p, z, cfg, path_state,
            generator=gen, xi_sampler=xi_sampler)
        if budget.coupling_steps > 0:
            theta0, theta1, _, coup_state = coupling_optimize(
                theta0, theta1, path, problem.action, quad, budget.coupling_steps,
                lr_c, budget.alpha, (s0, s1), z, cfg, coup_state, generator=gen,
                freeze_theta0=problem.freeze_theta0, sigma_min=problem.fm.sigma_min,
                xi_sampler=xi_sampler)
            controls = list(path.control)
            controls[0] = theta0
            controls[-1] = theta1
            path = build_spline(controls)
        row = _eval_metrics(problem, path, theta0, theta1, ref, eval_gen_seed, cfg,
                            xi_seed=problem.seed + 101)
        row["epoch"] = epoch
        row["wall_time"] = time.perf_counter() - t_start
        history.append(row)
        log(f"epoch {epoch}: action {row['total']:.4f} "
            f"(w2 {row['w2_boundary0']:.4f}/{row['w2_boundary1']:.4f})")
        if on_epoch is not None:
            on_epoch(epoch, path, row)

    final_val = _action_eval(problem, path, ref, eval_gen_seed, cfg, xi_seed=problem.seed + 101)
    return SolveResult(path=path, theta0=theta0, theta1=theta1, history=history,
                       warmup_action=warmup_action, init_action=init_val["value"],
                       final_action=final_val)


EVAL_SAMPLES = 1024
EVAL_CHUNK = 128


def _action_eval(problem, path: SplinePath, ref, eval_seed: int,
                 cfg: IntegratorConfig, xi_seed: int) -> ActionValue:
    gen = torch.Generator().manual_seed(eval_seed)
    z = ref(EVAL_SAMPLES, gen)
    xi_sampler = xi_sampler_for(problem, seed_offset=xi_seed - problem.seed)
    return eval_action(path, z, problem.action, problem.quad, cfg,
                       generator=gen, xi_sampler=xi_sampler)


def eval_action(path: SplinePath, z: torch.Tensor, spec: ActionSpec, quad: Quadrature,
                cfg: IntegratorConfig, generator: torch.Generator | None = None,
                xi_sampler: Callable | None = None) -> ActionValue:
    """Reporting-only action estimate, detached from any autograd graph.

    Pairwise and mean-field terms read whole-batch statistics, but purely
    per-sample actions can be evaluated in slabs. That matters: one
    full-width eval with both channels alive in higher dimension is the
    peak memory of an entire run, several times the training-step graph.
    """
    def detached(v: ActionValue) -> ActionValue:
        return ActionValue(*(getattr(v, f.name).detach() for f in fields(ActionValue)))

    per_sample = spec.kappa2 == 0.0 and spec.kinetic_mode in ("velocity", "acceleration")
    if per_sample and (spec.wants_logdens or spec.wants_score) and len(z) > EVAL_CHUNK:
        chunks = z.split(EVAL_CHUNK)
        parts = [detached(action(path, zc, spec, quad, cfg, generator=generator,
                                 xi_sampler=xi_sampler))
                 for zc in chunks]
        w = torch.tensor([len(c) for c in chunks], dtype=z.dtype)
        w = w / w.sum()
        return ActionValue(*((torch.stack([getattr(v, f.name) for v in parts]) * w).sum()
                             for f in fields(ActionValue)))
    return detached(action(path, z, spec, quad, cfg, generator=generator,
                           xi_sampler=xi_sampler))


def _eval_metrics(problem, path: SplinePath, theta0: ParamVector, theta1: ParamVector,
                  ref, eval_seed: int, cfg: IntegratorConfig, xi_seed: int) -> dict:
    from .problems import boundary_fit_error

    val = _action_eval(problem, path, ref, eval_seed, cfg, xi_seed)
    gen = torch.Generator().manual_seed(eval_seed + 1)
    z = ref(EVAL_SAMPLES, gen)
    with torch.no_grad():
        cloud0 = transport(theta0, z, cfg)
        cloud1 = transport(theta1, z, cfg)
    row = {
        "total": float(val.total),
        "kinetic": float(val.kinetic),
        "linear": float(val.linear),
        "entropy": float(val.internal),
        "interaction": float(val.interaction),
        "fisher": float(val.fisher),
        "w2_boundary0": boundary_fit_error(cloud0, problem.boundary0),
        "w2_boundary1": boundary_fit_error(cloud1, problem.boundary1),
        "value": val,
    }
    return row

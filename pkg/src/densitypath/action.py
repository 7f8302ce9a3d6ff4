"""The action functional along a spline path: kinetic term plus potentials.

A(theta) = E_z int_0^1 |d/dt T_theta(t)(z)|^2 dt + int_0^1 F(rho_t) dt

with no 1/2 on the kinetic term, so the F=0 minimum over paths between two
densities equals W2^2. Time integrals use the trapezoid rule on N+1 uniform
nodes; expectations are Monte Carlo over the z batch. The path velocity at a
grid node is the central finite difference of the transported positions (one
transport per node, one-sided at the endpoints). Kinetic variants: squared
velocity (default), squared acceleration via second differences, or squared
mismatch between the velocity and a mean-field alignment drift.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import torch

from .errors import ConfigurationError, MissingChannelError
from .node import AugmentedBatch, IntegratorConfig, transport_grid
from .potentials import lookup_potential
from .spline import SplinePath

_KINETIC_MODES = ("velocity", "acceleration", "drift_mismatch")


@dataclass(frozen=True)
class ActionSpec:
    """Potential strengths and term selection for one problem."""

    kappa0: float = 0.0
    kappa1: float = 0.0
    kappa2: float = 0.0
    sigma: float = 0.0
    kinetic_mode: str = "velocity"
    potential_id: str | None = None
    interaction_id: str | None = None
    internal_mode: str = "none"       # none | entropy
    fisher: bool = False
    interaction_eps: float = 1e-2
    polarize_normalized: bool = False

    def __post_init__(self):
        if min(self.kappa0, self.kappa1, self.kappa2) < 0 or self.sigma < 0:
            raise ConfigurationError("potential strengths and sigma must be nonnegative")
        if self.kinetic_mode not in _KINETIC_MODES:
            raise ConfigurationError(f"kinetic_mode must be one of {_KINETIC_MODES}")
        if self.internal_mode not in ("none", "entropy"):
            raise ConfigurationError("internal_mode must be 'none' or 'entropy'")
        if self.interaction_eps < 0:
            raise ConfigurationError("interaction_eps must be >= 0")

    @property
    def wants_logdens(self) -> bool:
        return self.internal_mode == "entropy" and self.kappa1 != 0.0

    @property
    def wants_score(self) -> bool:
        return self.fisher and self.sigma > 0.0


@dataclass(frozen=True)
class Quadrature:
    N: int
    M: int

    def __post_init__(self):
        if self.N < 2:
            raise ConfigurationError("quadrature needs N >= 2 time steps")
        if self.M < 1:
            raise ConfigurationError("quadrature needs M >= 1 samples")


@dataclass
class ActionValue:
    """Per-term breakdown; terms carry their kappa weights and sum to total."""

    total: torch.Tensor
    kinetic: torch.Tensor
    linear: torch.Tensor
    internal: torch.Tensor
    interaction: torch.Tensor
    fisher: torch.Tensor


def _grid_batch(path: SplinePath, z: torch.Tensor, quad: Quadrature, cfg: IntegratorConfig,
                want_logdens: bool, want_score: bool,
                generator: torch.Generator | None) -> AugmentedBatch:
    ts = torch.linspace(0.0, 1.0, quad.N + 1, dtype=z.dtype)
    values = path.eval_many(ts)
    return transport_grid(values, path.arch, z, cfg, want_logdens, want_score, generator)


def _velocity_nodes(X: torch.Tensor, dt: float) -> torch.Tensor:
    """Central differences along the node axis, one-sided at the ends."""
    mid = (X[2:] - X[:-2]) / (2.0 * dt)
    first = ((X[1] - X[0]) / dt).unsqueeze(0)
    last = ((X[-1] - X[-2]) / dt).unsqueeze(0)
    return torch.cat([first, mid, last])


def _acceleration_nodes(X: torch.Tensor, dt: float) -> torch.Tensor:
    """Second differences along the node axis, one-sided at the ends."""
    mid = (X[2:] - 2.0 * X[1:-1] + X[:-2]) / (dt * dt)
    first = ((X[0] - 2.0 * X[1] + X[2]) / (dt * dt)).unsqueeze(0)
    last = ((X[-1] - 2.0 * X[-2] + X[-3]) / (dt * dt)).unsqueeze(0)
    return torch.cat([first, mid, last])


def polarize_drift(x: torch.Tensor, xi: torch.Tensor, normalized: bool = False) -> torch.Tensor:
    """Mean-field alignment drift f(x_i) = mean_y a(x_i, y, xi) y/|y|.

    a is +1 when <x, xi> and <y, xi> share a sign (sign(0) := +1), else -1.
    Zero-norm y rows are skipped with a warning.
    """
    norms = x.norm(dim=-1)
    valid = norms > 0
    if not bool(valid.all()):
        warnings.warn("zero-norm samples skipped in alignment drift")
    sign = torch.where((x @ xi) >= 0, 1.0, -1.0).to(x.dtype)
    ybar = torch.where(valid.unsqueeze(-1), x / norms.clamp_min(1e-300).unsqueeze(-1),
                       torch.zeros_like(x))
    pooled = (sign.unsqueeze(-1) * ybar).sum(-2) / valid.sum(-1).clamp_min(1).unsqueeze(-1)
    f = sign.unsqueeze(-1) * pooled.unsqueeze(-2)
    if normalized:
        f = f / f.norm(dim=-1, keepdim=True).clamp_min(1e-12)
    return f


def _interaction_nodes(X: torch.Tensor, eps: float) -> torch.Tensor:
    """Mean over unordered pairs (i != j) of 2/(|x_i-x_j|^2 + eps), per node.

    The diagonal is masked before the reciprocal so eps = 0 stays finite for
    distinct particles instead of producing inf - inf.
    """
    out = []
    M = X.shape[-2]
    if M < 2:
        return torch.zeros(X.shape[0], dtype=X.dtype)
    eye = torch.eye(M, dtype=torch.bool)
    for b in range(X.shape[0]):
        diff = X[b].unsqueeze(0) - X[b].unsqueeze(1)
        sq = (diff * diff).sum(-1).masked_fill(eye, float("inf"))
        kernel = 2.0 / (sq + eps)
        out.append(kernel.sum() / (M * (M - 1)))
    return torch.stack(out)


def potential_F(batch: AugmentedBatch, spec: ActionSpec) -> torch.Tensor:
    """F(rho) at one time node (or per node for stacked batches).

    kappa0 E V(x) + kappa1 E log rho + kappa2 E_pairs 2/(|x-y|^2 + eps).
    """
    X = batch.positions
    stacked = X.ndim == 3
    Xs = X if stacked else X.unsqueeze(0)
    total = torch.zeros(Xs.shape[0], dtype=X.dtype)
    if spec.kappa0 != 0.0:
        if spec.potential_id is None:
            raise ConfigurationError("kappa0 > 0 needs a potential_id")
        V = lookup_potential(spec.potential_id)
        total = total + spec.kappa0 * V(Xs).mean(-1)
    if spec.kappa1 != 0.0 and spec.internal_mode == "entropy":
        if batch.logdens is None:
            raise MissingChannelError("entropy term needs the logdens channel")
        L = batch.logdens if stacked else batch.logdens.unsqueeze(0)
        total = total + spec.kappa1 * L.mean(-1)
    if spec.kappa2 != 0.0:
        total = total + spec.kappa2 * _interaction_nodes(Xs, spec.interaction_eps)
    return total if stacked else total[0]


def fisher_information(batch: AugmentedBatch, sigma: float) -> torch.Tensor:
    """sigma^4/8 E |score|^2 (zero when sigma is zero, score not required then)."""
    X = batch.positions
    stacked = X.ndim == 3
    if sigma == 0.0:
        return torch.zeros(X.shape[0], dtype=X.dtype) if stacked else torch.zeros((), dtype=X.dtype)
    if batch.score is None:
        raise MissingChannelError("Fisher term needs the score channel")
    S = batch.score if stacked else batch.score.unsqueeze(0)
    val = sigma ** 4 / 8.0 * (S * S).sum(-1).mean(-1)
    return val if stacked else val[0]


def _assemble(path: SplinePath, z: torch.Tensor, spec: ActionSpec, quad: Quadrature,
              cfg: IntegratorConfig, generator: torch.Generator | None,
              kinetic_mode: str, xi_sampler: Callable | None) -> ActionValue:
    dt = 1.0 / quad.N
    want_l, want_s = spec.wants_logdens, spec.wants_score
    batch = _grid_batch(path, z, quad, cfg, want_l, want_s, generator)
    X = batch.positions

    if kinetic_mode == "velocity":
        vel = _velocity_nodes(X, dt)
        ke_nodes = (vel * vel).sum(-1).mean(-1)
    elif kinetic_mode == "acceleration":
        if quad.N < 3:
            raise ConfigurationError("acceleration kinetic needs N >= 3")
        acc = _acceleration_nodes(X, dt)
        ke_nodes = (acc * acc).sum(-1).mean(-1)
    else:  # drift_mismatch
        if xi_sampler is None:
            raise ConfigurationError("drift-mismatch kinetic needs a xi sampler")
        vel = _velocity_nodes(X, dt)
        mism = []
        for j in range(quad.N + 1):
            xi = xi_sampler(j).to(X.dtype)
            f = polarize_drift(X[j], xi, spec.polarize_normalized)
            mism.append(0.5 * ((f - vel[j]) ** 2).sum(-1).mean())
        ke_nodes = torch.stack(mism)

    kinetic = torch.trapezoid(ke_nodes, dx=dt)

    zero = torch.zeros((), dtype=X.dtype)
    linear = internal = interaction = fisher = zero
    if spec.kappa0 != 0.0:
        V = lookup_potential(spec.potential_id) if spec.potential_id else None
        if V is None:
            raise ConfigurationError("kappa0 > 0 needs a potential_id")
        linear = spec.kappa0 * torch.trapezoid(V(X).mean(-1), dx=dt)
    if spec.wants_logdens:
        internal = spec.kappa1 * torch.trapezoid(batch.logdens.mean(-1), dx=dt)
    if spec.kappa2 != 0.0:
        interaction = spec.kappa2 * torch.trapezoid(_interaction_nodes(X, spec.interaction_eps), dx=dt)
    if spec.wants_score:
        fisher = torch.trapezoid(fisher_information(batch, spec.sigma), dx=dt)

    total = kinetic + linear + internal + interaction + fisher
    return ActionValue(total=total, kinetic=kinetic, linear=linear, internal=internal,
                       interaction=interaction, fisher=fisher)


def kinetic_energy(path: SplinePath, z: torch.Tensor, quad: Quadrature,
                   cfg: IntegratorConfig = IntegratorConfig()) -> torch.Tensor:
    """E_z int |d/dt T_theta(t)(z)|^2 dt alone (no potentials)."""
    spec = ActionSpec()
    return _assemble(path, z, spec, quad, cfg, None, "velocity", None).kinetic


def action(path: SplinePath, z: torch.Tensor, spec: ActionSpec, quad: Quadrature,
           cfg: IntegratorConfig = IntegratorConfig(),
           generator: torch.Generator | None = None,
           xi_sampler: Callable | None = None) -> ActionValue:
    """Full action with per-term breakdown; dispatches on spec.kinetic_mode."""
    if spec.kinetic_mode == "acceleration":
        return momentum_action(path, z, spec, quad, cfg, generator)
    if spec.kinetic_mode == "drift_mismatch":
        return polarize_action(path, z, spec, quad, xi_sampler, cfg, generator)
    return _assemble(path, z, spec, quad, cfg, generator, "velocity", None)


def momentum_action(path: SplinePath, z: torch.Tensor, spec: ActionSpec, quad: Quadrature,
                    cfg: IntegratorConfig = IntegratorConfig(),
                    generator: torch.Generator | None = None) -> ActionValue:
    """Action with the kinetic integrand replaced by squared acceleration."""
    if quad.N < 3:
        raise ConfigurationError("momentum action needs N >= 3")
    return _assemble(path, z, spec, quad, cfg, generator, "acceleration", None)


def polarize_action(path: SplinePath, z: torch.Tensor, spec: ActionSpec, quad: Quadrature,
                    xi_sampler: Callable, cfg: IntegratorConfig = IntegratorConfig(),
                    generator: torch.Generator | None = None) -> ActionValue:
    """Action whose kinetic term penalizes deviation from the alignment drift.

    xi_sampler(j) supplies the random direction for grid node j; directions are
    drawn independently per node.
    """
    return _assemble(path, z, spec, quad, cfg, generator, "drift_mismatch", xi_sampler)

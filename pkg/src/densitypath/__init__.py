"""Action-minimizing paths between densities via spline trajectories in MLP parameter space."""

from .mlp import Architecture, ParamVector, param_count, mlp_forward, init_params, zeros_params
from .spline import SplinePath, build_spline, linear_init
from .node import IntegratorConfig, AugmentedBatch, transport, transport_augmented
from .action import ActionSpec, Quadrature, ActionValue, action, kinetic_energy
from .otmetrics import W2Report, empirical_w2, gaussian_w2, gaussian_geodesic, target_fit_w2
from .flowmatch import FMConfig, fm_loss, pretrain_boundary
from .optim import OptimBudget, SchedulerSpec, path_optimize, coupling_optimize, geodesic_warmup, solve
from .problems import ProblemConfig, DensitySpec, registry, get_problem, desk_problem, sample

__all__ = [
    "Architecture", "ParamVector", "param_count", "mlp_forward", "init_params", "zeros_params",
    "SplinePath", "build_spline", "linear_init",
    "IntegratorConfig", "AugmentedBatch", "transport", "transport_augmented",
    "ActionSpec", "Quadrature", "ActionValue", "action", "kinetic_energy",
    "W2Report", "empirical_w2", "gaussian_w2", "gaussian_geodesic", "target_fit_w2",
    "FMConfig", "fm_loss", "pretrain_boundary",
    "OptimBudget", "SchedulerSpec", "path_optimize", "coupling_optimize", "geodesic_warmup", "solve",
    "ProblemConfig", "DensitySpec", "registry", "get_problem", "desk_problem", "sample",
]

"""Benchmark problem registry: boundary densities, potentials, budgets, seeds.

Each entry binds everything a run needs. Registry constants reproduce the
benchmark setup table (obstacle geometry constants live in potentials.py).
Configs round-trip losslessly through a YAML schema with top-level keys
problem / action / quadrature / architecture / optim / flow_match /
integrator / seed.
"""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import torch

from .action import ActionSpec, Quadrature
from .errors import ConfigurationError, DomainError, UnknownProblemError
from .flowmatch import FMConfig
from .mlp import Architecture, ParamVector, zeros_params
from .node import IntegratorConfig
from .optim import OptimBudget, SchedulerSpec
from .otmetrics import empirical_w2, target_fit_w2

DTYPE = torch.float64


def _as_tensor(x) -> torch.Tensor:
    t = torch.as_tensor(x, dtype=DTYPE)
    return t


def _check_cov(cov: torch.Tensor, d: int):
    if cov.shape != (d, d):
        raise ConfigurationError(f"covariance must be {d}x{d}, got {tuple(cov.shape)}")
    if not torch.allclose(cov, cov.T, atol=1e-10):
        raise DomainError("covariance must be symmetric")
    if float(torch.linalg.eigvalsh(cov).min()) <= 0:
        raise DomainError("covariance must be positive definite")


@dataclass(frozen=True)
class DensitySpec:
    """Samplable boundary density: a Gaussian, a Gaussian mixture, or a sample file."""

    kind: str                       # gaussian | gmm | samples
    mean: torch.Tensor | None = None
    cov: torch.Tensor | None = None
    components: tuple = ()          # ((mean, cov, weight), ...)
    path: str = ""

    def __post_init__(self):
        if self.kind == "gaussian":
            if self.mean is None or self.cov is None:
                raise ConfigurationError("gaussian density needs mean and cov")
            object.__setattr__(self, "mean", _as_tensor(self.mean).reshape(-1))
            object.__setattr__(self, "cov", _as_tensor(self.cov))
            _check_cov(self.cov, self.mean.shape[0])
        elif self.kind == "gmm":
            if not self.components:
                raise ConfigurationError("gmm density needs at least one component")
            comps = []
            for m, c, w in self.components:
                m = _as_tensor(m).reshape(-1)
                c = _as_tensor(c)
                _check_cov(c, m.shape[0])
                comps.append((m, c, float(w)))
            wsum = sum(w for _, _, w in comps)
            if abs(wsum - 1.0) > 1e-8:
                raise ConfigurationError(f"gmm weights must sum to 1, got {wsum}")
            object.__setattr__(self, "components", tuple(comps))
        elif self.kind == "samples":
            if not self.path:
                raise ConfigurationError("samples density needs a file path")
        else:
            raise ConfigurationError(f"unknown density kind {self.kind!r}")

    @property
    def d(self) -> int:
        if self.kind == "gaussian":
            return self.mean.shape[0]
        if self.kind == "gmm":
            return self.components[0][0].shape[0]
        return _load_table(self.path).shape[1]


def gaussian(mean, cov) -> DensitySpec:
    return DensitySpec("gaussian", mean=mean, cov=cov)


def gmm(components) -> DensitySpec:
    return DensitySpec("gmm", components=tuple(components))


@functools.lru_cache(maxsize=8)
def _load_table(path: str) -> np.ndarray:
    with warnings.catch_warnings():
        # an empty file raises ConfigurationError below; loadtxt's warning is noise
        warnings.simplefilter("ignore", UserWarning)
        arr = np.loadtxt(path, dtype=np.float64, ndmin=2)
    if arr.size == 0:
        raise ConfigurationError(f"sample file {path} is empty")
    return arr


def sample(spec: DensitySpec, n: int, seed: int | torch.Generator = 0) -> torch.Tensor:
    """Draw n i.i.d. points; deterministic for a given seed."""
    gen = seed if isinstance(seed, torch.Generator) else torch.Generator().manual_seed(seed)
    if spec.kind == "gaussian":
        z = torch.randn(n, spec.d, dtype=DTYPE, generator=gen)
        chol = torch.linalg.cholesky(spec.cov)
        return z @ chol.T + spec.mean
    if spec.kind == "gmm":
        weights = torch.tensor([w for _, _, w in spec.components], dtype=DTYPE)
        idx = torch.multinomial(weights, n, replacement=True, generator=gen)
        z = torch.randn(n, spec.d, dtype=DTYPE, generator=gen)
        out = torch.empty(n, spec.d, dtype=DTYPE)
        for k, (m, c, _) in enumerate(spec.components):
            mask = idx == k
            if mask.any():
                out[mask] = z[mask] @ torch.linalg.cholesky(c).T + m
        return out
    table = torch.from_numpy(_load_table(spec.path))
    rows = torch.randint(table.shape[0], (n,), generator=gen)
    return table[rows].clone()


def torch_sampler(spec: DensitySpec) -> Callable:
    """(n, generator) -> (n, d) sampler closure over a density spec."""
    def draw(n: int, generator: torch.Generator | None = None) -> torch.Tensor:
        gen = generator if generator is not None else torch.Generator().manual_seed(0)
        return sample(spec, n, gen)
    return draw


def boundary_fit_error(cloud: torch.Tensor, spec: DensitySpec) -> float:
    """W2 between a pushforward cloud and a boundary density.

    Analytic boundaries use the moment/mixture fit oracle; sample-file
    boundaries fall back to the two-cloud estimate.
    """
    if spec.kind in ("gaussian", "gmm"):
        return target_fit_w2(cloud, spec)
    ref = torch.from_numpy(_load_table(spec.path))
    return empirical_w2(cloud, ref).value


@dataclass(frozen=True)
class ProblemConfig:
    name: str
    d: int
    boundary0: DensitySpec
    boundary1: DensitySpec
    action: ActionSpec
    quad: Quadrature
    K: int
    arch: Architecture
    budget: OptimBudget
    fm: FMConfig = field(default_factory=FMConfig)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    reference: str = "normal"        # normal | boundary0
    freeze_theta0: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.reference not in ("normal", "boundary0"):
            raise ConfigurationError("reference must be 'normal' or 'boundary0'")
        if self.boundary0.d != self.d or self.boundary1.d != self.d:
            raise ConfigurationError("boundary densities must match problem dimension")
        if self.arch.input_dim != self.d:
            raise ConfigurationError("architecture input_dim must match problem dimension")
        if self.K < 0:
            raise ConfigurationError("K must be >= 0")
        if self.freeze_theta0 and self.reference != "boundary0":
            raise ConfigurationError("freezing theta0 at zero requires reference = boundary0")
        if self.reference != "normal" and (self.action.wants_logdens or self.action.wants_score):
            raise ConfigurationError(
                "entropy/Fisher channels start from the standard-normal density; "
                "they need reference = normal")

    def zero_params(self) -> ParamVector:
        return zeros_params(self.arch)


def reference_sampler(problem: ProblemConfig) -> Callable:
    if problem.reference == "boundary0":
        return torch_sampler(problem.boundary0)
    d = problem.d

    def draw(n: int, generator: torch.Generator | None = None) -> torch.Tensor:
        gen = generator if generator is not None else torch.Generator().manual_seed(0)
        return torch.randn(n, d, dtype=DTYPE, generator=gen)
    return draw


def _ring(n_modes: int, radius: float) -> list:
    """Equispaced unit-covariance modes on a circle, equal weights."""
    out = []
    eye = torch.eye(2, dtype=DTYPE)
    for i in range(n_modes):
        ang = 2.0 * np.pi * i / n_modes
        m = torch.tensor([radius * np.cos(ang), radius * np.sin(ang)], dtype=DTYPE)
        out.append((m, eye, 1.0 / n_modes))
    return out


def _scc() -> ProblemConfig:
    return ProblemConfig(
        name="scc", d=2,
        boundary0=gaussian([-2.0, -2.0], 0.1 * torch.eye(2, dtype=DTYPE)),
        boundary1=gaussian([2.0, 2.0], 0.01 * torch.eye(2, dtype=DTYPE)),
        action=ActionSpec(kappa0=100.0, kappa2=5.0, potential_id="scc-bumps"),
        quad=Quadrature(N=30, M=1000), K=5,
        arch=Architecture(2, 64, 4),
        budget=OptimBudget(
            epochs=18, path_steps=30, coupling_steps=20, warmup_steps=100,
            path_lr=5e-4, coupling_lr=1e-4, alpha=1e5,
            path_scheduler=SchedulerSpec("step", step_size=10, gamma=0.1),
            coupling_scheduler=SchedulerSpec("step", step_size=10, gamma=0.9)),
        fm=FMConfig(steps=2000))


def _vnefi() -> ProblemConfig:
    return ProblemConfig(
        name="vnefi", d=2,
        boundary0=gaussian([-11.0, -1.0], 0.5 * torch.eye(2, dtype=DTYPE)),
        boundary1=gaussian([11.0, 1.0], 0.5 * torch.eye(2, dtype=DTYPE)),
        action=ActionSpec(kappa0=3000.0, kappa1=50.0, potential_id="vneck-wedge",
                          internal_mode="entropy", fisher=True, sigma=1.0),
        quad=Quadrature(N=60, M=1000), K=3,
        arch=Architecture(2, 128, 4),
        budget=OptimBudget(
            epochs=15, path_steps=20, coupling_steps=20, warmup_steps=100,
            path_lr=5e-3, coupling_lr=1e-4, alpha=1e5,
            path_scheduler=SchedulerSpec("step", step_size=5, gamma=0.25),
            coupling_scheduler=SchedulerSpec("step", step_size=5, gamma=0.1)),
        fm=FMConfig(steps=2000))


def _gmm() -> ProblemConfig:
    return ProblemConfig(
        name="gmm", d=2,
        boundary0=gmm(_ring(8, 16.0)),
        boundary1=gmm(_ring(4, 8.0)),
        action=ActionSpec(kappa0=50.0, potential_id="gmm-ring"),
        quad=Quadrature(N=30, M=1000), K=5,
        arch=Architecture(2, 256, 4, activation="silu"),
        budget=OptimBudget(
            epochs=15, path_steps=30, coupling_steps=20, warmup_steps=100,
            path_lr=1e-3, coupling_lr=5e-6, alpha=1e5,
            path_scheduler=SchedulerSpec("step", step_size=3, gamma=0.9),
            coupling_scheduler=SchedulerSpec("cosine-restarts", t0=5, t_mult=2, eta_min=1e-6)),
        fm=FMConfig(steps=3000),
        reference="boundary0", freeze_theta0=True)


def _opinion(d: int = 2) -> ProblemConfig:
    if d == 2:
        cov0 = torch.diag(torch.tensor([0.5, 0.25], dtype=DTYPE))
        M, alpha = 1000, 1e5
    else:
        diag = torch.full((d,), 0.25, dtype=DTYPE)
        diag[0] = 4.0
        cov0 = torch.diag(diag)
        M, alpha = 5000, 1e4
    return ProblemConfig(
        name="opinion", d=d,
        boundary0=gaussian(torch.zeros(d, dtype=DTYPE), cov0),
        boundary1=gaussian(torch.zeros(d, dtype=DTYPE), 3.0 * torch.eye(d, dtype=DTYPE)),
        action=ActionSpec(kappa1=50.0, internal_mode="entropy", kinetic_mode="drift_mismatch"),
        quad=Quadrature(N=20, M=M), K=3,
        arch=Architecture(d, 128, 4),
        budget=OptimBudget(
            epochs=10, path_steps=20, coupling_steps=20, warmup_steps=200,
            path_lr=1e-3, coupling_lr=1e-4, alpha=alpha,
            path_scheduler=SchedulerSpec("step", step_size=10, gamma=0.5),
            coupling_scheduler=SchedulerSpec("step", step_size=10, gamma=0.5)),
        fm=FMConfig(steps=2000))


def gauss_pair(d: int = 2, m=None, sigma: float = 0.0,
               entropy_kappa: float = 0.5) -> ProblemConfig:
    """Verification family N(0, I) -> N(m, I).

    sigma > 0 turns on the Fisher term plus a mild entropy term, making the
    run exercise both transported channels; the resulting path stays near the
    displacement geodesic for small sigma.
    """
    mean1 = torch.zeros(d, dtype=DTYPE) if m is None else _as_tensor(m).reshape(-1)
    if mean1.shape[0] != d:
        raise ConfigurationError("target mean must have length d")
    eye = torch.eye(d, dtype=DTYPE)
    if sigma == 0.0:
        spec = ActionSpec()
        name = "gauss-pair"
    else:
        spec = ActionSpec(sigma=sigma, fisher=True, kappa1=entropy_kappa,
                          internal_mode="entropy")
        name = "gauss-pair-sb"
    return ProblemConfig(
        name=name, d=d,
        boundary0=gaussian(torch.zeros(d, dtype=DTYPE), eye),
        boundary1=gaussian(mean1, eye),
        action=spec,
        quad=Quadrature(N=30, M=512), K=3,
        arch=Architecture(d, 32, 3),
        budget=OptimBudget(
            epochs=8, path_steps=30, coupling_steps=15, warmup_steps=50,
            path_lr=1e-3, coupling_lr=2e-4, alpha=1e5,
            path_scheduler=SchedulerSpec("step", step_size=4, gamma=0.5),
            coupling_scheduler=SchedulerSpec("step", step_size=4, gamma=0.5)),
        fm=FMConfig(steps=1200))


def momentum_variant(problem: ProblemConfig) -> ProblemConfig:
    """Same problem with the kinetic term penalizing acceleration."""
    spec = replace(problem.action, kinetic_mode="acceleration")
    return replace(problem, name=problem.name + "-momentum", action=spec)


def registry() -> list:
    base = [_scc(), _vnefi(), _gmm(), _opinion(),
            gauss_pair(d=2, m=[4.0, 0.0]),
            gauss_pair(d=10, m=[3.0] + [0.0] * 9, sigma=1.0)]
    momentum = [momentum_variant(p) for p in base if p.action.kinetic_mode == "velocity"]
    return base + momentum


def get_problem(name: str, seed: int | None = None) -> ProblemConfig:
    for p in registry():
        if p.name == name:
            return p if seed is None else replace(p, seed=seed)
    raise UnknownProblemError(name)


def problem_names() -> list:
    return [p.name for p in registry()]


# Desk-scale trainer presets. The full-scale learning rates assume the large
# sample/step budgets; at desk scale the obstacle problems need a hotter,
# two-phase schedule (9 epochs at 1e-2, then 1.5e-3) to cross from the
# toll-paying basin into the detour, plus a longer boundary pretrain so the
# tightly contracted target keeps its fit through the coupling phases.
_DESK_TRAINER: dict[str, dict] = {
    "scc": dict(
        budget=dict(
            epochs=18, path_steps=30, warmup_steps=100, path_lr=1e-2,
            path_scheduler=SchedulerSpec(kind="step", step_size=9, gamma=0.15)),
        fm_steps=2400),
    # the d=10 score-channel graph is the memory heavyweight of the whole
    # suite; cap batch and nodes so a full desk solve stays inside laptop RAM
    "gauss-pair-sb": dict(quad=dict(N=15, M=96)),
}


def desk_shrink(p: ProblemConfig) -> ProblemConfig:
    """Shrunk budget for laptop-scale runs and CI: fewer samples, steps, epochs.

    Potential strengths, boundaries, and obstacle geometry are untouched; only
    sampling effort, network width, and optimization budget change (including
    per-problem step-size presets tuned for the smaller batches).
    """
    quad = Quadrature(N=min(p.quad.N, 20), M=min(p.quad.M, 256))
    arch = replace(p.arch, hidden_width=min(p.arch.hidden_width, 32))
    budget = replace(
        p.budget,
        epochs=min(p.budget.epochs, 6),
        path_steps=min(p.budget.path_steps, 20),
        coupling_steps=min(p.budget.coupling_steps, 10),
        warmup_steps=min(p.budget.warmup_steps, 60))
    fm = replace(p.fm, steps=min(p.fm.steps, 1200), batch_size=min(p.fm.batch_size, 256))
    tuning = _DESK_TRAINER.get(p.name.removesuffix("-momentum"))
    if tuning is not None:
        if "budget" in tuning:
            budget = replace(budget, **tuning["budget"])
        if "fm_steps" in tuning:
            fm = replace(fm, steps=tuning["fm_steps"])
        if "quad" in tuning:
            quad = replace(quad, **tuning["quad"])
    return replace(p, quad=quad, arch=arch, budget=budget, fm=fm, K=min(p.K, 3))


def desk_problem(name: str, seed: int = 0) -> ProblemConfig:
    return desk_shrink(get_problem(name, seed=seed))


# --- config file round-trip ---------------------------------------------

def _density_to_dict(spec: DensitySpec) -> dict:
    if spec.kind == "gaussian":
        return {"kind": "gaussian", "mean": spec.mean.tolist(), "cov": spec.cov.tolist()}
    if spec.kind == "gmm":
        return {"kind": "gmm", "components": [
            {"mean": m.tolist(), "cov": c.tolist(), "weight": w}
            for m, c, w in spec.components]}
    return {"kind": "samples", "path": spec.path}


def _density_from_dict(d: dict) -> DensitySpec:
    kind = d["kind"]
    if kind == "gaussian":
        return gaussian(d["mean"], d["cov"])
    if kind == "gmm":
        return gmm([(c["mean"], c["cov"], c["weight"]) for c in d["components"]])
    return DensitySpec("samples", path=d["path"])


def _scheduler_to_dict(s: SchedulerSpec) -> dict:
    return {"kind": s.kind, "step_size": s.step_size, "gamma": s.gamma,
            "t0": s.t0, "t_mult": s.t_mult, "eta_min": s.eta_min}


def to_dict(problem: ProblemConfig) -> dict:
    a, b, f, i = problem.action, problem.budget, problem.fm, problem.integrator
    return {
        "problem": {
            "name": problem.name, "d": problem.d,
            "reference": problem.reference, "freeze_theta0": problem.freeze_theta0,
            "K": problem.K,
            "boundary0": _density_to_dict(problem.boundary0),
            "boundary1": _density_to_dict(problem.boundary1),
        },
        "action": {
            "kappa0": a.kappa0, "kappa1": a.kappa1, "kappa2": a.kappa2,
            "sigma": a.sigma, "kinetic_mode": a.kinetic_mode,
            "potential_id": a.potential_id, "interaction_id": a.interaction_id,
            "internal_mode": a.internal_mode, "fisher": a.fisher,
            "interaction_eps": a.interaction_eps,
            "polarize_normalized": a.polarize_normalized,
        },
        "quadrature": {"N": problem.quad.N, "M": problem.quad.M},
        "architecture": {
            "input_dim": problem.arch.input_dim, "hidden_width": problem.arch.hidden_width,
            "num_layers": problem.arch.num_layers, "time_varying": problem.arch.time_varying,
            "activation": problem.arch.activation,
        },
        "optim": {
            "epochs": b.epochs, "path_steps": b.path_steps,
            "coupling_steps": b.coupling_steps, "warmup_steps": b.warmup_steps,
            "path_lr": b.path_lr, "coupling_lr": b.coupling_lr, "alpha": b.alpha,
            "path_scheduler": _scheduler_to_dict(b.path_scheduler),
            "coupling_scheduler": _scheduler_to_dict(b.coupling_scheduler),
        },
        "flow_match": {"batch_size": f.batch_size, "steps": f.steps,
                       "learning_rate": f.learning_rate, "sigma_min": f.sigma_min},
        "integrator": {"num_steps": i.num_steps, "scheme": i.scheme,
                       "divergence_mode": i.divergence_mode,
                       "hutchinson_probes": i.hutchinson_probes},
        "seed": problem.seed,
    }


def from_dict(data: dict) -> ProblemConfig:
    try:
        prob = data["problem"]
        a = data["action"]
        q = data["quadrature"]
        ar = data["architecture"]
        o = data["optim"]
    except KeyError as exc:
        raise ConfigurationError(f"config missing required section {exc}") from exc
    f = data.get("flow_match", {})
    i = data.get("integrator", {})
    return ProblemConfig(
        name=prob["name"], d=int(prob["d"]),
        boundary0=_density_from_dict(prob["boundary0"]),
        boundary1=_density_from_dict(prob["boundary1"]),
        K=int(prob["K"]),
        reference=prob.get("reference", "normal"),
        freeze_theta0=bool(prob.get("freeze_theta0", False)),
        action=ActionSpec(
            kappa0=float(a.get("kappa0", 0.0)), kappa1=float(a.get("kappa1", 0.0)),
            kappa2=float(a.get("kappa2", 0.0)), sigma=float(a.get("sigma", 0.0)),
            kinetic_mode=a.get("kinetic_mode", "velocity"),
            potential_id=a.get("potential_id"), interaction_id=a.get("interaction_id"),
            internal_mode=a.get("internal_mode", "none"),
            fisher=bool(a.get("fisher", False)),
            interaction_eps=float(a.get("interaction_eps", 1e-2)),
            polarize_normalized=bool(a.get("polarize_normalized", False))),
        quad=Quadrature(N=int(q["N"]), M=int(q["M"])),
        arch=Architecture(
            input_dim=int(ar["input_dim"]), hidden_width=int(ar["hidden_width"]),
            num_layers=int(ar["num_layers"]),
            time_varying=bool(ar.get("time_varying", True)),
            activation=ar.get("activation", "tanh")),
        budget=OptimBudget(
            epochs=int(o["epochs"]), path_steps=int(o["path_steps"]),
            coupling_steps=int(o["coupling_steps"]), warmup_steps=int(o["warmup_steps"]),
            path_lr=float(o["path_lr"]), coupling_lr=float(o["coupling_lr"]),
            alpha=float(o.get("alpha", 1e5)),
            path_scheduler=_sched_from_dict(o.get("path_scheduler", {})),
            coupling_scheduler=_sched_from_dict(o.get("coupling_scheduler", {}))),
        fm=FMConfig(
            batch_size=int(f.get("batch_size", 256)), steps=int(f.get("steps", 2000)),
            learning_rate=float(f.get("learning_rate", 1e-3)),
            sigma_min=float(f.get("sigma_min", 1e-2))),
        integrator=IntegratorConfig(
            num_steps=int(i.get("num_steps", 10)), scheme=i.get("scheme", "midpoint"),
            divergence_mode=i.get("divergence_mode", "exact"),
            hutchinson_probes=int(i.get("hutchinson_probes", 8))),
        seed=int(data.get("seed", 0)))


def _sched_from_dict(d: dict) -> SchedulerSpec:
    return SchedulerSpec(
        kind=d.get("kind", "constant"), step_size=int(d.get("step_size", 10)),
        gamma=float(d.get("gamma", 0.1)), t0=int(d.get("t0", 5)),
        t_mult=int(d.get("t_mult", 2)), eta_min=float(d.get("eta_min", 0.0)))

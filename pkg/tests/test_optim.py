"""Functional Adam, schedules, and the path/coupling/outer-loop procedures."""

from dataclasses import replace

import pytest
import torch

from densitypath.action import ActionSpec, Quadrature, kinetic_energy
from densitypath.errors import ConfigurationError
from densitypath.flowmatch import FMConfig
from densitypath.mlp import Architecture, ParamVector, init_params, param_count
from densitypath.optim import (OptimBudget, SchedulerSpec, adam_step, coupling_optimize,
                               geodesic_warmup, init_adam, path_optimize, solve,
                               xi_sampler_for)
from densitypath.problems import desk_problem, gaussian, torch_sampler
from densitypath.spline import build_spline, linear_init

AFFINE = Architecture(2, 4, 2)
D = param_count(AFFINE)


def _bias(c):
    v = torch.zeros(D, dtype=torch.float64)
    v[-2:] = torch.tensor(c, dtype=torch.float64)
    return ParamVector(v, AFFINE)


def _z(n, seed, d=2):
    return torch.randn(n, d, dtype=torch.float64, generator=torch.Generator().manual_seed(seed))


def test_adam_zero_gradient_keeps_params():
    st = init_adam(torch.tensor([1.0, -4.0], dtype=torch.float64))
    out = adam_step(st, torch.zeros(2, dtype=torch.float64), lr=0.5)
    assert torch.equal(out.params, st.params)
    assert out.step == 1


def test_adam_first_step_moves_by_lr():
    # bias correction makes the first update lr * sign(grad) up to eps
    st = init_adam(torch.zeros(3, dtype=torch.float64))
    grad = torch.tensor([2.0, -0.3, 1e-4], dtype=torch.float64)
    out = adam_step(st, grad, lr=1e-2)
    assert torch.allclose(out.params, -1e-2 * torch.sign(grad), atol=1e-5)


def test_adam_minimizes_quadratic_bowl():
    st = init_adam(torch.tensor([3.0, -2.0], dtype=torch.float64))
    vals = []
    for _ in range(200):
        st = adam_step(st, 2.0 * st.params, lr=0.1)
        vals.append(float((st.params ** 2).sum()))
    checkpoints = [vals[i] for i in (49, 99, 149, 199)]
    assert checkpoints == sorted(checkpoints, reverse=True)
    assert vals[-1] < 1e-6


def test_adam_rejects_mismatched_gradient():
    st = init_adam(torch.zeros(4, dtype=torch.float64))
    with pytest.raises(ConfigurationError):
        adam_step(st, torch.zeros(5, dtype=torch.float64), lr=0.1)


def test_scheduler_constant_and_step():
    assert SchedulerSpec().lr_at(0.3, 17) == pytest.approx(0.3)
    sched = SchedulerSpec(kind="step", step_size=9, gamma=0.15)
    assert sched.lr_at(1e-2, 0) == pytest.approx(1e-2)
    assert sched.lr_at(1e-2, 8) == pytest.approx(1e-2)
    assert sched.lr_at(1e-2, 9) == pytest.approx(1.5e-3)
    assert sched.lr_at(1e-2, 18) == pytest.approx(2.25e-4)


def test_scheduler_cosine_restarts():
    sched = SchedulerSpec(kind="cosine-restarts", t0=2, t_mult=2, eta_min=0.1)
    assert sched.lr_at(1.0, 0) == pytest.approx(1.0)
    assert sched.lr_at(1.0, 2) == pytest.approx(1.0)   # restart with doubled window
    assert sched.lr_at(1.0, 6) == pytest.approx(1.0)
    within = [sched.lr_at(1.0, e) for e in (2, 3, 4, 5)]
    assert within == sorted(within, reverse=True)
    assert min(within) >= 0.1


def test_scheduler_and_budget_validation():
    with pytest.raises(ConfigurationError):
        SchedulerSpec(kind="linear")
    with pytest.raises(ConfigurationError):
        SchedulerSpec(kind="step", step_size=0)
    with pytest.raises(ConfigurationError):
        SchedulerSpec(kind="cosine-restarts", t0=0)
    with pytest.raises(ConfigurationError):
        OptimBudget(epochs=-1)
    with pytest.raises(ConfigurationError):
        OptimBudget(path_lr=0.0)
    with pytest.raises(ConfigurationError):
        OptimBudget(alpha=-1.0)


def test_path_optimize_freezes_boundaries():
    gen = torch.Generator().manual_seed(3)
    ctrl = [ParamVector(0.1 * torch.randn(D, dtype=torch.float64, generator=gen), AFFINE)
            for _ in range(4)]
    path = build_spline(ctrl)
    out, losses, state = path_optimize(path, ActionSpec(), Quadrature(N=6, M=32),
                                       steps=5, lr=1e-2, z=_z(32, 0))
    assert torch.equal(out.values[0], path.values[0])
    assert torch.equal(out.values[-1], path.values[-1])
    assert not torch.equal(out.values[1], path.values[1])
    assert len(losses) == 5
    assert state is not None and state.step == 5


def test_path_optimize_noops():
    path = linear_init(_bias([0.0, 0.0]), _bias([1.0, 0.0]), K=0)
    out, losses, _ = path_optimize(path, ActionSpec(), Quadrature(N=4, M=8),
                                   steps=10, lr=1e-2, z=_z(8, 1))
    assert out is path and losses == []
    path2 = linear_init(_bias([0.0, 0.0]), _bias([1.0, 0.0]), K=2)
    out2, losses2, _ = path_optimize(path2, ActionSpec(), Quadrature(N=4, M=8),
                                     steps=0, lr=1e-2, z=_z(8, 1))
    assert out2 is path2 and losses2 == []


def test_path_optimize_aborts_on_nonfinite_loss():
    # identical particles with zero smoothing make the interaction term infinite
    path = linear_init(_bias([0.0, 0.0]), _bias([1.0, 0.0]), K=1)
    spec = ActionSpec(kappa2=1.0, interaction_eps=0.0)
    z = torch.zeros(4, 2, dtype=torch.float64)
    out, losses, _ = path_optimize(path, spec, Quadrature(N=4, M=4), steps=10, lr=1e-2, z=z)
    assert losses == []
    assert torch.equal(out.values, path.values)


def test_warmup_recovers_straight_transport():
    path = linear_init(_bias([0.0, 0.0]), _bias([2.0, 0.0]), K=3)
    bent = path.values.clone()
    bent[2, 5] += 0.8
    bent[1, -1] += 0.5
    path = build_spline([ParamVector(bent[i], AFFINE) for i in range(5)])
    z = _z(128, 4)
    quad = Quadrature(N=12, M=128)
    before = float(kinetic_energy(path, z, quad).detach())
    out, losses, _ = geodesic_warmup(path, quad, steps=150, lr=5e-2, z=z)
    after = float(kinetic_energy(out, z, quad).detach())
    assert before > 5.0
    assert after == pytest.approx(4.0, rel=0.05)  # straight bias shift, |c|^2
    assert losses[-1] < losses[0]


def test_coupling_descends_and_freeze_holds():
    arch = Architecture(2, 8, 2)
    th0 = init_params(arch, torch.Generator().manual_seed(1))
    th1 = init_params(arch, torch.Generator().manual_seed(2))
    path = linear_init(th0, th1, K=1)
    samplers = (torch_sampler(gaussian([-1.0, 0.0], [[1.0, 0.0], [0.0, 1.0]])),
                torch_sampler(gaussian([1.0, 0.0], [[1.0, 0.0], [0.0, 1.0]])))
    z = _z(64, 5)

    o0, o1, losses, _ = coupling_optimize(
        th0, th1, path, ActionSpec(), Quadrature(N=6, M=64), steps=40, lr=1e-2,
        alpha=1e3, samplers=samplers, z=z, generator=torch.Generator().manual_seed(6),
        action_weight=0.0)
    assert losses[-1] < losses[0]
    assert not torch.equal(o0.values, th0.values)
    assert not torch.equal(o1.values, th1.values)

    f0, f1, _, _ = coupling_optimize(
        th0, th1, path, ActionSpec(), Quadrature(N=6, M=64), steps=10, lr=1e-2,
        alpha=1e3, samplers=samplers, z=z, generator=torch.Generator().manual_seed(6),
        freeze_theta0=True, action_weight=0.0)
    assert torch.equal(f0.values, th0.values)
    assert not torch.equal(f1.values, th1.values)

    s0, s1, empty, _ = coupling_optimize(
        th0, th1, path, ActionSpec(), Quadrature(N=6, M=64), steps=0, lr=1e-2,
        alpha=1e3, samplers=samplers, z=z)
    assert s0 is th0 and s1 is th1 and empty == []


@pytest.fixture(scope="module")
def tiny_solve():
    p = desk_problem("gauss-pair", seed=0)
    p = replace(p, K=2, quad=Quadrature(N=8, M=64), arch=Architecture(2, 16, 2),
                budget=replace(p.budget, epochs=2, path_steps=8, coupling_steps=4,
                               warmup_steps=20),
                fm=replace(p.fm, steps=150, batch_size=128))
    seen = []
    result = solve(p, on_epoch=lambda e, path, row: seen.append((e, row["total"])))
    return result, seen


def test_solve_runs_both_phases(tiny_solve):
    result, seen = tiny_solve
    assert [e for e, _ in seen] == [0, 1]
    assert len(result.history) == 2
    expected = {"epoch", "total", "kinetic", "linear", "entropy", "interaction",
                "fisher", "w2_boundary0", "w2_boundary1", "wall_time", "value"}
    assert expected <= set(result.history[0].keys())
    assert result.history[1]["epoch"] == 1


def test_solve_improves_action_and_keeps_boundaries_bound(tiny_solve):
    result, _ = tiny_solve
    final = float(result.final_action.total)
    assert final < float(result.init_action.total)
    assert final < result.warmup_action  # no obstacle here, warmup already helps
    # the returned spline ends exactly at the returned endpoint parameters
    assert torch.equal(result.path.values[0], result.theta0.values)
    assert torch.equal(result.path.values[-1], result.theta1.values)


def test_solve_accepts_pretrained_boundaries(tiny_solve):
    result, _ = tiny_solve
    p = desk_problem("gauss-pair", seed=0)
    p = replace(p, K=2, quad=Quadrature(N=8, M=64), arch=Architecture(2, 16, 2),
                budget=replace(p.budget, epochs=1, path_steps=2, coupling_steps=0,
                               warmup_steps=0),
                fm=replace(p.fm, steps=150, batch_size=128))
    redo = solve(p, theta0=result.theta0, theta1=result.theta1)
    assert torch.equal(redo.theta0.values, result.theta0.values)
    assert torch.equal(redo.path.values[0], result.theta0.values)


def test_solve_resumes_from_initial_path(tiny_solve):
    result, _ = tiny_solve
    p = desk_problem("gauss-pair", seed=0)
    p = replace(p, K=2, quad=Quadrature(N=12, M=64), arch=Architecture(2, 16, 2),
                budget=replace(p.budget, epochs=1, path_steps=2, coupling_steps=0,
                               warmup_steps=0))
    redo = solve(p, initial_path=result.path)
    # endpoints come from the resumed path, no pretraining
    assert torch.equal(redo.theta0.values, result.theta0.values)
    assert torch.equal(redo.theta1.values, result.theta1.values)
    # resuming an optimized path under a finer grid starts near its optimum
    assert float(redo.init_action.total) < result.warmup_action

    small = Architecture(2, 4, 2)
    mismatched = linear_init(init_params(small, torch.Generator().manual_seed(0)),
                             init_params(small, torch.Generator().manual_seed(1)), 2)
    with pytest.raises(ConfigurationError):
        solve(p, initial_path=mismatched)


def test_xi_sampler_only_for_alignment_drift():
    assert xi_sampler_for(desk_problem("scc", seed=0)) is None
    sampler = xi_sampler_for(desk_problem("opinion", seed=0))
    xi = sampler(0)
    assert xi.shape == (2,)
    again = xi_sampler_for(desk_problem("opinion", seed=0))(0)
    assert torch.equal(xi, again)

"""Flow-matching loss and boundary pretraining."""

import math

import pytest
import torch

from densitypath.errors import ConfigurationError, TrainingDivergedError
from densitypath.flowmatch import FMConfig, fm_loss, pretrain_boundary
from densitypath.mlp import Architecture, ParamVector, init_params, mlp_forward, zeros_params
from densitypath.node import IntegratorConfig, transport
from densitypath.problems import boundary_fit_error, gaussian, torch_sampler

ARCH = Architecture(2, 8, 2)


def _batch(n, seed):
    gen = torch.Generator().manual_seed(seed)
    x1 = torch.randn(n, 2, dtype=torch.float64, generator=gen) + torch.tensor([1.0, -2.0])
    z = torch.randn(n, 2, dtype=torch.float64, generator=gen)
    return x1, z


def test_loss_with_degenerate_shrink_is_target_second_moment():
    # sigma_min = 1 removes the reference from both sample and target velocity,
    # so a zero field scores exactly E|x1|^2
    x1, z = _batch(128, seed=0)
    loss = fm_loss(zeros_params(ARCH), x1, z, sigma_min=1.0,
                   generator=torch.Generator().manual_seed(3))
    assert float(loss) == pytest.approx(float((x1 ** 2).sum(dim=1).mean()), abs=0.0)


def test_loss_matches_manual_interpolant_formula():
    x1, z = _batch(64, seed=1)
    theta = init_params(ARCH, torch.Generator().manual_seed(9))
    sigma_min = 0.35

    got = fm_loss(theta, x1, z, sigma_min, generator=torch.Generator().manual_seed(42))

    tau = torch.rand(64, dtype=torch.float64, generator=torch.Generator().manual_seed(42))
    xt = (1.0 - (1.0 - sigma_min) * tau).unsqueeze(1) * z + tau.unsqueeze(1) * x1
    u = x1 - (1.0 - sigma_min) * z
    v = mlp_forward(xt, tau, theta)
    want = ((v - u) ** 2).sum(dim=1).mean()
    assert torch.equal(got, want)


def test_loss_rejects_mismatched_batches():
    x1, z = _batch(16, seed=2)
    with pytest.raises(ConfigurationError):
        fm_loss(zeros_params(ARCH), x1[:8], z)
    with pytest.raises(ConfigurationError):
        fm_loss(zeros_params(ARCH), x1, z[:, :1])


def test_config_validation():
    with pytest.raises(ConfigurationError):
        FMConfig(batch_size=0)
    with pytest.raises(ConfigurationError):
        FMConfig(steps=-1)
    with pytest.raises(ConfigurationError):
        FMConfig(learning_rate=0.0)
    with pytest.raises(ConfigurationError):
        FMConfig(sigma_min=1.5)
    assert FMConfig().sigma_min == pytest.approx(1e-2)


def test_pretrain_is_seed_deterministic():
    target = torch_sampler(gaussian([1.5, 0.0], [[1.0, 0.0], [0.0, 1.0]]))
    cfg = FMConfig(batch_size=64, steps=40)
    a = pretrain_boundary(target, ARCH, cfg, seed=7)
    b = pretrain_boundary(target, ARCH, cfg, seed=7)
    assert torch.equal(a.params.values, b.params.values)
    assert a.losses == b.losses
    c = pretrain_boundary(target, ARCH, cfg, seed=8)
    assert not torch.equal(a.params.values, c.params.values)


def test_reference_sampler_changes_training():
    target = torch_sampler(gaussian([1.5, 0.0], [[1.0, 0.0], [0.0, 1.0]]))
    cfg = FMConfig(batch_size=64, steps=30)
    default_ref = pretrain_boundary(target, ARCH, cfg, seed=7)
    halved = lambda n, gen: 0.5 * torch.randn(n, 2, dtype=torch.float64, generator=gen)
    custom_ref = pretrain_boundary(target, ARCH, cfg, seed=7, reference_sampler=halved)
    assert not torch.equal(default_ref.params.values, custom_ref.params.values)


@pytest.fixture(scope="module")
def shifted_fit():
    spec = gaussian([2.0, 0.0], [[1.0, 0.0], [0.0, 1.0]])
    cfg = FMConfig(batch_size=256, steps=600, learning_rate=3e-3)
    result = pretrain_boundary(torch_sampler(spec), Architecture(2, 16, 2), cfg, seed=0)
    return spec, result


def test_pretrain_fits_shifted_gaussian(shifted_fit):
    spec, result = shifted_fit
    gen = torch.Generator().manual_seed(123)
    z = torch.randn(1024, 2, dtype=torch.float64, generator=gen)
    cloud = transport(result.params, z, IntegratorConfig())
    err = boundary_fit_error(cloud, spec)
    assert err < 0.2
    # untrained transport leaves the cloud roughly |m| = 2 away
    assert boundary_fit_error(z, spec) > 1.5


def test_pretrain_loss_decreases(shifted_fit):
    # the loss floor is the conditional variance of the matching target, so
    # the tail flattens well above zero; check the transient is gone
    _, result = shifted_fit
    head = sum(result.losses[:50]) / 50.0
    tail = sum(result.losses[-50:]) / 50.0
    assert tail < 0.75 * head
    assert result.final_loss == pytest.approx(result.losses[-1])


def test_zero_steps_returns_untrained_init():
    target = torch_sampler(gaussian([0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]]))
    out = pretrain_boundary(target, ARCH, FMConfig(steps=0), seed=11)
    want = init_params(ARCH, torch.Generator().manual_seed(11))
    assert torch.equal(out.params.values, want.values)
    assert math.isnan(out.final_loss)
    assert out.losses == ()


def test_divergent_target_raises_with_context():
    bad = lambda n, gen: torch.full((n, 2), float("inf"), dtype=torch.float64)
    with pytest.raises(TrainingDivergedError) as err:
        pretrain_boundary(bad, ARCH, FMConfig(batch_size=8, steps=5), seed=5)
    assert err.value.step == 0
    assert err.value.seed == 5

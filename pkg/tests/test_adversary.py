import math

import pytest
import torch
import torch.nn as nn

from warptryon.adversary import (
    PatchDiscriminator,
    gradient_penalty,
    relativistic_d_loss,
    relativistic_g_loss,
)
from warptryon.errors import ContractViolation
from warptryon.tps import identity_theta
from warptryon.unet import WarpingUNet

LN2 = math.log(2.0)


class ZeroCritic(nn.Module):
    def forward(self, x):
        return torch.zeros(x.shape[0], 1, 2, 2)


class SumCritic(nn.Module):
    """Linear critic: a 1x1 conv with unit weights, so sum(scores) = sum(x)."""

    def __init__(self, channels):
        super().__init__()
        self.conv = nn.Conv2d(channels, 1, 1, bias=False)
        nn.init.ones_(self.conv.weight)

    def forward(self, x):
        return self.conv(x)


@pytest.mark.parametrize("variant", ["rsgan", "ragan"])
def test_losses_at_parity_equal_ln2(variant):
    # ragan compares against the batch mean, so parity needs equal scores everywhere
    s = torch.randn(4, 1, 2, 2) if variant == "rsgan" else torch.full((4, 1, 2, 2), 0.7)
    assert relativistic_d_loss(s, s.clone(), variant).item() == pytest.approx(LN2, abs=1e-6)
    assert relativistic_g_loss(s, s.clone(), variant).item() == pytest.approx(LN2, abs=1e-6)


def test_asymptotes():
    real = torch.full((2, 1, 2, 2), 10.0)
    fake = torch.full((2, 1, 2, 2), -10.0)
    assert relativistic_d_loss(real, fake).item() == pytest.approx(math.log1p(math.exp(-20)), abs=1e-8)
    assert relativistic_g_loss(real, fake).item() == pytest.approx(20.0, abs=1e-6)
    assert relativistic_d_loss(fake, real).item() == pytest.approx(20.0, abs=1e-6)


def test_monotone_in_margin():
    fake = torch.zeros(1, 1, 1, 1)
    margins = [-3, -1, 0, 1, 3]
    d = [relativistic_d_loss(torch.full_like(fake, m), fake).item() for m in margins]
    g = [relativistic_g_loss(torch.full_like(fake, m), fake).item() for m in margins]
    assert all(a > b for a, b in zip(d, d[1:]))
    assert all(a < b for a, b in zip(g, g[1:]))


def test_g_loss_does_not_backprop_into_real_scores():
    real = torch.randn(2, 1, 2, 2, requires_grad=True)
    fake = torch.randn(2, 1, 2, 2, requires_grad=True)
    relativistic_g_loss(real, fake).backward()
    assert real.grad is None
    assert fake.grad is not None


def test_shape_mismatch_and_unknown_variant():
    with pytest.raises(ContractViolation):
        relativistic_d_loss(torch.zeros(1, 1, 2, 2), torch.zeros(1, 1, 2, 3))
    with pytest.raises(ContractViolation):
        relativistic_d_loss(torch.zeros(1, 1, 2, 2), torch.zeros(1, 1, 2, 2), "lsgan")


def test_gradient_penalty_zero_critic_is_one():
    x = torch.rand(3, 3, 8, 8)
    assert gradient_penalty(ZeroCritic(), x, torch.rand_like(x)).item() == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("shape", [(2, 3, 8, 6), (1, 3, 16, 16)])
def test_gradient_penalty_linear_critic(shape):
    _, c, h, w = shape
    real, fake = torch.rand(shape), torch.rand(shape)
    expected = (math.sqrt(h * w * c) - 1) ** 2
    assert gradient_penalty(SumCritic(c), real, fake).item() == pytest.approx(expected, rel=1e-6)


def test_gradient_penalty_is_differentiable_in_critic_params():
    torch.manual_seed(0)
    d = PatchDiscriminator()
    x = torch.rand(2, 3, 64, 64)
    gp = gradient_penalty(d, x, torch.rand_like(x))
    gp.backward()
    assert sum(float(p.grad.abs().sum()) for p in d.parameters() if p.grad is not None) > 0


def test_patch_map_shapes():
    d = PatchDiscriminator().eval()
    with torch.no_grad():
        assert d(torch.zeros(1, 3, 256, 192)).shape == (1, 1, 8, 6)
        assert d(torch.zeros(2, 3, 64, 64)).shape == (2, 1, 2, 2)
    with pytest.raises(ContractViolation):
        d(torch.zeros(1, 3, 40, 40))


def test_adversarial_gradient_reaches_theta():
    torch.manual_seed(2)
    gen, disc = WarpingUNet(), PatchDiscriminator()
    ap, c, real = (torch.rand(2, 3, 64, 64) * 2 - 1 for _ in range(3))
    theta = (identity_theta(2) + 0.05 * torch.randn(2, 50)).requires_grad_(True)
    fake = gen(ap, c, theta)
    relativistic_g_loss(disc(real), disc(fake)).backward()
    assert theta.grad.abs().sum() > 0

"""Patch discriminator and the relativistic adversarial objective with gradient penalty."""
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ContractViolation
from .matcher import check_resolution

DISC_WIDTHS = (32, 64, 128, 256, 256)
VARIANTS = ("rsgan", "ragan")


class PatchDiscriminator(nn.Module):
    """Five (4x4 stride-2 conv, batch norm, leaky relu) blocks and a 1-channel head.

    A 256x192 image yields an 8x6 map of unbounded patch scores.
    """

    def __init__(self, in_ch=3, widths=DISC_WIDTHS, slope=0.2):
        super().__init__()
        if len(widths) != 5:
            raise ContractViolation("discriminator needs exactly five downsampling widths")
        layers = []
        prev = in_ch
        for w in widths:
            layers += [nn.Conv2d(prev, w, 4, 2, 1), nn.BatchNorm2d(w), nn.LeakyReLU(slope, inplace=True)]
            prev = w
        self.body = nn.Sequential(*layers)
        self.head = nn.Conv2d(prev, 1, 3, 1, 1)

    def forward(self, x):
        check_resolution(x, 5)
        return self.head(self.body(x))

    def critic(self, x):
        return self(x)


def _check_pair(real_scores, fake_scores):
    if real_scores.shape != fake_scores.shape:
        raise ContractViolation(
            f"score maps differ: {tuple(real_scores.shape)} vs {tuple(fake_scores.shape)}"
        )


def _relative(a, b, variant):
    if variant == "rsgan":
        return a - b
    if variant == "ragan":
        return a - b.mean(0, keepdim=True)
    raise ContractViolation(f"unknown relativistic variant {variant!r}")


def relativistic_d_loss(real_scores, fake_scores, variant="rsgan"):
    """mean(-log sigmoid(C(real) - C(fake))): real should score above fake."""
    _check_pair(real_scores, fake_scores)
    loss = F.softplus(-_relative(real_scores, fake_scores, variant))
    if variant == "ragan":
        loss = 0.5 * (loss + F.softplus(_relative(fake_scores, real_scores, variant)))
    return loss.mean()


def relativistic_g_loss(real_scores, fake_scores, variant="rsgan"):
    """mean(-log sigmoid(C(fake) - C(real))); the real branch is detached."""
    _check_pair(real_scores, fake_scores)
    real_scores = real_scores.detach()
    loss = F.softplus(-_relative(fake_scores, real_scores, variant))
    if variant == "ragan":
        loss = 0.5 * (loss + F.softplus(_relative(real_scores, fake_scores, variant)))
    return loss.mean()


def gradient_penalty(critic, real, fake, generator=None):
    """E[(||grad_x C(x)||_2 - 1)^2] over uniform interpolates of real and fake.

    A patch critic's score map is summed per sample before differentiation.
    The result stays on the autograd graph so it can be back-propagated.
    """
    if real.shape != fake.shape:
        raise ContractViolation(f"real {tuple(real.shape)} and fake {tuple(fake.shape)} differ")
    alpha = torch.rand(real.shape[0], 1, 1, 1, generator=generator, dtype=real.dtype, device=real.device)
    x = (alpha * real.detach() + (1 - alpha) * fake.detach()).requires_grad_(True)
    scores = critic(x)
    grad = None
    if scores.requires_grad:
        (grad,) = torch.autograd.grad(scores.sum(), x, create_graph=True, allow_unused=True)
    if grad is None:
        grad = torch.zeros_like(x)
    norms = grad.flatten(1).norm(dim=1)
    return ((norms - 1) ** 2).mean()

"""Supervised training losses and the frozen perceptual feature extractor.

All L1 terms use mean reduction, so a constant gap of ``g`` gives ``g``
regardless of resolution.
"""
import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from .errors import ContractViolation, DivergenceError
from .tps import warp_image

EXTRACTOR_DEPTHS = (16, 32, 64, 128, 256)
EXTRACTOR_FORMAT = "warptryon-extractor"
EXTRACTOR_VERSION = 1


@dataclass
class LossWeights:
    warp: float = 1.0
    perceptual: float = 1.0
    l1: float = 1.0
    adv: float = 1.0

    def __post_init__(self):
        for name in ("warp", "perceptual", "l1", "adv"):
            if getattr(self, name) < 0:
                raise ContractViolation(f"loss weight {name} must be nonnegative")


class PerceptualExtractor(nn.Module):
    """Frozen 5-stage feature extractor; ``forward`` returns one map per stage.

    Gradients flow through to the input but parameters never train.
    """

    def __init__(self, stages, channels, kind="seeded", seed=None, input_transform=None):
        super().__init__()
        self.stages = nn.ModuleList(stages)
        self.channels = tuple(channels)
        self.kind = kind
        self.seed = seed
        self.input_transform = input_transform
        self.freeze()

    def freeze(self):
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()
        return self

    def train(self, mode=True):
        # always deterministic inference
        return super().train(False)

    def forward(self, x):
        if self.input_transform is not None:
            x = self.input_transform(x)
        feats = []
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return feats

    @classmethod
    def from_seed(cls, seed=0, depths=EXTRACTOR_DEPTHS):
        gen = torch.Generator().manual_seed(seed)
        stages, prev = [], 3
        for d in depths:
            stage = nn.Sequential(
                nn.Conv2d(prev, d, 3, 1, 1), nn.ReLU(),
                nn.Conv2d(d, d, 4, 2, 1), nn.ReLU(),
            )
            for m in stage:
                if isinstance(m, nn.Conv2d):
                    fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
                    with torch.no_grad():
                        m.weight.copy_(torch.randn(m.weight.shape, generator=gen) * math.sqrt(2.0 / fan_in))
                        m.bias.zero_()
            stages.append(stage)
            prev = d
        return cls(stages, depths, kind="seeded", seed=seed)

    @classmethod
    def from_vgg16(cls, state_dict_path):
        """Wrap torchvision's VGG-16 (weights read from a local file) at relu{1_2,2_2,3_3,4_3,5_3}."""
        from torchvision.models import vgg16

        net = vgg16(weights=None)
        net.load_state_dict(torch.load(state_dict_path, map_location="cpu"))
        feats = net.features
        cuts = (4, 9, 16, 23, 30)
        stages, start = [], 0
        for stop in cuts:
            stages.append(nn.Sequential(*[feats[i] for i in range(start, stop)]))
            start = stop
        return cls(stages, (64, 128, 256, 512, 512), kind="vgg16", input_transform=_ImagenetNorm())

    def state(self):
        return {
            "format": EXTRACTOR_FORMAT,
            "version": EXTRACTOR_VERSION,
            "kind": self.kind,
            "seed": self.seed,
            "channels": list(self.channels),
            "state_dict": self.state_dict(),
        }

    @classmethod
    def from_state(cls, state):
        if state.get("format") != EXTRACTOR_FORMAT or state.get("version") != EXTRACTOR_VERSION:
            raise ContractViolation("not a compatible perceptual extractor state")
        if state["kind"] != "seeded":
            raise ContractViolation(f"cannot rebuild extractor of kind {state['kind']!r} from state")
        ext = cls.from_seed(state["seed"] or 0, tuple(state["channels"]))
        ext.load_state_dict(state["state_dict"])
        return ext.freeze()

    def save(self, path):
        torch.save(self.state(), path)

    @classmethod
    def load(cls, path):
        return cls.from_state(torch.load(path, map_location="cpu", weights_only=False))


class _ImagenetNorm(nn.Module):
    def __init__(self):
        super().__init__()
        self.register_buffer("mean", torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1))

    def forward(self, x):
        return ((x + 1) / 2 - self.mean) / self.std


def _same_shape(a, b, what):
    if a.shape != b.shape:
        raise ContractViolation(f"{what}: shapes differ, {tuple(a.shape)} vs {tuple(b.shape)}")


def pixel_l1(generated, target):
    _same_shape(generated, target, "pixel_l1")
    return (generated - target).abs().mean()


def warp_loss(theta, cloth, worn_cloth, pad_mode="border"):
    """Mean |T_theta(cloth) - worn_cloth| over all pixels and channels."""
    _same_shape(cloth, worn_cloth, "warp_loss")
    return (warp_image(theta, cloth, pad_mode) - worn_cloth).abs().mean()


def perceptual_loss(generated, target, extractor):
    _same_shape(generated, target, "perceptual_loss")
    if extractor is None:
        raise ContractViolation("perceptual extractor not loaded")
    fg = extractor(generated)
    if target.requires_grad:
        ft = extractor(target)
    else:
        with torch.no_grad():
            ft = extractor(target)
    return sum((a - b).abs().mean() for a, b in zip(fg, ft))


TERMS = ("warp", "perceptual", "l1", "adv")


def total_loss(parts, weights=None):
    """Weighted sum of the loss terms present in ``parts``.

    Raises DivergenceError naming the first non-finite term.
    """
    weights = weights or LossWeights()
    total = 0.0
    for name, value in parts.items():
        if name not in TERMS:
            raise ContractViolation(f"unknown loss term {name!r}")
        v = float(value.detach()) if isinstance(value, torch.Tensor) else float(value)
        if not math.isfinite(v):
            raise DivergenceError(name, v)
        total = total + getattr(weights, name) * value
    return total

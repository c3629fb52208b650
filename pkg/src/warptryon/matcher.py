"""Convolutional geometric matcher: two feature extractors, correlation, TPS regression."""
import torch
import torch.nn as nn

from .errors import ContractViolation
from .tps import THETA_DIM, identity_theta

DEPTHS = (16, 32, 64, 128, 256)
REGRESSOR_WIDTHS = (512, 256, 256, 128)
L2_EPS = 1e-8


def check_resolution(x, levels=len(DEPTHS)):
    h, w = x.shape[-2:]
    k = 2 ** levels
    if h % k or w % k:
        raise ContractViolation(f"input resolution {h}x{w} must be divisible by {k}")


def _norm(kind, ch):
    if kind == "batch":
        return nn.BatchNorm2d(ch)
    if kind == "instance":
        return nn.InstanceNorm2d(ch, affine=True)
    if kind == "none":
        return nn.Identity()
    raise ValueError(kind)


class Encoder(nn.Module):
    """Five scales of (3x3 conv, stride-2 conv), each followed by norm + relu.

    ``forward`` returns the list of feature maps after every downsampling,
    finest first.  The first ``plain_levels`` scales skip normalization.
    """

    def __init__(self, in_ch=3, depths=DEPTHS, norm="batch", down_kernel=3, plain_levels=0):
        super().__init__()
        self.depths = tuple(depths)
        blocks = []
        prev = in_ch
        for i, d in enumerate(depths):
            kind = "none" if i < plain_levels else norm
            blocks.append(nn.Sequential(
                nn.Conv2d(prev, d, 3, 1, 1),
                _norm(kind, d),
                nn.ReLU(inplace=True),
                nn.Conv2d(d, d, down_kernel, 2, 1),
                _norm(kind, d),
                nn.ReLU(inplace=True),
            ))
            prev = d
        self.blocks = nn.ModuleList(blocks)

    def forward(self, x):
        check_resolution(x, len(self.blocks))
        feats = []
        for block in self.blocks:
            x = block(x)
            feats.append(x)
        return feats


def l2_normalize(f, eps=L2_EPS):
    """Unit-normalize each spatial feature vector of (B, C, H, W)."""
    return f / (f.pow(2).sum(1, keepdim=True).sqrt() + eps)


def correlate(f1, f2):
    """All-pairs correlation of L2-normalized feature maps.

    Returns (B, h*w, h, w): channel k = m*w + n holds f1[:, :, i, j] . f2[:, :, m, n]
    at spatial position (i, j).
    """
    if f1.shape != f2.shape:
        raise ContractViolation(f"feature shapes differ: {tuple(f1.shape)} vs {tuple(f2.shape)}")
    b, c, h, w = f1.shape
    f1 = l2_normalize(f1)
    f2 = l2_normalize(f2)
    corr = torch.einsum("bcij,bck->bkij", f1, f2.reshape(b, c, h * w))
    return corr


class ThetaRegressor(nn.Module):
    """Two strided convs, two standard convs, then a linear layer to theta.

    The linear layer starts at zero weight with the identity lattice as bias,
    so an untrained regressor outputs the identity transform.
    """

    def __init__(self, in_ch, feat_hw, widths=REGRESSOR_WIDTHS, strided_kernel=3):
        super().__init__()
        w1, w2, w3, w4 = widths
        pad = strided_kernel // 2
        self.conv = nn.Sequential(
            nn.Conv2d(in_ch, w1, strided_kernel, 2, pad), nn.BatchNorm2d(w1), nn.ReLU(inplace=True),
            nn.Conv2d(w1, w2, strided_kernel, 2, pad), nn.BatchNorm2d(w2), nn.ReLU(inplace=True),
            nn.Conv2d(w2, w3, 3, 1, 1), nn.BatchNorm2d(w3), nn.ReLU(inplace=True),
            nn.Conv2d(w3, w4, 3, 1, 1), nn.BatchNorm2d(w4), nn.ReLU(inplace=True),
        )
        h, w = feat_hw
        for _ in range(2):
            h = (h + 2 * pad - strided_kernel) // 2 + 1
            w = (w + 2 * pad - strided_kernel) // 2 + 1
        self.fc = nn.Linear(w4 * h * w, THETA_DIM)
        nn.init.zeros_(self.fc.weight)
        with torch.no_grad():
            self.fc.bias.copy_(identity_theta())

    def forward(self, corr):
        x = self.conv(corr)
        return self.fc(x.flatten(1))


class GeometricMatcher(nn.Module):
    """theta = match(cloth, agnostic) for (B, 3, H, W) images in [-1, 1]."""

    def __init__(self, image_size=(64, 64), depths=DEPTHS, regressor_widths=REGRESSOR_WIDTHS):
        super().__init__()
        h, w = image_size
        k = 2 ** len(depths)
        if h % k or w % k:
            raise ContractViolation(f"image size {h}x{w} must be divisible by {k}")
        fh, fw = h // k, w // k
        self.image_size = (h, w)
        self.extractor_f1 = Encoder(depths=depths, norm="batch")
        self.extractor_f2 = Encoder(depths=depths, norm="batch")
        self.regressor = ThetaRegressor(fh * fw, (fh, fw), regressor_widths)

    def extract_features(self, x, branch):
        enc = {"f1": self.extractor_f1, "f2": self.extractor_f2}[branch]
        return enc(x)[-1]

    def regress_theta(self, corr):
        return self.regressor(corr)

    def forward(self, cloth, agnostic):
        if tuple(cloth.shape[-2:]) != self.image_size or tuple(agnostic.shape[-2:]) != self.image_size:
            raise ContractViolation(
                f"matcher built for {self.image_size}, got {tuple(cloth.shape[-2:])} / {tuple(agnostic.shape[-2:])}"
            )
        f1 = self.extract_features(cloth, "f1")
        f2 = self.extract_features(agnostic, "f2")
        return self.regress_theta(correlate(f1, f2))

    def match(self, cloth, agnostic):
        return self(cloth, agnostic)

"""Siamese U-net generator whose cloth-branch skip connections are TPS-warped."""
import torch
import torch.nn as nn

from .errors import ContractViolation
from .matcher import DEPTHS, Encoder
from .tps import warp_multiscale


def _norm(cout, plain):
    return nn.Identity() if plain else nn.InstanceNorm2d(cout, affine=True)


def _block(cin, cout, plain=False):
    return nn.Sequential(nn.Conv2d(cin, cout, 3, 1, 1), _norm(cout, plain), nn.ReLU(inplace=True))


def _up(cin, cout, plain=False):
    return nn.Sequential(nn.ConvTranspose2d(cin, cout, 4, 2, 1), _norm(cout, plain), nn.ReLU(inplace=True))


class WarpingUNet(nn.Module):
    """Generator G(agnostic, cloth, theta).

    Two parameter-disjoint encoders (E1 on the cloth, E2 on the agnostic
    person) feed a shared decoder.  Only E1's feature maps are warped.  After
    each upsampling the decoder state is concatenated as
    [decoder, warped E1, E2]; the deepest level is fused the same way before
    the first upsampling.  Output goes through tanh, so it lies in [-1, 1].

    Instance norm is skipped at the finest encoder scale and in the last
    decoder stage (``plain_levels=1``): instance norm discards absolute
    color, and without an unnormalized path near full resolution the
    generator memorizes training colors instead of copying them.
    """

    def __init__(self, depths=DEPTHS, feature_pad_mode="border", plain_levels=1):
        super().__init__()
        self.depths = tuple(depths)
        self.feature_pad_mode = feature_pad_mode
        self.plain_levels = plain_levels
        self.encoder_e1 = Encoder(depths=depths, norm="instance", plain_levels=plain_levels)
        self.encoder_e2 = Encoder(depths=depths, norm="instance", plain_levels=plain_levels)
        convs, ups = [], []
        cin = 2 * depths[-1]
        for i in reversed(range(len(depths))):
            plain = i < plain_levels
            convs.append(_block(cin, depths[i], plain))
            cout = depths[i - 1] if i > 0 else depths[0]
            ups.append(_up(depths[i], cout, plain))
            cin = cout + 2 * depths[i - 1] if i > 0 else cout
        self.dec_convs = nn.ModuleList(convs)
        self.dec_ups = nn.ModuleList(ups)
        self.to_rgb = nn.Conv2d(depths[0], 3, 3, 1, 1)

    def encode(self, x, branch):
        enc = {"e1": self.encoder_e1, "e2": self.encoder_e2}[branch]
        return enc(x)

    def decode(self, warped_cloth_pyr, person_pyr):
        if len(warped_cloth_pyr) != len(self.depths) or len(person_pyr) != len(self.depths):
            raise ContractViolation(f"pyramids must have {len(self.depths)} levels")
        for a, b in zip(warped_cloth_pyr, person_pyr):
            if a.shape != b.shape:
                raise ContractViolation(f"pyramid levels differ: {tuple(a.shape)} vs {tuple(b.shape)}")
        n = len(self.depths)
        x = torch.cat([warped_cloth_pyr[-1], person_pyr[-1]], 1)
        for step, (conv, up) in enumerate(zip(self.dec_convs, self.dec_ups)):
            x = up(conv(x))
            level = n - 2 - step
            if level >= 0:
                x = torch.cat([x, warped_cloth_pyr[level], person_pyr[level]], 1)
        return torch.tanh(self.to_rgb(x))

    def forward(self, agnostic, cloth, theta=None):
        """Synthesize the try-on image.  ``theta=None`` skips warping entirely."""
        if agnostic.shape != cloth.shape:
            raise ContractViolation(
                f"agnostic {tuple(agnostic.shape)} and cloth {tuple(cloth.shape)} differ"
            )
        e1 = self.encode(cloth, "e1")
        e2 = self.encode(agnostic, "e2")
        if theta is not None:
            e1 = warp_multiscale(theta, e1, self.feature_pad_mode)
        return self.decode(e1, e2)

    def generate(self, agnostic, cloth, theta):
        return self(agnostic, cloth, theta)

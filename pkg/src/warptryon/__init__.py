"""Warping U-net virtual try-on with TPS-warped skip connections."""
from .adversary import PatchDiscriminator, gradient_penalty, relativistic_d_loss, relativistic_g_loss
from .config import TrainConfig
from .data import MaskSpec, TryOnTriplet, generate_cloth, ingest_real, make_agnostic, sample_triplet, synthesize_person
from .errors import CheckpointError, ContractViolation, DivergenceError, ManifestError
from .matcher import GeometricMatcher, correlate
from .metric import LpipsWeights, lpips, lpips_directory
from .objectives import LossWeights, PerceptualExtractor, perceptual_loss, pixel_l1, total_loss, warp_loss
from .tps import (
    ControlLattice, bilinear_sample, default_lattice, generate_grid, identity_theta, tps_solve, warp_multiscale,
)
from .train import LossBreakdown, Trainer, train
from .unet import WarpingUNet

__version__ = "0.1.0"

"""Thin-plate-spline parameterization, sampling grids and bilinear sampling.

Conventions: coordinates are normalized to [-1, 1] with corner pixels at
exactly +-1 (align-corners).  ``theta`` holds the 25 target positions of a
regular 5x5 control lattice, flattened as (x0, y0, x1, y1, ...), lattice
points ordered row-major (y outer, x inner).  A grid entry is the location
in the *source* image that the output pixel reads from.
"""
from functools import lru_cache
from typing import NamedTuple

import numpy as np
import torch
import torch.nn.functional as F

from . import _kernels
from .errors import ContractViolation

LATTICE_SIZE = 5
THETA_DIM = 2 * LATTICE_SIZE * LATTICE_SIZE


def tps_kernel(r2):
    """U(r) = r^2 log r^2 expressed on squared distances, U(0) = 0."""
    if isinstance(r2, torch.Tensor):
        safe = torch.where(r2 > 0, r2, torch.ones_like(r2))
        return torch.where(r2 > 0, r2 * torch.log(safe), torch.zeros_like(r2))
    return _kernels._tps_kernel_np(np.asarray(r2, dtype=np.float64))


class ControlLattice:
    """Regular control lattice over [-1, 1]^2 and the inverse of its TPS system."""

    def __init__(self, size: int = LATTICE_SIZE):
        axis = np.linspace(-1.0, 1.0, size)
        ys, xs = np.meshgrid(axis, axis, indexing="ij")
        self.size = size
        self.points = np.stack([xs.ravel(), ys.ravel()], axis=1)
        n = len(self.points)
        d = self.points[:, None, :] - self.points[None, :, :]
        system = np.zeros((n + 3, n + 3))
        system[:n, :n] = tps_kernel((d ** 2).sum(-1))
        system[:n, n] = 1.0
        system[:n, n + 1:] = self.points
        system[n, :n] = 1.0
        system[n + 1:, :n] = self.points.T
        cond = np.linalg.cond(system)
        assert np.isfinite(cond) and cond < 1e12, "singular TPS system"
        self.system = system
        self.inverse = np.linalg.inv(system)
        self.inverse.setflags(write=False)
        self.points.setflags(write=False)
        self._inverse_t = torch.from_numpy(self.inverse.copy())

    @property
    def num_points(self):
        return len(self.points)

    def identity_theta(self, dtype=torch.float32):
        return torch.as_tensor(self.points.ravel().copy(), dtype=dtype)


@lru_cache(maxsize=None)
def default_lattice(size: int = LATTICE_SIZE) -> ControlLattice:
    return ControlLattice(size)


def identity_theta(batch: int = None, dtype=torch.float32):
    theta = default_lattice().identity_theta(dtype)
    if batch is None:
        return theta
    return theta.unsqueeze(0).repeat(batch, 1)


class TpsCoefficients(NamedTuple):
    radial: torch.Tensor  # (B, N, 2), float64
    affine: torch.Tensor  # (B, 3, 2): rows are offset, x-coefficient, y-coefficient
    lattice: ControlLattice
    dtype: torch.dtype


def tps_solve(theta, lattice: ControlLattice = None) -> TpsCoefficients:
    """Solve for the TPS mapping each lattice point onto its target in ``theta``.

    Accepts a (50,) or (B, 50) tensor.  The solve runs in float64 and is
    linear in ``theta``, so autograd carries gradients through it.
    """
    lattice = lattice or default_lattice()
    theta = torch.as_tensor(theta)
    if theta.dim() == 1:
        theta = theta.unsqueeze(0)
    n = lattice.num_points
    if theta.shape[-1] != 2 * n:
        raise ContractViolation(f"theta must have {2 * n} entries, got {theta.shape[-1]}")
    if not torch.isfinite(theta).all():
        raise ContractViolation("theta contains non-finite values")
    targets = theta.to(torch.float64).reshape(theta.shape[0], n, 2)
    rhs = torch.cat([targets, targets.new_zeros(theta.shape[0], 3, 2)], dim=1)
    inv = lattice._inverse_t.to(theta.device)
    sol = inv @ rhs
    return TpsCoefficients(sol[:, :n], sol[:, n:], lattice, theta.dtype)


def normalized_mesh(height: int, width: int) -> np.ndarray:
    """(H, W, 2) array of normalized (x, y) pixel-center coordinates."""
    xs = np.linspace(-1.0, 1.0, width) if width > 1 else np.zeros(1)
    ys = np.linspace(-1.0, 1.0, height) if height > 1 else np.zeros(1)
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    return np.stack([gx, gy], axis=-1)


@lru_cache(maxsize=64)
def _basis(height, width, lattice_size):
    lattice = default_lattice(lattice_size)
    pts = normalized_mesh(height, width).reshape(-1, 2)
    r2 = ((pts[:, None, :] - lattice.points[None]) ** 2).sum(-1)
    basis = np.concatenate([tps_kernel(r2), np.ones((len(pts), 1)), pts], axis=1)
    return torch.from_numpy(basis)


def generate_grid(coeffs: TpsCoefficients, height: int, width: int, dtype=None):
    """Evaluate the TPS on the normalized ``height`` x ``width`` mesh -> (B, H, W, 2)."""
    if height < 1 or width < 1:
        raise ContractViolation(f"grid size must be positive, got {height}x{width}")
    if coeffs.lattice is default_lattice(coeffs.lattice.size):
        basis = _basis(height, width, coeffs.lattice.size)
    else:
        pts = normalized_mesh(height, width).reshape(-1, 2)
        r2 = ((pts[:, None, :] - coeffs.lattice.points[None]) ** 2).sum(-1)
        basis = np.concatenate([tps_kernel(r2), np.ones((len(pts), 1)), pts], axis=1)
        basis = torch.from_numpy(basis)
    basis = basis.to(coeffs.radial.device)
    sol = torch.cat([coeffs.radial, coeffs.affine], dim=1)
    grid = (basis @ sol).reshape(-1, height, width, 2)
    return grid.to(dtype or coeffs.dtype)


def theta_to_grid(theta, height, width, dtype=None):
    return generate_grid(tps_solve(theta), height, width, dtype=dtype)


PAD_MODES = ("border", "zeros")


def bilinear_sample(source, grid, pad_mode="border", out_size=None):
    """Bilinearly sample ``source`` (B, C, H, W) at ``grid`` (B, Ho, Wo, 2).

    Differentiable in both ``source`` and ``grid``.  ``out_size`` optionally
    states the expected (Ho, Wo); a grid of any other resolution is rejected.
    """
    if pad_mode not in PAD_MODES:
        raise ContractViolation(f"pad_mode must be one of {PAD_MODES}, got {pad_mode!r}")
    if source.dim() != 4 or source.shape[1] < 1:
        raise ContractViolation(f"source must be (B, C>=1, H, W), got {tuple(source.shape)}")
    if grid.dim() != 4 or grid.shape[-1] != 2:
        raise ContractViolation(f"grid must be (B, Ho, Wo, 2), got {tuple(grid.shape)}")
    if out_size is not None and tuple(grid.shape[1:3]) != tuple(out_size):
        raise ContractViolation(
            f"grid resolution {tuple(grid.shape[1:3])} != requested output {tuple(out_size)}"
        )
    if grid.shape[0] != source.shape[0]:
        if grid.shape[0] != 1:
            raise ContractViolation("grid batch does not match source batch")
        grid = grid.expand(source.shape[0], -1, -1, -1)
    return F.grid_sample(
        source, grid.to(source.dtype), mode="bilinear", padding_mode=pad_mode, align_corners=True
    )


def warp_multiscale(theta, pyramid, pad_mode="border"):
    """Warp every level of ``pyramid`` with grids generated from one shared ``theta``."""
    coeffs = tps_solve(theta)
    out = []
    for level in pyramid:
        h, w = level.shape[-2:]
        grid = generate_grid(coeffs, h, w, dtype=level.dtype)
        out.append(bilinear_sample(level, grid, pad_mode))
    return out


def warp_image(theta, image, pad_mode="border"):
    """Pixel-level warp T_theta(image) for a (B, C, H, W) batch."""
    h, w = image.shape[-2:]
    grid = theta_to_grid(theta, h, w, dtype=image.dtype)
    return bilinear_sample(image, grid, pad_mode)


# numpy path (data synthesis, demos); see _kernels for the JIT switch


def theta_grid_np(theta, height, width, lattice: ControlLattice = None):
    """TPS grid for a single theta as a float64 (H, W, 2) numpy array."""
    lattice = lattice or default_lattice()
    theta = np.asarray(theta, dtype=np.float64).reshape(-1, 2)
    rhs = np.concatenate([theta, np.zeros((3, 2))])
    coeffs = np.ascontiguousarray(lattice.inverse @ rhs)
    pts = np.ascontiguousarray(normalized_mesh(height, width).reshape(-1, 2))
    ctrl = np.ascontiguousarray(lattice.points)
    return _kernels.tps_eval(coeffs, ctrl, pts).reshape(height, width, 2)


def warp_image_np(theta, image, pad_mode="border"):
    """Warp a (C, H, W) numpy image; returns float64."""
    image = np.ascontiguousarray(image, dtype=np.float64)
    grid = theta_grid_np(theta, image.shape[1], image.shape[2])
    return _kernels.bilinear_sample(image, grid, pad_mode == "border")

"""Numeric inner loops for the non-differentiable (numpy) warping path.

Each kernel exists twice: a numba ``@njit`` version and a pure-numpy
version.  The numpy version is selected when numba is missing or when the
environment variable ``WARPTRYON_DISABLE_NUMBA`` is set to a truthy value
at import time.  Both compute in float64.
"""
import os

import numpy as np

_DISABLED = os.environ.get("WARPTRYON_DISABLE_NUMBA", "").lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


def _tps_kernel_np(r2):
    out = np.zeros_like(r2)
    pos = r2 > 0
    out[pos] = r2[pos] * np.log(r2[pos])
    return out


def tps_eval_numpy(coeffs, ctrl, points):
    """Evaluate a TPS with ``coeffs`` (N+3, 2) at ``points`` (M, 2)."""
    d = points[:, None, :] - ctrl[None, :, :]
    r2 = (d ** 2).sum(-1)
    basis = np.concatenate(
        [_tps_kernel_np(r2), np.ones((len(points), 1)), points], axis=1
    )
    return basis @ coeffs


def bilinear_sample_numpy(src, grid, border):
    """Sample ``src`` (C, H, W) at normalized ``grid`` (Ho, Wo, 2), align-corners."""
    c, h, w = src.shape
    x = (grid[..., 0] + 1.0) * 0.5 * (w - 1)
    y = (grid[..., 1] + 1.0) * 0.5 * (h - 1)
    if border:
        x = np.clip(x, 0.0, w - 1)
        y = np.clip(y, 0.0, h - 1)
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = x - x0
    fy = y - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    out = np.zeros((c,) + grid.shape[:2])
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            xi = x0 + dx
            yi = y0 + dy
            valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            wgt = np.where(valid, wx * wy, 0.0)
            vals = src[:, np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
            out += vals * wgt
    return out


if HAS_NUMBA:

    @njit(cache=True)
    def tps_eval_numba(coeffs, ctrl, points):
        m = points.shape[0]
        n = ctrl.shape[0]
        out = np.empty((m, 2))
        for i in range(m):
            px = points[i, 0]
            py = points[i, 1]
            ox = coeffs[n, 0] + coeffs[n + 1, 0] * px + coeffs[n + 2, 0] * py
            oy = coeffs[n, 1] + coeffs[n + 1, 1] * px + coeffs[n + 2, 1] * py
            for k in range(n):
                dx = px - ctrl[k, 0]
                dy = py - ctrl[k, 1]
                r2 = dx * dx + dy * dy
                if r2 > 0.0:
                    u = r2 * np.log(r2)
                    ox += coeffs[k, 0] * u
                    oy += coeffs[k, 1] * u
            out[i, 0] = ox
            out[i, 1] = oy
        return out

    @njit(cache=True)
    def bilinear_sample_numba(src, grid, border):
        c, h, w = src.shape
        ho, wo = grid.shape[0], grid.shape[1]
        out = np.zeros((c, ho, wo))
        for i in range(ho):
            for j in range(wo):
                x = (grid[i, j, 0] + 1.0) * 0.5 * (w - 1)
                y = (grid[i, j, 1] + 1.0) * 0.5 * (h - 1)
                if border:
                    x = min(max(x, 0.0), w - 1.0)
                    y = min(max(y, 0.0), h - 1.0)
                x0 = int(np.floor(x))
                y0 = int(np.floor(y))
                fx = x - x0
                fy = y - y0
                for dy in range(2):
                    yi = y0 + dy
                    if yi < 0 or yi >= h:
                        continue
                    wy = fy if dy else 1.0 - fy
                    for dx in range(2):
                        xi = x0 + dx
                        if xi < 0 or xi >= w:
                            continue
                        wgt = wy * (fx if dx else 1.0 - fx)
                        if wgt == 0.0:
                            continue
                        for ch in range(c):
                            out[ch, i, j] += wgt * src[ch, yi, xi]
        return out

    tps_eval = tps_eval_numba
    bilinear_sample = bilinear_sample_numba
else:
    tps_eval = tps_eval_numpy
    bilinear_sample = bilinear_sample_numpy

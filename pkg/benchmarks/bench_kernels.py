"""Time the numba kernels against their pure-numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--height 256 --width 192]

The first numba call compiles (or loads the on-disk cache); that cost is
reported separately and excluded from the steady-state timings.
"""
import argparse
import time

import numpy as np

from warptryon import _kernels
from warptryon.tps import default_lattice, normalized_mesh, theta_grid_np


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--width", type=int, default=192)
    args = p.parse_args(argv)

    if not _kernels.HAS_NUMBA:
        print("numba unavailable or disabled via WARPTRYON_DISABLE_NUMBA; nothing to compare")
        return 0

    rng = np.random.default_rng(0)
    lat = default_lattice()
    theta = lat.points.ravel() + rng.uniform(-0.2, 0.2, 50)
    coeffs = np.ascontiguousarray(lat.inverse @ np.vstack([theta.reshape(25, 2), np.zeros((3, 2))]))
    ctrl = np.ascontiguousarray(lat.points)
    points = np.ascontiguousarray(normalized_mesh(args.height, args.width).reshape(-1, 2))
    src = rng.uniform(-1, 1, size=(3, args.height, args.width))
    grid = theta_grid_np(theta, args.height, args.width)

    cases = {
        "tps_eval": (
            lambda: _kernels.tps_eval_numba(coeffs, ctrl, points),
            lambda: _kernels.tps_eval_numpy(coeffs, ctrl, points),
        ),
        "bilinear_sample": (
            lambda: _kernels.bilinear_sample_numba(src, grid, True),
            lambda: _kernels.bilinear_sample_numpy(src, grid, True),
        ),
    }
    print(f"{args.height}x{args.width}, best of {args.repeat}")
    print(f"{'kernel':<16} {'first numba':>12} {'numba':>10} {'numpy':>10} {'speedup':>8} {'max diff':>10}")
    for name, (fast, slow) in cases.items():
        t0 = time.perf_counter()
        a = fast()
        first = time.perf_counter() - t0
        diff = float(np.abs(a - slow()).max())
        tf, ts = best_of(fast, args.repeat), best_of(slow, args.repeat)
        print(f"{name:<16} {first * 1e3:10.1f}ms {tf * 1e3:8.2f}ms {ts * 1e3:8.2f}ms {ts / tf:7.1f}x {diff:10.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

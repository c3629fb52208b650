"""LPIPS-style perceptual distance over the shared frozen extractor."""
import json
from pathlib import Path

import numpy as np
import torch

from .errors import ContractViolation
from .imageio import read_image

NORM_EPS = 1e-10


def unit_normalize(f, eps=NORM_EPS):
    return f / (f.pow(2).sum(1, keepdim=True).sqrt() + eps)


class LpipsWeights:
    """Nonnegative per-channel weights, one vector per extractor stage."""

    def __init__(self, vectors):
        self.vectors = [torch.as_tensor(v, dtype=torch.float32).flatten() for v in vectors]
        for i, v in enumerate(self.vectors):
            if (v < 0).any():
                raise ContractViolation(f"LPIPS weights for stage {i} must be nonnegative")

    @classmethod
    def ones(cls, channels):
        return cls([torch.ones(c) for c in channels])

    @classmethod
    def load(cls, path):
        path = Path(path)
        if path.suffix == ".json":
            return cls(json.loads(path.read_text()))
        return cls(torch.load(path, map_location="cpu"))

    def check(self, channels):
        if tuple(len(v) for v in self.vectors) != tuple(channels):
            raise ContractViolation(
                f"LPIPS weight lengths {[len(v) for v in self.vectors]} do not match "
                f"extractor channels {list(channels)}"
            )


def lpips(a, b, extractor, weights=None):
    """Per-image distance for (B, 3, H, W) batches; a (3, H, W) pair gives a scalar."""
    if a.shape != b.shape:
        raise ContractViolation(f"image shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    single = a.dim() == 3
    if single:
        a, b = a.unsqueeze(0), b.unsqueeze(0)
    weights = weights or LpipsWeights.ones(extractor.channels)
    weights.check(extractor.channels)
    fa, fb = extractor(a), extractor(b)
    total = 0.0
    for xa, xb, w in zip(fa, fb, weights.vectors):
        diff = unit_normalize(xa) - unit_normalize(xb)
        diff = diff * w.to(diff).view(1, -1, 1, 1)
        total = total + diff.pow(2).sum(1).mean((1, 2))
    return total[0] if single else total


def lpips_directory(dir_a, dir_b, extractor, weights=None):
    """Score identically named PNG pairs of two directories.

    Returns a report dict with per-pair scores, mean, (population) std, count
    and a list of per-pair errors; erroneous pairs are skipped.
    """
    dir_a, dir_b = Path(dir_a), Path(dir_b)
    for d in (dir_a, dir_b):
        if not d.is_dir():
            raise FileNotFoundError(f"not a directory: {d}")
    names_a = {p.name for p in dir_a.glob("*.png")}
    names_b = {p.name for p in dir_b.glob("*.png")}
    scores, errors = {}, []
    for name in sorted(names_a | names_b):
        if name not in names_b or name not in names_a:
            where = dir_b if name not in names_b else dir_a
            errors.append({"name": name, "kind": "missing", "message": f"no counterpart in {where}"})
            continue
        ia, ib = read_image(dir_a / name), read_image(dir_b / name)
        if ia.shape != ib.shape:
            errors.append({"name": name, "kind": "shape", "message": f"{ia.shape} vs {ib.shape}"})
            continue
        with torch.no_grad():
            scores[name] = float(lpips(torch.from_numpy(ia), torch.from_numpy(ib), extractor, weights))
    vals = np.array(list(scores.values()), dtype=np.float64)
    return {
        "pairs": scores,
        "mean": float(vals.mean()) if len(vals) else None,
        "std": float(vals.std()) if len(vals) else None,
        "count": int(len(vals)),
        "errors": errors,
    }

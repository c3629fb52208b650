"""Scaled-down overfit experiment: train on a few synthetic triplets, then score.

Reports the training pixel L1, the matcher's control-point error against
the ground-truth warps, and held-out LPIPS of the trained model relative to
the untrained one.
"""
import json
import logging
import time
from dataclasses import replace

import numpy as np
import torch

from .config import TrainConfig
from .data import SyntheticDataset, collate, sample_triplet
from .metric import lpips
from .tps import default_lattice, identity_theta
from .train import Trainer, train

log = logging.getLogger(__name__)


def control_point_error(theta, true_theta, interior=False):
    """Mean Euclidean distance between predicted and true control points.

    ``interior=True`` averages over the inner 3x3 points only, the ones the
    synthetic garments cover.
    """
    d = (theta.reshape(len(theta), -1, 2) - true_theta.reshape(len(true_theta), -1, 2)).norm(dim=-1)
    if interior:
        inner = torch.from_numpy(np.abs(default_lattice().points).max(1) < 0.99)
        d = d[:, inner]
    return float(d.mean())


def evaluate(trainer, triplets, extractor=None):
    batch = collate(triplets)
    out, theta = trainer.infer(batch["agnostic"], batch["cloth"])
    extractor = extractor or trainer.extractor
    with torch.no_grad():
        scores = lpips(out, batch["person"], extractor)
    result = {
        "pixel_l1": float((out - batch["person"]).abs().mean()),
        "lpips": float(scores.mean()),
    }
    if "true_theta" in batch:
        result["theta_error"] = control_point_error(theta, batch["true_theta"])
        result["interior_theta_error"] = control_point_error(theta, batch["true_theta"], interior=True)
        result["identity_theta_error"] = control_point_error(
            identity_theta(len(theta)).to(theta.dtype), batch["true_theta"]
        )
    return result


def run(config: TrainConfig = None, holdout=16, callback=None):
    config = config or TrainConfig()
    train_set = SyntheticDataset(config.dataset_seed, config.dataset_size, (config.height, config.width),
                                 config.warp_magnitude)
    train_items = [train_set[i] for i in range(len(train_set))]
    held = [
        sample_triplet(config.dataset_seed, config.dataset_size + i, None, (config.height, config.width),
                       config.warp_magnitude)
        for i in range(holdout)
    ]
    untrained = Trainer(replace(config, iterations=0), dataset=train_set)
    before = {"train": evaluate(untrained, train_items), "heldout": evaluate(untrained, held)}
    t0 = time.time()
    trainer = train(config, dataset=train_set, callback=callback)
    elapsed = time.time() - t0
    after = {"train": evaluate(trainer, train_items), "heldout": evaluate(trainer, held)}
    report = {
        "iterations": trainer.step,
        "seconds": elapsed,
        "before": before,
        "after": after,
        "final_train_pixel_l1": after["train"]["pixel_l1"],
        "train_theta_error": after["train"]["theta_error"],
        "heldout_lpips_reduction": 1.0 - after["heldout"]["lpips"] / before["heldout"]["lpips"],
        "last_losses": trainer.history[-1] if trainer.history else None,
    }
    return trainer, report


if __name__ == "__main__":
    import sys

    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    cfg = TrainConfig.load(sys.argv[1]) if len(sys.argv) > 1 else TrainConfig()
    _, rep = run(cfg)
    print(json.dumps(rep, indent=1))

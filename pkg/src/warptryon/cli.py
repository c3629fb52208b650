"""Command line entry point.

Exit codes: 0 success, 1 contract violation, 2 I/O error, 3 divergence.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from .config import TrainConfig
from .errors import CheckpointError, ContractViolation, DivergenceError, WarpTryOnError

log = logging.getLogger("warptryon")

EXIT_OK, EXIT_CONTRACT, EXIT_IO, EXIT_DIVERGED = 0, 1, 2, 3

ABLATION_FLAGS = ("no_adv", "paired_adv", "no_e2e_warp", "box_mask")


def cmd_train(args):
    from .train import train

    cfg = TrainConfig.load(args.config) if args.config else TrainConfig()
    overrides = cfg.to_dict()
    for item in args.set or []:
        if "=" not in item:
            raise ContractViolation(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    for flag in ABLATION_FLAGS:
        if getattr(args, flag):
            overrides[flag] = True
    if args.out_dir:
        overrides["out_dir"] = args.out_dir
    cfg = TrainConfig.from_dict(overrides)
    trainer = train(cfg, resume=args.resume)
    print(json.dumps({"step": trainer.step, "checkpoint": str(Path(cfg.out_dir) / "final.pt"),
                      "last": trainer.history[-1] if trainer.history else None}))
    return EXIT_OK


def cmd_infer(args):
    from .data import MaskSpec, make_agnostic
    from .imageio import read_image, read_mask, write_image
    from .train import check_inference_inputs, load_for_inference

    trainer = load_for_inference(args.ckpt)
    person = read_image(args.person)
    cloth = read_image(args.cloth)
    labels = read_mask(args.mask)
    if person.shape != cloth.shape or labels.shape != person.shape[1:]:
        raise ContractViolation(
            f"person {person.shape}, cloth {cloth.shape} and mask {labels.shape} must share a resolution"
        )
    box = args.box_mask or trainer.config.box_mask
    agnostic, _ = make_agnostic(person, labels > 0, MaskSpec("bounding_box" if box else "parsing_like"))
    check_inference_inputs(trainer, agnostic)
    out, theta = trainer.infer(torch.from_numpy(agnostic), torch.from_numpy(cloth))
    write_image(args.out, out.numpy())
    if args.theta_out:
        Path(args.theta_out).write_text(json.dumps([float(v) for v in theta]))
    return EXIT_OK


def _extractor(args):
    from .objectives import PerceptualExtractor

    if getattr(args, "ckpt", None):
        from .checkpoint import load_checkpoint

        state = load_checkpoint(args.ckpt)["perceptual_extractor"]
        if state is None:
            raise ContractViolation("checkpoint carries no rebuildable perceptual extractor")
        return PerceptualExtractor.from_state(state)
    if getattr(args, "extractor", None):
        return PerceptualExtractor.load(args.extractor)
    return PerceptualExtractor.from_seed(args.extractor_seed)


def cmd_eval_lpips(args):
    from .metric import LpipsWeights, lpips_directory

    weights = LpipsWeights.load(args.weights) if args.weights else None
    report = lpips_directory(args.dir_a, args.dir_b, _extractor(args), weights)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(report, indent=2))
    print(json.dumps({k: report[k] for k in ("mean", "std", "count")}))
    kinds = {e["kind"] for e in report["errors"]}
    for e in report["errors"]:
        print(f"error: {e['name']}: {e['message']}", file=sys.stderr)
    if "missing" in kinds:
        return EXIT_IO
    if kinds:
        return EXIT_CONTRACT
    return EXIT_OK


def cmd_gen_data(args):
    from .data import SyntheticDataset, export_dataset

    ds = SyntheticDataset(args.seed, args.count, (args.height, args.width), args.warp_magnitude)
    manifest = export_dataset(ds, args.out)
    print(json.dumps({"manifest": str(manifest), "count": args.count}))
    return EXIT_OK


def read_theta_file(path):
    text = Path(path).read_text().strip()
    try:
        values = json.loads(text)
    except json.JSONDecodeError:
        values = [float(v) for v in text.replace(",", " ").split()]
    theta = np.asarray(values, dtype=np.float64).ravel()
    if theta.shape != (50,) or not np.isfinite(theta).all():
        raise ContractViolation(f"theta file must hold 50 finite numbers, got {theta.shape[0]}")
    return theta


def checkerboard(height, width, cells=8):
    ys, xs = np.mgrid[0:height, 0:width]
    board = ((ys * cells // height) + (xs * cells // width)) % 2
    img = np.where(board[None] == 0, -1.0, 1.0) * np.ones((3, 1, 1))
    img[0] = np.where(board == 0, 0.6, 1.0)
    return img.astype(np.float32)


def cmd_warp_demo(args):
    from .imageio import write_image
    from .tps import warp_image_np

    theta = read_theta_file(args.theta_file)
    board = checkerboard(args.height, args.width, args.cells)
    write_image(args.out, warp_image_np(theta, board, args.pad_mode))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="warptryon", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train matcher, generator and discriminator")
    t.add_argument("--config", help="key = value config file (defaults used when omitted)")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--out-dir")
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    t.add_argument("--no-adv", dest="no_adv", action="store_true")
    t.add_argument("--paired-adv", dest="paired_adv", action="store_true")
    t.add_argument("--no-e2e-warp", dest="no_e2e_warp", action="store_true")
    t.add_argument("--box-mask", dest="box_mask", action="store_true")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="dress a person in a cloth with a trained checkpoint")
    i.add_argument("--ckpt", required=True)
    i.add_argument("--person", required=True)
    i.add_argument("--mask", required=True, help="label PNG; nonzero pixels are masked")
    i.add_argument("--cloth", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--theta-out", help="optional JSON file for the predicted theta")
    i.add_argument("--box-mask", action="store_true")
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval-lpips", help="LPIPS between identically named PNGs of two directories")
    e.add_argument("--dir-a", required=True)
    e.add_argument("--dir-b", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--ckpt", help="take the perceptual extractor from this checkpoint")
    e.add_argument("--extractor", help="saved extractor file")
    e.add_argument("--extractor-seed", type=int, default=0)
    e.add_argument("--weights", help="per-channel LPIPS weights (.json or torch file)")
    e.set_defaults(func=cmd_eval_lpips)

    g = sub.add_parser("gen-data", help="export a synthetic dataset in manifest layout")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int, default=16)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--height", type=int, default=64)
    g.add_argument("--width", type=int, default=64)
    g.add_argument("--warp-magnitude", type=float, default=0.3)
    g.set_defaults(func=cmd_gen_data)

    w = sub.add_parser("warp-demo", help="render a checkerboard warped by a theta file")
    w.add_argument("--theta-file", required=True)
    w.add_argument("--out", required=True)
    w.add_argument("--height", type=int, default=256)
    w.add_argument("--width", type=int, default=192)
    w.add_argument("--cells", type=int, default=8)
    w.add_argument("--pad-mode", choices=("border", "zeros"), default="zeros")
    w.set_defaults(func=cmd_warp_demo)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose or args.command == "train" else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ContractViolation as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except (OSError, CheckpointError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except WarpTryOnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())

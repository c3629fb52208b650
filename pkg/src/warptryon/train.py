"""Paired / unpaired training loop, checkpointing and inference."""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .adversary import PatchDiscriminator, gradient_penalty, relativistic_d_loss, relativistic_g_loss
from .checkpoint import load_checkpoint, save_checkpoint
from .config import TrainConfig
from .data import ListDataset, MaskSpec, SyntheticDataset, collate, ingest_real
from .errors import ContractViolation, DivergenceError
from .matcher import GeometricMatcher
from .objectives import LossWeights, PerceptualExtractor, perceptual_loss, pixel_l1, total_loss, warp_loss
from .unet import WarpingUNet

log = logging.getLogger(__name__)


@dataclass
class LossBreakdown:
    """Itemized losses of one step (or one iteration) as python floats.

    ``total`` is the weighted sum of the generator-side terms present.
    ``adv`` is None when no adversarial term was computed.
    """

    warp: Optional[float] = None
    perceptual: Optional[float] = None
    l1: Optional[float] = None
    adv: Optional[float] = None
    total: float = 0.0
    d_loss: Optional[float] = None
    gp: Optional[float] = None

    def terms(self):
        return {k: getattr(self, k) for k in ("warp", "perceptual", "l1", "adv") if getattr(self, k) is not None}

    def merge(self, other, weights):
        out = LossBreakdown(**{k: getattr(self, k) for k in self.__dataclass_fields__})
        for k in ("warp", "perceptual", "l1", "adv", "d_loss", "gp"):
            if getattr(other, k) is not None:
                setattr(out, k, getattr(other, k))
        out.total = float(total_loss(out.terms(), weights))
        return out

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _set_grad(module, flag):
    for p in module.parameters():
        p.requires_grad_(flag)


def build_dataset(config):
    mask_spec = MaskSpec("bounding_box" if config.box_mask else "parsing_like")
    if config.data_source == "synthetic":
        return SyntheticDataset(
            config.dataset_seed, config.dataset_size, (config.height, config.width),
            config.warp_magnitude, mask_spec,
        )
    return ListDataset(ingest_real(config.manifest, (config.height, config.width), mask_spec))


class Trainer:
    """Owns all networks and optimizers; single writer over model state."""

    def __init__(self, config: TrainConfig, dataset=None):
        self.config = config
        torch.set_num_threads(config.threads)
        torch.manual_seed(config.seed)
        size = (config.height, config.width)
        self.matcher = GeometricMatcher(size)
        self.generator = WarpingUNet(feature_pad_mode=config.feature_pad_mode)
        self.discriminator = PatchDiscriminator()
        if config.extractor_path:
            self.extractor = PerceptualExtractor.load(config.extractor_path)
        else:
            self.extractor = PerceptualExtractor.from_seed(config.extractor_seed)
        self.weights = LossWeights(config.lambda_w, config.lambda_p, config.lambda_l1, config.lambda_adv)
        betas = (config.beta1, config.beta2)
        self.opt_g = torch.optim.Adam(
            list(self.matcher.parameters()) + list(self.generator.parameters()), lr=config.lr, betas=betas, fused=True
        )
        self.opt_d = torch.optim.Adam(self.discriminator.parameters(), lr=config.lr, betas=betas, fused=True)
        self.step = 0
        self.counters = {"d_updates": 0, "g_updates": 0}
        self.history = []
        self.dataset = dataset if dataset is not None else build_dataset(config)

    # batches

    def batch_indices(self, step, tag):
        n = len(self.dataset)
        rng = np.random.default_rng(np.random.SeedSequence([self.config.seed, step, tag]))
        k = self.config.batch_size
        if k <= n:
            return rng.permutation(n)[:k].tolist()
        return rng.integers(0, n, size=k).tolist()

    def batch(self, step, tag):
        return collate([self.dataset[i] for i in self.batch_indices(step, tag)])

    def _gp_generator(self, step):
        return torch.Generator().manual_seed(int(np.random.SeedSequence([self.config.seed, step, 99]).generate_state(1)[0]))

    # steps

    def _train_mode(self):
        self.matcher.train()
        self.generator.train()
        self.discriminator.train()

    def _theta_for_images(self, theta):
        return theta.detach() if self.config.no_e2e_warp else theta

    def _update_discriminator(self, real, fake, step):
        cfg = self.config
        _set_grad(self.discriminator, True)
        self.opt_d.zero_grad(set_to_none=True)
        d_loss = relativistic_d_loss(self.discriminator(real), self.discriminator(fake.detach()), cfg.adv_variant)
        gp = gradient_penalty(self.discriminator, real, fake, self._gp_generator(step))
        loss = d_loss + cfg.gp_weight * gp
        for name, v in (("d_loss", d_loss), ("gp", gp)):
            if not torch.isfinite(v):
                raise DivergenceError(name, float(v))
        loss.backward()
        self.opt_d.step()
        self.counters["d_updates"] += 1
        return float(d_loss.detach()), float(gp.detach())

    def _adv_term(self, real, fake):
        _set_grad(self.discriminator, False)
        try:
            with torch.no_grad():
                real_scores = self.discriminator(real)
            return relativistic_g_loss(real_scores, self.discriminator(fake), self.config.adv_variant)
        finally:
            _set_grad(self.discriminator, True)

    def train_step_paired(self, batch, step=None):
        """Reconstruction step on (agnostic, cloth) with the person as ground truth."""
        cfg = self.config
        step = self.step if step is None else step
        self._train_mode()
        ap, cloth, person = batch["agnostic"], batch["cloth"], batch["person"]
        theta = self.matcher(cloth, ap)
        out = self.generator(ap, cloth, self._theta_for_images(theta))
        parts = {
            "warp": warp_loss(theta, cloth, batch["worn_cloth"], cfg.cloth_pad_mode),
            "perceptual": perceptual_loss(out, person, self.extractor),
            "l1": pixel_l1(out, person),
        }
        d_loss = gp = None
        if cfg.paired_adv and not cfg.no_adv:
            d_loss, gp = self._update_discriminator(person, out, step)
            parts["adv"] = self._adv_term(person, out)
        total = total_loss(parts, self.weights)
        self.opt_g.zero_grad(set_to_none=True)
        total.backward()
        self.opt_g.step()
        self.counters["g_updates"] += 1
        return LossBreakdown(**{k: float(v.detach()) for k, v in parts.items()}, total=float(total.detach()), d_loss=d_loss, gp=gp)

    def train_step_unpaired(self, batch, step=None):
        """Adversarial step fitting the alternative cloth on the same agnostic person.

        One discriminator update, then one matcher+generator update.
        """
        step = self.step if step is None else step
        self._train_mode()
        ap, alt, person = batch["agnostic"], batch["alt_cloth"], batch["person"]
        theta = self.matcher(alt, ap)
        fake = self.generator(ap, alt, self._theta_for_images(theta))
        d_loss, gp = self._update_discriminator(person, fake, step)
        adv = self._adv_term(person, fake)
        total = total_loss({"adv": adv}, self.weights)
        self.opt_g.zero_grad(set_to_none=True)
        total.backward()
        self.opt_g.step()
        self.counters["g_updates"] += 1
        return LossBreakdown(adv=float(adv.detach()), total=float(total.detach()), d_loss=d_loss, gp=gp)

    def iteration(self):
        cfg = self.config
        step = self.step
        result = self.train_step_paired(self.batch(step, 0), step)
        if not (cfg.no_adv or cfg.paired_adv):
            result = result.merge(self.train_step_unpaired(self.batch(step, 1), step), self.weights)
        self.step += 1
        self.history.append(result.as_dict())
        return result

    # persistence

    def sections(self):
        return {
            "matcher": self.matcher.state_dict(),
            "generator": self.generator.state_dict(),
            "discriminator": self.discriminator.state_dict(),
            "perceptual_extractor": self.extractor.state() if self.extractor.kind == "seeded" else None,
            "optimizer_state": {"generator": self.opt_g.state_dict(), "discriminator": self.opt_d.state_dict()},
            "step": self.step,
            "config_snapshot": self.config.to_dict(),
            "counters": dict(self.counters),
        }

    def save(self, path):
        return save_checkpoint(path, self.sections())

    def load_state(self, payload):
        self.matcher.load_state_dict(payload["matcher"])
        self.generator.load_state_dict(payload["generator"])
        self.discriminator.load_state_dict(payload["discriminator"])
        if payload.get("perceptual_extractor") is not None:
            self.extractor = PerceptualExtractor.from_state(payload["perceptual_extractor"])
        opt = payload["optimizer_state"]
        self.opt_g.load_state_dict(opt["generator"])
        self.opt_d.load_state_dict(opt["discriminator"])
        self.step = int(payload["step"])
        self.counters = dict(payload.get("counters", self.counters))
        return self

    @classmethod
    def from_checkpoint(cls, path, dataset=None, **overrides):
        payload = load_checkpoint(path)
        snap = dict(payload["config_snapshot"])
        snap.update(overrides)
        config = TrainConfig.from_dict(snap)
        return cls(config, dataset=dataset).load_state(payload)

    # inference

    @torch.no_grad()
    def infer(self, agnostic, cloth):
        """p = G(ap, c, match(c, ap)) with networks in eval mode."""
        single = agnostic.dim() == 3
        if single:
            agnostic, cloth = agnostic.unsqueeze(0), cloth.unsqueeze(0)
        self.matcher.eval()
        self.generator.eval()
        theta = self.matcher(cloth, agnostic)
        out = self.generator(agnostic, cloth, theta)
        return (out[0], theta[0]) if single else (out, theta)


def train(config: TrainConfig, dataset=None, resume=None, callback=None):
    """Run ``config.iterations`` iterations; returns the trainer after saving ``final.pt``.

    On divergence the latest periodic checkpoint is kept and the error re-raised.
    """
    if resume:
        trainer = Trainer.from_checkpoint(resume, dataset=dataset, iterations=config.iterations,
                                          out_dir=config.out_dir)
    else:
        trainer = Trainer(config, dataset)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(trainer.config.dumps())
    with open(out / "losses.jsonl", "a") as fh:
        while trainer.step < config.iterations:
            result = trainer.iteration()
            fh.write(json.dumps({"step": trainer.step, **result.as_dict()}) + "\n")
            if config.log_interval and trainer.step % config.log_interval == 0:
                log.info("step %d %s", trainer.step,
                         " ".join(f"{k}={v:.4f}" for k, v in result.as_dict().items() if v is not None))
            if callback is not None:
                callback(trainer, result)
            if config.checkpoint_interval and trainer.step % config.checkpoint_interval == 0:
                trainer.save(out / "last.pt")
    trainer.save(out / "final.pt")
    return trainer


def load_for_inference(path):
    payload = load_checkpoint(path)
    config = TrainConfig.from_dict(payload["config_snapshot"])
    trainer = Trainer(config, dataset=[])
    return trainer.load_state(payload)


def check_inference_inputs(trainer, image):
    size = (trainer.config.height, trainer.config.width)
    if tuple(image.shape[-2:]) != size:
        raise ContractViolation(f"checkpoint expects {size} images, got {tuple(image.shape[-2:])}")

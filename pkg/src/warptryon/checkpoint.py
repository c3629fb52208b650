"""Unified checkpoint: one torch-serialized dict with named sections."""
from pathlib import Path

import torch

from .errors import CheckpointError

FORMAT = "warptryon-checkpoint"
FORMAT_VERSION = 1
SECTIONS = (
    "matcher", "generator", "discriminator", "perceptual_extractor",
    "optimizer_state", "step", "config_snapshot",
)
OPTIONAL_SECTIONS = ("counters",)


def save_checkpoint(path, sections):
    missing = [s for s in SECTIONS if s not in sections]
    if missing:
        raise CheckpointError(f"checkpoint sections missing: {missing}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"format": FORMAT, "format_version": FORMAT_VERSION}
    payload.update({s: sections[s] for s in SECTIONS})
    payload.update({s: sections[s] for s in OPTIONAL_SECTIONS if s in sections})
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)
    return path


def load_checkpoint(path):
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not a {FORMAT} file")
    if payload.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint version {payload.get('format_version')} != supported {FORMAT_VERSION}"
        )
    return payload

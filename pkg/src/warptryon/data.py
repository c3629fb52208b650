"""Synthetic paired try-on data with known TPS warps, plus real-data ingestion.

Images are float32 (3, H, W) arrays in [-1, 1]; masks are bool (H, W).
Cloth images and isolated worn cloth use white (1.0) as background.
"""
import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .errors import ContractViolation, ManifestError
from .imageio import read_image, read_mask, write_image, write_mask
from .tps import default_lattice, normalized_mesh, warp_image_np

PATTERNS = ("stripes", "checks", "logo", "solid")
DEFAULT_SIZE = (64, 64)
MAX_WARP = 0.3
BACKGROUND = 1.0
GARMENT_LABEL = 255
OTHER_MASK_LABEL = 128


@dataclass(frozen=True)
class MaskSpec:
    mode: str = "parsing_like"  # or "bounding_box"
    fill: float = 0.0

    def __post_init__(self):
        if self.mode not in ("parsing_like", "bounding_box"):
            raise ContractViolation(f"unknown mask mode {self.mode!r}")


@dataclass
class TryOnTriplet:
    person: np.ndarray
    cloth: np.ndarray
    worn_cloth: np.ndarray
    agnostic: np.ndarray
    alt_cloth: np.ndarray
    mask: np.ndarray
    true_theta: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)


def _rng(*keys):
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def _garment_color(rng):
    # kept away from white so the silhouette stays recoverable
    return rng.uniform(-0.9, 0.6, size=3)


def _tee_silhouette(xs, ys, rng):
    ax = np.abs(xs)
    torso_w = rng.uniform(0.42, 0.55)
    sleeve_end = rng.uniform(0.78, 0.92)
    top, bottom = -0.7, rng.uniform(0.75, 0.9)
    torso = (ax <= torso_w) & (ys >= top) & (ys <= bottom)
    slope = 0.8
    s_top = top + slope * (ax - torso_w)
    sleeves = (ax > torso_w) & (ax <= sleeve_end) & (ys >= s_top) & (ys <= s_top + 0.45)
    neck = (xs ** 2 + ((ys - top) / 0.8) ** 2) <= 0.17 ** 2
    return (torso | sleeves) & ~neck


def generate_cloth(pattern, seed, size=DEFAULT_SIZE):
    """Flat garment with the given pattern on a white background."""
    if pattern not in PATTERNS:
        raise ContractViolation(f"unknown pattern {pattern!r}; expected one of {PATTERNS}")
    h, w = size
    mesh = normalized_mesh(h, w)
    xs, ys = mesh[..., 0], mesh[..., 1]
    rng = _rng(seed, PATTERNS.index(pattern))
    sil = _tee_silhouette(xs, ys, rng)
    c1 = _garment_color(rng)
    c2 = _garment_color(rng)
    while np.abs(c1 - c2).max() < 0.5:
        c2 = _garment_color(rng)
    if pattern == "solid":
        sel = np.ones_like(xs, dtype=bool)
    elif pattern == "stripes":
        angle = rng.choice([0.0, np.pi / 2]) + rng.uniform(-0.3, 0.3)
        period = rng.uniform(0.2, 0.4)
        phase = rng.uniform(0, 2 * np.pi)
        u = xs * np.sin(angle) + ys * np.cos(angle)
        sel = np.sin(2 * np.pi * u / period + phase) >= 0
    elif pattern == "checks":
        cell = rng.uniform(0.2, 0.4)
        off = rng.uniform(0, cell, size=2)
        sel = (np.floor((xs + off[0]) / cell) + np.floor((ys + off[1]) / cell)) % 2 == 0
    else:
        cx, cy = rng.uniform(-0.1, 0.1), rng.uniform(-0.3, 0.0)
        r = rng.uniform(0.15, 0.3)
        shape = rng.integers(3)
        if shape == 0:
            logo = (xs - cx) ** 2 + (ys - cy) ** 2 <= r ** 2
        elif shape == 1:
            logo = (np.abs(xs - cx) <= r) & (np.abs(ys - cy) <= r * 0.7)
        else:
            logo = (ys - cy <= r) & (np.abs(xs - cx) <= (ys - cy + r) * 0.6)
        sel = ~logo
    img = np.where(sel[None], c1[:, None, None], c2[:, None, None])
    img = np.where(sil[None], img, BACKGROUND)
    return img.astype(np.float32)


def cloth_silhouette(cloth):
    return (np.asarray(cloth) < BACKGROUND - 1e-3).any(0)


def sample_warp(rng, magnitude):
    """Smooth random theta: affine part plus low-amplitude local jitter.

    Only the inner 3x3 control points move; the outer ring stays on the
    lattice because it lies outside every garment and would be unobservable.
    Every control point moves at most ``magnitude`` (Euclidean, normalized units).
    """
    pts = default_lattice().points
    if magnitude == 0:
        return pts.ravel().astype(np.float64)
    scale = 1 + rng.uniform(-0.25, 0.25, size=2)
    rot = rng.uniform(-0.25, 0.25)
    shear = rng.uniform(-0.15, 0.15)
    lin = np.array([[np.cos(rot), -np.sin(rot)], [np.sin(rot), np.cos(rot)]]) @ np.array(
        [[scale[0], shear], [0.0, scale[1]]]
    )
    shift = rng.uniform(-0.5, 0.5, size=2)
    local = rng.normal(0, 0.1, size=pts.shape)
    disp = pts @ lin.T + shift - pts + local
    disp[np.abs(pts).max(1) > 0.99] = 0.0
    peak = np.linalg.norm(disp, axis=1).max()
    disp *= magnitude * rng.uniform(0.85, 1.0) / peak
    return (pts + disp).ravel()


def _body(rng, size):
    h, w = size
    mesh = normalized_mesh(h, w)
    xs, ys = mesh[..., 0], mesh[..., 1]
    bg = rng.uniform(-0.6, 0.7, size=3)
    img = np.broadcast_to(bg[:, None, None], (3, h, w)) + 0.15 * ys[None]
    skin = np.array([0.7, 0.3, 0.0]) + rng.uniform(-0.3, 0.2) + rng.uniform(-0.08, 0.08, size=3)
    torso_w = rng.uniform(0.4, 0.5)
    head = xs ** 2 + ((ys + 0.82) / 1.2) ** 2 <= rng.uniform(0.15, 0.19) ** 2
    neck = (np.abs(xs) <= 0.09) & (ys >= -0.8) & (ys <= -0.55)
    torso = (np.abs(xs) <= torso_w) & (ys >= -0.6)
    ax = np.abs(xs)
    arm_x = torso_w + 0.05 + 0.12 * (ys + 0.55)
    arms = (ax >= arm_x) & (ax <= arm_x + 0.17) & (ys >= -0.55) & (ys <= 0.7)
    skin_mask = head | neck | torso | arms
    img = np.where(skin_mask[None], skin[:, None, None], img)
    return np.clip(img, -1, 1), arms, neck


def _render(cloth, body_seed, warp_magnitude):
    if not 0 <= warp_magnitude <= MAX_WARP:
        raise ContractViolation(f"warp_magnitude must lie in [0, {MAX_WARP}], got {warp_magnitude}")
    cloth = np.asarray(cloth, dtype=np.float32)
    size = cloth.shape[1:]
    rng = _rng(body_seed, 7919)
    theta = sample_warp(rng, warp_magnitude)
    body, arms, neck = _body(rng, size)
    worn = warp_image_np(theta, cloth, "border")
    alpha = warp_image_np(theta, cloth_silhouette(cloth)[None].astype(np.float64), "border")[0]
    region = alpha >= 0.5
    person = np.where(region[None], worn, body)
    return {
        "person": person.astype(np.float32),
        "theta": theta.astype(np.float32),
        "region": region,
        "arms": arms & ~region,
        "neck": neck,
    }


def synthesize_person(cloth, body_seed, warp_magnitude=0.3):
    """Render a person wearing ``cloth`` warped by a random smooth TPS.

    Returns (person image, ground-truth theta).
    """
    r = _render(cloth, body_seed, warp_magnitude)
    return r["person"], r["theta"]


def neck_box(size):
    """Fixed box around the synthetic neck point."""
    mesh = normalized_mesh(*size)
    return (np.abs(mesh[..., 0]) <= 0.2) & (mesh[..., 1] >= -0.72) & (mesh[..., 1] <= -0.45)


def bounding_box(mask):
    box = np.zeros_like(mask, dtype=bool)
    if mask.any():
        rows = np.flatnonzero(mask.any(1))
        cols = np.flatnonzero(mask.any(0))
        box[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1] = True
    return box


def make_agnostic(person, region, spec=MaskSpec()):
    """Hide ``region`` (bool H x W upper-body parsing) of ``person``.

    In bounding_box mode the region is replaced by its axis-aligned bounding
    rectangle.  Returns (agnostic image, mask actually applied).
    """
    region = np.asarray(region, dtype=bool)
    if region.shape != person.shape[1:]:
        raise ContractViolation(f"mask {region.shape} does not match image {person.shape[1:]}")
    mask = bounding_box(region) if spec.mode == "bounding_box" else region
    ap = np.where(mask[None], np.float32(spec.fill), person).astype(np.float32)
    return ap, mask


def isolate_cloth(person, garment):
    return np.where(garment[None], person, np.float32(BACKGROUND)).astype(np.float32)


def sample_triplet(dataset_seed, index, count=None, size=DEFAULT_SIZE, warp_magnitude=0.3,
                   mask_spec=MaskSpec()):
    if index < 0 or (count is not None and index >= count):
        raise IndexError(f"index {index} outside dataset of size {count}")
    rng = _rng(dataset_seed, index)
    pa = PATTERNS[rng.integers(len(PATTERNS))]
    others = [p for p in PATTERNS if p != pa]
    pb = others[rng.integers(len(others))]
    seed_a, seed_b, body_seed = (int(s) for s in rng.integers(0, 2 ** 31, size=3))
    cloth = generate_cloth(pa, seed_a, size)
    alt = generate_cloth(pb, seed_b, size)
    r = _render(cloth, body_seed, warp_magnitude)
    parsing = r["region"] | r["arms"] | neck_box(size)
    agnostic, mask = make_agnostic(r["person"], parsing, mask_spec)
    return TryOnTriplet(
        person=r["person"],
        cloth=cloth,
        worn_cloth=isolate_cloth(r["person"], r["region"]),
        agnostic=agnostic,
        alt_cloth=alt,
        mask=mask,
        true_theta=r["theta"],
        meta={"index": index, "pattern": pa, "alt_pattern": pb, "garment": r["region"],
              "parsing": parsing},
    )


class SyntheticDataset:
    """Fixed-size, index-addressable synthetic dataset (each item is pure in its index)."""

    def __init__(self, seed=0, count=16, size=DEFAULT_SIZE, warp_magnitude=0.3, mask_spec=MaskSpec()):
        self.seed, self.count, self.size = seed, count, tuple(size)
        self.warp_magnitude, self.mask_spec = warp_magnitude, mask_spec
        self._cache = {}

    def __len__(self):
        return self.count

    def __getitem__(self, index):
        if index not in self._cache:
            self._cache[index] = sample_triplet(
                self.seed, index, self.count, self.size, self.warp_magnitude, self.mask_spec
            )
        return self._cache[index]


class ListDataset:
    def __init__(self, triplets):
        self.triplets = list(triplets)
        if not self.triplets:
            raise ContractViolation("dataset is empty")
        self.size = tuple(self.triplets[0].person.shape[1:])

    def __len__(self):
        return len(self.triplets)

    def __getitem__(self, index):
        return self.triplets[index]


def collate(triplets):
    """Stack a list of triplets into a dict of (B, ...) float tensors."""
    out = {}
    for key in ("person", "cloth", "worn_cloth", "agnostic", "alt_cloth"):
        out[key] = torch.from_numpy(np.stack([getattr(t, key) for t in triplets]))
    out["mask"] = torch.from_numpy(np.stack([t.mask for t in triplets]))
    if all(t.true_theta is not None for t in triplets):
        out["true_theta"] = torch.from_numpy(np.stack([t.true_theta for t in triplets]))
    return out


# real data: manifest of person / cloth / parsing-mask paths

MANIFEST_FIELDS = ("person", "cloth", "mask", "view")


def _load_row(base, lineno, row, size):
    paths = {}
    for key in ("person", "cloth", "mask"):
        p = Path(row[key].strip())
        paths[key] = p if p.is_absolute() else base / p
        if not paths[key].is_file():
            raise FileNotFoundError(f"manifest line {lineno}: missing {key} file {paths[key]}")
    person = read_image(paths["person"])
    cloth = read_image(paths["cloth"])
    labels = read_mask(paths["mask"])
    shapes = {person.shape[1:], cloth.shape[1:], labels.shape}
    if len(shapes) != 1 or (size is not None and person.shape[1:] != tuple(size)):
        raise ManifestError(lineno, f"resolution mismatch {sorted(shapes)} (expected {size})")
    return person, cloth, labels


def read_manifest(manifest):
    """Parse and validate the manifest; returns [(line number, row dict)]."""
    manifest = Path(manifest)
    with open(manifest, newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].strip():
        return []
    header = [h.strip() for h in lines[0].split(",")]
    if tuple(header[:4]) != MANIFEST_FIELDS:
        raise ManifestError(1, f"header must start with {','.join(MANIFEST_FIELDS)}, got {lines[0]!r}")
    rows = []
    for lineno, values in enumerate(csv.reader(lines[1:]), start=2):
        if not values or not "".join(values).strip():
            continue
        if len(values) != len(header) or any(not v.strip() for v in values[:4]):
            raise ManifestError(lineno, f"expected {len(header)} non-empty fields, got {values!r}")
        row = dict(zip(header, values))
        if row["view"].strip() not in ("front", "back"):
            raise ManifestError(lineno, f"view must be 'front' or 'back', got {row['view']!r}")
        rows.append((lineno, row))
    return rows


def ingest_real(manifest, size=None, mask_spec=MaskSpec()):
    """Yield triplets from a manifest; back views are skipped, true_theta is None.

    Mask label images: 0 keeps a pixel, 255 marks the upper-body garment, any
    other nonzero value marks further masked parts (arms, neck).  The
    alternative cloth of each row is the cloth of the next kept row.
    """
    base = Path(manifest).parent
    rows = [(n, r) for n, r in read_manifest(manifest) if r["view"].strip() == "front"]
    for i, (lineno, row) in enumerate(rows):
        person, cloth, labels = _load_row(base, lineno, row, size)
        alt_line, alt_row = rows[(i + 1) % len(rows)]
        _, alt_cloth, _ = _load_row(base, alt_line, alt_row, person.shape[1:])
        garment = labels == GARMENT_LABEL
        agnostic, mask = make_agnostic(person, labels > 0, mask_spec)
        yield TryOnTriplet(
            person=person, cloth=cloth, worn_cloth=isolate_cloth(person, garment),
            agnostic=agnostic, alt_cloth=alt_cloth, mask=mask,
            meta={"line": lineno, "garment": garment},
        )


def export_dataset(dataset, out_dir):
    """Write a dataset in manifest layout: person/, cloth/, mask/ PNGs and manifest.csv.

    Ground-truth thetas, when present, go to thetas.json keyed by file name.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    thetas = {}
    with open(out / "manifest.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_FIELDS)
        for i in range(len(dataset)):
            t = dataset[i]
            name = f"{i:05d}.png"
            write_image(out / "person" / name, t.person)
            write_image(out / "cloth" / name, t.cloth)
            labels = np.zeros(t.mask.shape, dtype=np.uint8)
            labels[t.meta.get("parsing", t.mask)] = OTHER_MASK_LABEL
            labels[t.meta["garment"]] = GARMENT_LABEL
            write_mask(out / "mask" / name, labels)
            writer.writerow([f"person/{name}", f"cloth/{name}", f"mask/{name}", "front"])
            if t.true_theta is not None:
                thetas[name] = [float(v) for v in t.true_theta]
    if thetas:
        (out / "thetas.json").write_text(json.dumps(thetas, indent=1))
    return out / "manifest.csv"

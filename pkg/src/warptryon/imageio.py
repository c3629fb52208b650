"""PNG exchange: on disk 8-bit [0, 255], in memory float32 (C, H, W) in [-1, 1]."""
from pathlib import Path

import numpy as np
from PIL import Image


def to_uint8(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        img = img.transpose(1, 2, 0)
    return np.clip(np.round((img + 1.0) * 127.5), 0, 255).astype(np.uint8)


def from_uint8(arr):
    arr = np.asarray(arr, dtype=np.float32) / 127.5 - 1.0
    if arr.ndim == 3:
        arr = arr.transpose(2, 0, 1)
    return np.ascontiguousarray(arr)


def read_image(path):
    with Image.open(path) as im:
        return from_uint8(np.asarray(im.convert("RGB")))


def write_image(path, img):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(img)).save(path)


def read_mask(path):
    """Grayscale label image as uint8 (H, W)."""
    with Image.open(path) as im:
        return np.asarray(im.convert("L"))


def write_mask(path, labels):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(labels, dtype=np.uint8), mode="L").save(path)

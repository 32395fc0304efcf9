"""Lossless 8-bit image I/O (PNG and binary PGM/PPM) and grayscale conversion."""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from .validation import check_image

LOSSLESS_SUFFIXES = (".png", ".pgm", ".ppm")


def load_image(path):
    """Load an 8-bit grayscale or RGB image as a uint8 array.

    Palette images are expanded to RGB (losslessly); 16-bit or alpha-carrying
    inputs are rejected rather than coerced.
    """
    with Image.open(path) as im:
        mode = im.mode
        if mode == "P":
            im = im.convert("RGB")
            mode = "RGB"
        if mode == "L":
            return np.asarray(im, dtype=np.uint8)
        if mode == "RGB":
            return np.asarray(im, dtype=np.uint8)
        if mode in ("1", "I", "I;16", "I;16B", "I;16L", "F"):
            raise ValueError(f"unsupported bit depth: {path} has mode {mode}, expected 8-bit")
        raise ValueError(
            f"unsupported channel count: {path} has mode {mode}, expected L or RGB"
        )


def save_image(img, path):
    """Write an image losslessly; only PNG and binary PGM/PPM are allowed."""
    arr = check_image(img)
    suffix = os.path.splitext(str(path))[1].lower()
    if suffix not in LOSSLESS_SUFFIXES:
        raise ValueError(
            f"refusing to write {suffix or 'extensionless'} output; "
            f"use one of {LOSSLESS_SUFFIXES} (lossy formats would corrupt ciphertext)"
        )
    if suffix == ".pgm" and arr.ndim != 2:
        raise ValueError("PGM holds a single channel; use .ppm or .png for color")
    if suffix == ".ppm" and arr.ndim != 3:
        raise ValueError("PPM holds three channels; use .pgm or .png for grayscale")
    Image.fromarray(arr).save(path)


def to_grayscale(img):
    """Integer-weighted luma conversion: round(0.299 R + 0.587 G + 0.114 B)."""
    arr = check_image(img)
    if arr.ndim == 2:
        return arr
    luma = 0.299 * arr[:, :, 0] + 0.587 * arr[:, :, 1] + 0.114 * arr[:, :, 2]
    return np.floor(luma + 0.5).astype(np.uint8)

"""Export pretrained features from plain and selectively encrypted images.

Inputs follow the ``{stem}.s{level}.{png|ppm|pgm}`` convention produced by the
primary pipeline's encrypt command; level 0 is the plain image (encrypting
zero bit-planes is the identity). For each input the exporter isolates the
clear part of the pixels (low bits kept in place or shifted to the top of the
byte), feeds it to the selected model, and writes
``{stem}.s{level}.{model}.lke`` into the output directory.

In patch mode crops are taken at the exact coordinates of the consumer's
manifest, never re-drawn; a hash of the raw crop bytes lands in the metadata
so coordinate fidelity is verifiable after the fact. Decode and per-file
failures are recorded in ``export_errors.json`` and the job continues.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__
from .lke import write_lke
from .models import CLIP_ID, MODEL_IDS, WeightsUnavailableError, load_feature_model

INPUT_PATTERN = re.compile(r"^(?P<stem>.+)\.s(?P<level>[0-8])\.(?P<suffix>png|ppm|pgm)$")

MODES = ("whole", "patches")
SHIFT_MODES = ("masked", "shifted")
RESIZE_SIDE = 224
ERROR_MANIFEST = "export_errors.json"


@dataclass
class ExportJob:
    inputs_dir: str
    output_dir: str
    model: str = CLIP_ID
    mode: str = "whole"
    weights: str = "pretrained"
    shift_mode: str = "shifted"
    manifest_path: str | None = None
    normalize: bool = False
    batch_size: int = 8
    errors: list = field(default_factory=list)

    def __post_init__(self):
        if self.model not in MODEL_IDS:
            raise ValueError(f"model must be one of {MODEL_IDS}, got {self.model!r}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.shift_mode not in SHIFT_MODES:
            raise ValueError(f"shift_mode must be one of {SHIFT_MODES}, got {self.shift_mode!r}")
        if self.mode == "patches" and not self.manifest_path:
            raise ValueError("patch mode needs a coordinate manifest (--manifest)")


def extract_clear_part(pixels, level, shift_mode):
    """Isolate the unencrypted low bits; bit-identical to the consumer's rule."""
    if shift_mode == "masked":
        return pixels & np.uint8((1 << (8 - level)) - 1)
    return ((pixels.astype(np.uint16) << level) & 0xFF).astype(np.uint8)


def _load_rgb_or_gray(path):
    with Image.open(path) as im:
        if im.mode == "L":
            return np.asarray(im, dtype=np.uint8)
        if im.mode == "RGB":
            return np.asarray(im, dtype=np.uint8)
        raise ValueError(f"unsupported image mode {im.mode}; expected 8-bit L or RGB")


def _to_rgb(pixels):
    if pixels.ndim == 2:
        return np.repeat(pixels[:, :, None], 3, axis=2)
    return pixels


def _resize(pixels, side=RESIZE_SIDE):
    return np.asarray(
        Image.fromarray(pixels).resize((side, side), Image.BILINEAR), dtype=np.uint8
    )


def _manifest_coords(manifest, stem, suffix):
    for key in (f"{stem}.s0.{suffix}", f"{stem}.{suffix}", stem):
        if key in manifest["images"]:
            return manifest["images"][key]
    raise KeyError(f"no manifest coordinates for {stem!r}")


def discover_inputs(inputs_dir):
    """(stem, level, suffix, path) for every conforming file, sorted by name."""
    found = []
    for path in sorted(Path(inputs_dir).iterdir()):
        match = INPUT_PATTERN.match(path.name)
        if match:
            found.append((match["stem"], int(match["level"]), match["suffix"], path))
    return found


def _record(job, path, stage, err):
    job.errors.append({"file": str(path), "stage": stage, "error": f"{type(err).__name__}: {err}"})


def run_export(job):
    """Export every conforming input; returns the list of written files.

    Model-load failure (e.g. pretrained weights unavailable offline) is
    recorded in the error manifest and aborts the job; per-file problems are
    recorded and skipped.
    """
    out_dir = Path(job.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        try:
            model = load_feature_model(job.model, job.weights)
        except WeightsUnavailableError as err:
            _record(job, "*", "load-model", err)
            return written

        manifest = None
        if job.mode == "patches":
            with open(job.manifest_path, "r", encoding="utf-8") as fh:
                manifest = json.load(fh)

        for stem, level, suffix, path in discover_inputs(job.inputs_dir):
            try:
                written.append(
                    _export_one(job, model, manifest, stem, level, suffix, path, out_dir)
                )
            except Exception as err:
                _record(job, path, "export", err)
    finally:
        with open(out_dir / ERROR_MANIFEST, "w", encoding="utf-8") as fh:
            json.dump(job.errors, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return written


def _export_one(job, model, manifest, stem, level, suffix, path, out_dir):
    pixels = _load_rgb_or_gray(path)
    clear = extract_clear_part(pixels, level, job.shift_mode)

    if job.mode == "whole":
        crops = [_resize(_to_rgb(clear))]
        raw_for_hash = [crops[0]]
        patch_size = None
        seed = None
    else:
        coords = _manifest_coords(manifest, stem, suffix)
        patch_size = manifest["patch_size"]
        seed = manifest.get("seed")
        height, width = clear.shape[:2]
        crops, raw_for_hash = [], []
        for x, y, side in coords:
            if x < 0 or y < 0 or x + side > width or y + side > height:
                raise ValueError(f"crop ({x},{y},{side}) exceeds image {width}x{height}")
            raw_for_hash.append(pixels[y : y + side, x : x + side])
            crops.append(_to_rgb(clear[y : y + side, x : x + side]))
        if job.model == CLIP_ID and patch_size != RESIZE_SIDE:
            raise ValueError(
                f"{job.model} consumes {RESIZE_SIDE}x{RESIZE_SIDE} patches, "
                f"manifest has {patch_size}"
            )

    digest = hashlib.sha256()
    for crop in raw_for_hash:
        digest.update(np.ascontiguousarray(crop).tobytes())

    vectors = []
    for start in range(0, len(crops), job.batch_size):
        batch = np.stack(crops[start : start + job.batch_size])
        vectors.append(model.embed(batch))
    vectors = np.concatenate(vectors, axis=0)
    if vectors.shape[1] != model.dim:
        raise RuntimeError(f"model produced dim {vectors.shape[1]}, expected {model.dim}")
    if job.normalize:
        vectors = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)

    metadata = {
        "encoder_id": model.model_id,
        "source_image": path.name,
        "s_level": level,
        "patch_size": patch_size,
        "seed": seed,
        "normalized": bool(job.normalize),
        "weights": model.weights,
        "shift_mode": job.shift_mode,
        "mode": job.mode,
        "channel_rule": "rgb" if pixels.ndim == 3 else "replicated-gray",
        "crop_sha256": digest.hexdigest(),
        "exporter_version": __version__,
    }
    out_path = out_dir / f"{stem}.s{level}.{model.model_id}.lke"
    write_lke(out_path, vectors, metadata)
    return out_path

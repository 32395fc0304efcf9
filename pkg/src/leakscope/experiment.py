"""End-to-end sweep: encrypt per level, run every selected estimator, report.

For a given (image, level) cell the keystream is drawn exactly once and every
estimator consumes the same ciphertext, so estimator differences are never
confounded by keystream variance. Per-cell seeds are derived by hashing the
three base seeds with the cell coordinates, which keeps the sweep fully
deterministic and lets interrupted runs resume from the incremental record
(``cells.jsonl``) without changing any emitted value.

Pixel-level estimators see the luma-converted grayscale plane; embedding
estimators keep color when the source has it.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .crypto import (
    MASKED_LOW,
    SHIFTED_HIGH,
    EncryptionParams,
    apply_keystream,
    extract_clear,
    generate_keystream,
)
from .embedding import (
    BuiltinConvEncoder,
    EmbeddingSet,
    PatchSpec,
    mean_cosine_similarity,
    read_embeddings,
    sample_patch_pairs,
)
from .histogram import (
    build_joint_histogram,
    mutual_information_plugin,
    mutual_information_rounded,
)
from .images import load_image, save_image, to_grayscale
from .mine import MineConfig, SamplePairSet, estimate_mi, relative_distance_to_max, sample_pixel_pairs
from .validation import check_shift_mode

ESTIMATOR_NAMES = (
    "HistPixel",
    "MinePixel",
    "MineEmbedBuiltin",
    "MineEmbedIngested",
    "CosineEmbed",
    "HistEmbedRounded",
)

SELECTION_LARGEST = "LargestByResolution"

CELL_LOG = "cells.jsonl"


def derive_seed(base, *parts):
    """Stable 64-bit seed from a base seed and cell coordinates."""
    text = "|".join([str(int(base)), *map(str, parts)])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class Seeds:
    keystream: int = 0
    sampling: int = 1
    training: int = 2


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_dir: str = "."
    n_images: int = 100
    selection: str = SELECTION_LARGEST
    s_levels: tuple = tuple(range(9))
    estimators: tuple = ("HistPixel",)
    seeds: Seeds = field(default_factory=Seeds)
    output_dir: str = "leakscope-out"
    # sweeps default to the 100-epoch experimental protocol
    mine: MineConfig = field(default_factory=lambda: MineConfig(epochs=100))
    block: int = 8
    mine_samples: int = 5000
    patches: PatchSpec = field(default_factory=PatchSpec)
    round_scale: float = 10.0
    ingested_dir: str | None = None
    ingested_encoder: str = "clip-vit-b32"
    pixel_shift_mode: str = MASKED_LOW
    embed_shift_mode: str = SHIFTED_HIGH

    def __post_init__(self):
        if self.n_images < 1:
            raise ValueError(f"n_images must be >= 1, got {self.n_images}")
        levels = tuple(int(s) for s in self.s_levels)
        if sorted(set(levels)) != list(levels) or any(not 0 <= s <= 8 for s in levels):
            raise ValueError(f"s_levels must be sorted unique values in [0, 8], got {levels}")
        object.__setattr__(self, "s_levels", levels)
        names = tuple(self.estimators)
        unknown = [e for e in names if e not in ESTIMATOR_NAMES]
        if unknown:
            raise ValueError(f"unknown estimators {unknown}; choose from {ESTIMATOR_NAMES}")
        object.__setattr__(self, "estimators", names)
        if self.selection != SELECTION_LARGEST:
            raise ValueError(f"unknown selection rule {self.selection!r}")
        check_shift_mode(self.pixel_shift_mode)
        check_shift_mode(self.embed_shift_mode)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "seeds" in data:
            data["seeds"] = Seeds(**data["seeds"])
        if "mine" in data:
            mine = dict(data["mine"])
            if "hidden_dims" in mine:
                mine["hidden_dims"] = tuple(mine["hidden_dims"])
            data["mine"] = MineConfig(**mine)
        if "patches" in data:
            data["patches"] = PatchSpec(**data["patches"])
        for key in ("s_levels", "estimators"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)

    @classmethod
    def from_toml(cls, path):
        try:
            import tomllib
        except ModuleNotFoundError:  # Python 3.10
            import tomli as tomllib
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class CellResult:
    image: str
    estimator: str
    s: int
    value: float
    units: str
    sample_count: int
    trace: tuple | None = None


@dataclass(frozen=True)
class FailureRecord:
    image: str
    estimator: str
    s: int
    reason: str


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    images: list
    cells: list
    failures: list

    def mean_curve(self):
        """Per (estimator, s): mean, population std and count over successes."""
        rows = []
        for name in self.config.estimators:
            for level in self.config.s_levels:
                values = [
                    c.value for c in self.cells if c.estimator == name and c.s == level
                ]
                if not values:
                    continue
                units = next(
                    c.units for c in self.cells if c.estimator == name and c.s == level
                )
                arr = np.asarray(values)
                rows.append((name, level, float(arr.mean()), float(arr.std()), len(values), units))
        return rows

    def mean_traces(self):
        """Per (estimator, s): the epoch-wise mean trace over successes."""
        rows = []
        for name in self.config.estimators:
            for level in self.config.s_levels:
                traces = [
                    np.asarray(c.trace)
                    for c in self.cells
                    if c.estimator == name and c.s == level and c.trace is not None
                ]
                if not traces:
                    continue
                rows.append((name, level, np.mean(traces, axis=0)))
        return rows


def select_dataset(dataset_dir, n, selection=SELECTION_LARGEST):
    """Pick the n largest decodable images (width*height, ties by filename)."""
    if selection != SELECTION_LARGEST:
        raise ValueError(f"unknown selection rule {selection!r}")
    entries = []
    for path in sorted(Path(dataset_dir).iterdir()):
        if not path.is_file():
            continue
        try:
            img = load_image(path)
        except Exception:
            continue
        entries.append((img.shape[0] * img.shape[1], path.name, path))
    if len(entries) < n:
        raise ValueError(
            f"found only {len(entries)} decodable images in {dataset_dir}, need {n}"
        )
    entries.sort(key=lambda item: (-item[0], item[1]))
    return [path for _, _, path in entries[:n]]


class _CellStore:
    """Incremental JSONL record of finished cells; the resume point."""

    def __init__(self, path):
        self.path = Path(path)
        self.done = {}
        self.failed = {}
        if self.path.exists():
            with open(self.path, "r", encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    rec = json.loads(line)
                    key = (rec["image"], rec["estimator"], rec["s"])
                    if "reason" in rec:
                        self.failed[key] = FailureRecord(
                            rec["image"], rec["estimator"], rec["s"], rec["reason"]
                        )
                    else:
                        self.done[key] = CellResult(
                            rec["image"],
                            rec["estimator"],
                            rec["s"],
                            rec["value"],
                            rec["units"],
                            rec["sample_count"],
                            tuple(rec["trace"]) if rec.get("trace") is not None else None,
                        )
        self._fh = open(self.path, "a", encoding="utf-8")

    def record(self, cell):
        key = (cell.image, cell.estimator, cell.s)
        if isinstance(cell, FailureRecord):
            self.failed[key] = cell
            payload = {
                "image": cell.image,
                "estimator": cell.estimator,
                "s": cell.s,
                "reason": cell.reason,
            }
        else:
            self.done[key] = cell
            payload = {
                "image": cell.image,
                "estimator": cell.estimator,
                "s": cell.s,
                "value": cell.value,
                "units": cell.units,
                "sample_count": cell.sample_count,
                "trace": list(cell.trace) if cell.trace is not None else None,
            }
        self._fh.write(json.dumps(payload, sort_keys=True) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()


class _CellContext:
    """Shared per-(image, level) data: one keystream draw, cached embeddings."""

    def __init__(self, cfg, name, gray, color, level):
        self.cfg = cfg
        self.name = name
        self.gray = gray
        self.color = color
        self.level = level
        seed = derive_seed(cfg.seeds.keystream, name, level)
        self.params = EncryptionParams(bits=level, seed=seed)
        channels = 1 + (color.shape[2] if color is not None else 0)
        if level > 0:
            keystream = generate_keystream(gray.shape[1], gray.shape[0], self.params, channels)
            self.cipher_gray = apply_keystream(gray, self.params, keystream, 0)
            if color is not None:
                planes = [
                    apply_keystream(color[:, :, c], self.params, keystream, 1 + c)
                    for c in range(color.shape[2])
                ]
                self.cipher_color = np.stack(planes, axis=2)
            else:
                self.cipher_color = None
        else:
            self.cipher_gray = gray.copy()
            self.cipher_color = color.copy() if color is not None else None
        self._builtin = None

    def clear_gray(self, shift_mode):
        return extract_clear(self.cipher_gray, replace(self.params, shift_mode=shift_mode))

    def builtin_embeddings(self):
        """Co-located (plain, clear) builtin embeddings; computed once per cell."""
        if self._builtin is None:
            cfg = self.cfg
            plain = self.color if self.color is not None else self.gray
            cipher = self.cipher_color if self.color is not None else self.cipher_gray
            clear = extract_clear(cipher, replace(self.params, shift_mode=cfg.embed_shift_mode))
            spec = PatchSpec(
                patch_size=cfg.patches.patch_size,
                n_patches=cfg.patches.n_patches,
                seed=derive_seed(cfg.seeds.sampling, self.name, self.level, "patches"),
            )
            patches_a, patches_b, _ = sample_patch_pairs(plain, clear, spec)
            encoder = BuiltinConvEncoder(seed=derive_seed(cfg.seeds.sampling, "builtin-encoder"))
            encoder.fit()
            self._builtin = (encoder.transform(patches_a), encoder.transform(patches_b))
        return self._builtin

    def ingested_embeddings(self):
        cfg = self.cfg
        if cfg.ingested_dir is None:
            raise ValueError("MineEmbedIngested requires ingested_dir to be configured")
        stem = Path(self.name).stem
        ref = Path(cfg.ingested_dir) / f"{stem}.s0.{cfg.ingested_encoder}.lke"
        cur = Path(cfg.ingested_dir) / f"{stem}.s{self.level}.{cfg.ingested_encoder}.lke"
        set_a = read_embeddings(ref)
        set_b = read_embeddings(cur, expected_dim=set_a.dim)
        return set_a, set_b


def _mine_on_vectors(cfg, xs, ys, seed):
    mine_cfg = replace(
        cfg.mine,
        batch_size=min(cfg.mine.batch_size, xs.shape[0]),
        seed=seed,
        units="nats",
    )
    return estimate_mi(SamplePairSet(xs, ys), mine_cfg)


def _evaluate_cell(cfg, ctx, estimator):
    name, level = ctx.name, ctx.level
    if estimator == "HistPixel":
        clear = ctx.clear_gray(cfg.pixel_shift_mode)
        hist = build_joint_histogram(ctx.gray.ravel(), clear.ravel(), 256, 256)
        est = mutual_information_plugin(hist)
        return CellResult(name, estimator, level, est.value, "bits", est.sample_count)
    if estimator == "MinePixel":
        clear = ctx.clear_gray(cfg.pixel_shift_mode)
        pairs = sample_pixel_pairs(
            ctx.gray,
            clear,
            block=cfg.block,
            n_samples=cfg.mine_samples,
            seed=derive_seed(cfg.seeds.sampling, name, level, "pixel-pairs"),
        )
        trace = _mine_on_vectors(
            cfg, pairs.xs, pairs.ys, derive_seed(cfg.seeds.training, name, level, "mine-pixel")
        )
        return CellResult(
            name, estimator, level, trace.final_mi, "nats", len(pairs), trace.per_epoch_mi
        )
    if estimator == "MineEmbedBuiltin":
        emb_a, emb_b = ctx.builtin_embeddings()
        trace = _mine_on_vectors(
            cfg, emb_a, emb_b, derive_seed(cfg.seeds.training, name, level, "mine-embed")
        )
        return CellResult(
            name, estimator, level, trace.final_mi, "nats", emb_a.shape[0], trace.per_epoch_mi
        )
    if estimator == "MineEmbedIngested":
        set_a, set_b = ctx.ingested_embeddings()
        trace = _mine_on_vectors(
            cfg,
            set_a.vectors.astype(np.float64),
            set_b.vectors.astype(np.float64),
            derive_seed(cfg.seeds.training, name, level, "mine-ingested"),
        )
        return CellResult(
            name, estimator, level, trace.final_mi, "nats", set_a.n_vectors, trace.per_epoch_mi
        )
    if estimator == "CosineEmbed":
        emb_a, emb_b = ctx.builtin_embeddings()
        mean, sims = mean_cosine_similarity(
            EmbeddingSet(emb_a, "builtin"), EmbeddingSet(emb_b, "builtin")
        )
        return CellResult(name, estimator, level, mean, "cosine", len(sims))
    if estimator == "HistEmbedRounded":
        if cfg.ingested_dir is not None:
            set_a, set_b = ctx.ingested_embeddings()
            emb_a, emb_b = set_a.vectors, set_b.vectors
        else:
            emb_a, emb_b = ctx.builtin_embeddings()
        est = mutual_information_rounded(emb_a, emb_b, scale=cfg.round_scale)
        return CellResult(name, estimator, level, est.value, "bits", est.sample_count)
    raise ValueError(f"unknown estimator {estimator!r}")


def run_sweep(cfg):
    """Run every (image, level, estimator) cell, resuming from prior output.

    Per-cell estimator failures are recorded with their reason and the sweep
    continues; nothing is silently dropped.
    """
    paths = select_dataset(cfg.dataset_dir, cfg.n_images, cfg.selection)
    os.makedirs(cfg.output_dir, exist_ok=True)
    store = _CellStore(Path(cfg.output_dir) / CELL_LOG)
    try:
        for path in paths:
            image = load_image(path)
            color = image if image.ndim == 3 else None
            gray = to_grayscale(image)
            for level in cfg.s_levels:
                pending = [
                    e
                    for e in cfg.estimators
                    if (path.name, e, level) not in store.done
                    and (path.name, e, level) not in store.failed
                ]
                if not pending:
                    continue
                ctx = _CellContext(cfg, path.name, gray, color, level)
                for estimator in pending:
                    try:
                        store.record(_evaluate_cell(cfg, ctx, estimator))
                    except Exception as err:  # record-and-continue policy
                        store.record(
                            FailureRecord(
                                path.name,
                                estimator,
                                level,
                                f"{type(err).__name__}: {err}",
                            )
                        )
    finally:
        store.close()

    cells, failures = [], []
    for path in paths:
        for level in cfg.s_levels:
            for estimator in cfg.estimators:
                key = (path.name, estimator, level)
                if key in store.done:
                    cells.append(store.done[key])
                elif key in store.failed:
                    failures.append(store.failed[key])
    return ExperimentResult(
        config=cfg, images=[p.name for p in paths], cells=cells, failures=failures
    )


def _format(value):
    return f"{value:.12g}"


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def emit_reports(result, output_dir):
    """Write curve.csv, traces.csv, reldist.csv and run.json into output_dir."""
    out = Path(output_dir)
    os.makedirs(out, exist_ok=True)

    curve_rows = [
        (name, level, _format(mean), _format(std), n, units)
        for name, level, mean, std, n, units in result.mean_curve()
    ]
    _write_csv(out / "curve.csv", ("estimator", "s", "mean", "std", "n", "units"), curve_rows)

    trace_rows = []
    mean_traces = result.mean_traces()
    for name, level, series in mean_traces:
        for epoch, value in enumerate(series, start=1):
            trace_rows.append((name, level, epoch, _format(value)))
    _write_csv(out / "traces.csv", ("estimator", "s", "epoch", "mean_mi"), trace_rows)

    reldist_rows = []
    for name in result.config.estimators:
        per_estimator = [(level, series) for n, level, series in mean_traces if n == name]
        if not per_estimator:
            continue
        for level, series in relative_distance_to_max(per_estimator):
            for epoch, value in enumerate(series, start=1):
                reldist_rows.append((name, level, epoch, _format(value)))
    _write_csv(out / "reldist.csv", ("estimator", "s", "epoch", "value"), reldist_rows)

    provenance = {
        "artifact_version": __version__,
        "config": result.config.to_dict(),
        "images": result.images,
        "failures": [asdict(f) for f in result.failures],
    }
    with open(out / "run.json", "w", encoding="utf-8") as fh:
        json.dump(provenance, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return [out / "curve.csv", out / "traces.csv", out / "reldist.csv", out / "run.json"]


def _box_blur(plane, radius):
    """Separable box blur via running sums; keeps the corpus dependency-free."""
    kernel = 2 * radius + 1
    padded = np.pad(plane.astype(np.float64), radius, mode="edge")
    csum = padded.cumsum(axis=0)
    vert = (csum[kernel - 1 :, :] - np.vstack([np.zeros((1, csum.shape[1])), csum[: -kernel, :]]))
    csum = vert.cumsum(axis=1)
    horiz = (
        csum[:, kernel - 1 :] - np.hstack([np.zeros((csum.shape[0], 1)), csum[:, :-kernel]])
    )
    return horiz / kernel**2


SYNTH_KINDS = ("uniform", "gradient", "checker", "blobs")


def generate_synthetic_corpus(out_dir, n, size=(256, 256), kinds=SYNTH_KINDS, seed=0):
    """Write n seeded grayscale test images cycling through the given kinds."""
    height, width = size
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(n):
        kind = kinds[i % len(kinds)]
        if kind == "uniform":
            img = rng.integers(0, 256, size=(height, width), dtype=np.uint8)
        elif kind == "gradient":
            gx, gy = rng.uniform(-1, 1, size=2)
            xs, ys = np.meshgrid(np.arange(width), np.arange(height))
            ramp = gx * xs / max(width - 1, 1) + gy * ys / max(height - 1, 1)
            lo, hi = ramp.min(), ramp.max()
            img = np.floor((ramp - lo) / max(hi - lo, 1e-12) * 255 + 0.5).astype(np.uint8)
        elif kind == "checker":
            cell = int(rng.choice([8, 16, 32]))
            xs, ys = np.meshgrid(np.arange(width) // cell, np.arange(height) // cell)
            dark, light = sorted(rng.integers(0, 256, size=2))
            img = np.where((xs + ys) % 2 == 0, dark, light).astype(np.uint8)
        elif kind == "blobs":
            noise = rng.uniform(0, 255, size=(height, width))
            smooth = _box_blur(_box_blur(noise, 4), 4)
            lo, hi = smooth.min(), smooth.max()
            img = np.floor((smooth - lo) / max(hi - lo, 1e-12) * 255 + 0.5).astype(np.uint8)
        else:
            raise ValueError(f"unknown synthetic kind {kind!r}; choose from {SYNTH_KINDS}")
        path = Path(out_dir) / f"{kind}_{i:03d}.png"
        save_image(img, path)
        paths.append(path)
    return paths

"""Patch sampling, a frozen convolutional encoder, and embedding-set files.

Patches are cropped at seeded uniform positions with no resizing, and the
same coordinates are reused for both members of a plain/encrypted pair so
downstream comparisons are always co-located. The built-in encoder is a
three-layer strided convolution with fixed seeded random weights (never
trained); it exists so the embedding pipelines run self-contained, while
externally computed features are ingested through the LKE1 file format.

LKE1 layout (little-endian): magic ``LKE1``, u16 version=1, u8 dtype=0
(float32), u8 reserved=0, u32 n_vectors, u32 dim, u32 metadata_length,
UTF-8 JSON metadata, then the n_vectors*dim float32 payload.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .validation import check_image, check_seed

LKE_MAGIC = b"LKE1"
LKE_VERSION = 1
LKE_DTYPE_FLOAT32 = 0
_HEADER = struct.Struct("<4sHBBIII")

BUILTIN_ENCODER_ID = "builtin-conv-v1"


class EmbeddingFormatError(ValueError):
    """Base class for malformed embedding files."""


class BadMagicError(EmbeddingFormatError):
    pass


class UnsupportedVersionError(EmbeddingFormatError):
    pass


class TruncatedPayloadError(EmbeddingFormatError):
    pass


class DimensionMismatchError(EmbeddingFormatError):
    pass


@dataclass(frozen=True)
class PatchSpec:
    """How many square patches to crop and where the randomness comes from."""

    patch_size: int = 224
    n_patches: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.patch_size < 1:
            raise ValueError(f"patch_size must be >= 1, got {self.patch_size}")
        if self.n_patches < 1:
            raise ValueError(f"n_patches must be >= 1, got {self.n_patches}")
        check_seed(self.seed)


@dataclass
class EmbeddingSet:
    """Ordered fixed-dimension vectors (one per patch) plus provenance."""

    vectors: np.ndarray
    encoder_id: str
    source_image: str = ""
    s_level: int = 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        arr = np.asarray(self.vectors, dtype=np.float32)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"vectors must be a nonempty (n, dim) array, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("vectors contain non-finite values")
        self.vectors = arr

    @property
    def dim(self):
        return self.vectors.shape[1]

    @property
    def n_vectors(self):
        return self.vectors.shape[0]


def sample_patch_coords(width, height, spec):
    """Seeded uniform top-left (col, row) coordinates for spec.n_patches crops."""
    if width < spec.patch_size or height < spec.patch_size:
        raise ValueError(
            f"image {width}x{height} is smaller than patch size "
            f"{spec.patch_size}x{spec.patch_size}"
        )
    rng = np.random.default_rng(spec.seed)
    cols = rng.integers(0, width - spec.patch_size + 1, size=spec.n_patches)
    rows = rng.integers(0, height - spec.patch_size + 1, size=spec.n_patches)
    return np.stack([cols, rows], axis=1)


def _crop(img, col, row, side):
    return img[row : row + side, col : col + side]


def sample_patches(img, spec):
    """Crop n_patches seeded random patches; no resizing or interpolation."""
    arr = check_image(img)
    coords = sample_patch_coords(arr.shape[1], arr.shape[0], spec)
    return [_crop(arr, c, r, spec.patch_size) for c, r in coords]


def sample_patch_pairs(img_a, img_b, spec):
    """Co-located patches from two equally sized images, plus the coordinates."""
    a = check_image(img_a)
    b = check_image(img_b)
    if a.shape[:2] != b.shape[:2]:
        raise ValueError(f"images must share dimensions, got {a.shape} vs {b.shape}")
    coords = sample_patch_coords(a.shape[1], a.shape[0], spec)
    patches_a = [_crop(a, c, r, spec.patch_size) for c, r in coords]
    patches_b = [_crop(b, c, r, spec.patch_size) for c, r in coords]
    return patches_a, patches_b, coords


def _conv_same_stride2(x, kernels):
    """3x3 stride-2 convolution with zero 'same' padding.

    x is (C_in, H, W); kernels is (C_in*9, C_out). Output spatial dims are
    ceil(H/2) x ceil(W/2), so any side >= 1 stays valid through the stack.
    """
    c_in, h, w = x.shape
    out_h, out_w = (h + 1) // 2, (w + 1) // 2
    pad_h = max((out_h - 1) * 2 + 3 - h, 0)
    pad_w = max((out_w - 1) * 2 + 3 - w, 0)
    padded = np.pad(
        x,
        ((0, 0), (pad_h // 2, pad_h - pad_h // 2), (pad_w // 2, pad_w - pad_w // 2)),
    )
    windows = np.lib.stride_tricks.sliding_window_view(padded, (3, 3), axis=(1, 2))
    windows = windows[:, ::2, ::2]  # (C_in, out_h, out_w, 3, 3)
    col = windows.transpose(1, 2, 0, 3, 4).reshape(out_h * out_w, c_in * 9)
    out = col @ kernels
    return out.reshape(out_h, out_w, -1).transpose(2, 0, 1)


class BuiltinConvEncoder(BaseEstimator, TransformerMixin):
    """Frozen random convolutional feature extractor (64-dim output).

    Three 3x3 stride-2 convolutions (16, 32, 64 channels) over inputs scaled
    to [0, 1], ReLU between layers, zero biases, then a global average pool
    per channel. Weights are a pure function of the seed and are never
    trained; grayscale patches are replicated to three input channels.
    """

    channels = (16, 32, 64)
    output_dim = 64
    min_side = 8

    def __init__(self, seed=0):
        self.seed = seed

    @property
    def encoder_id(self):
        return BUILTIN_ENCODER_ID

    def _kernels(self):
        rng = np.random.default_rng(check_seed(self.seed))
        kernels = []
        c_in = 3
        for c_out in self.channels:
            fan_in, fan_out = c_in * 9, c_out * 9
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            kernels.append(rng.uniform(-bound, bound, size=(c_in * 9, c_out)))
            c_in = c_out
        return kernels

    def fit(self, X=None, y=None):
        self.kernels_ = self._kernels()
        return self

    def encode(self, patch):
        """Deterministic 64-dim feature vector for one square 8-bit patch."""
        arr = check_image(patch, "patch")
        if arr.shape[0] != arr.shape[1]:
            raise ValueError(f"patch must be square, got {arr.shape[0]}x{arr.shape[1]}")
        if arr.shape[0] < self.min_side:
            raise ValueError(f"patch side must be >= {self.min_side}, got {arr.shape[0]}")
        if not hasattr(self, "kernels_"):
            self.fit()
        if arr.ndim == 2:
            x = np.repeat(arr[None, :, :], 3, axis=0) / 255.0
        else:
            x = arr.transpose(2, 0, 1) / 255.0
        last = len(self.kernels_) - 1
        for l, kernels in enumerate(self.kernels_):
            x = _conv_same_stride2(x, kernels)
            if l < last:
                x = np.maximum(x, 0.0)
        return x.mean(axis=(1, 2))

    def transform(self, patches):
        """Encode a sequence of patches into an (n, 64) array."""
        return np.stack([self.encode(p) for p in patches])


def encode_builtin(patch, encoder=None):
    if encoder is None:
        encoder = BuiltinConvEncoder()
    return encoder.encode(patch)


def cosine_similarity(u, v):
    """dot(u, v) / (|u| |v|); rejects zero-norm inputs."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ValueError(f"vectors must share dimension, got {u.size} vs {v.size}")
    norm_u = np.linalg.norm(u)
    norm_v = np.linalg.norm(v)
    if norm_u == 0.0 or norm_v == 0.0:
        raise ValueError("cosine similarity is undefined for zero-norm vectors")
    if np.array_equal(u, v):
        return 1.0  # exact for coinciding vectors; the ratio would round
    return float(u @ v / (norm_u * norm_v))


def mean_cosine_similarity(set_a, set_b):
    """Mean patch-wise cosine similarity between two aligned embedding sets."""
    if set_a.dim != set_b.dim:
        raise DimensionMismatchError(
            f"embedding dimensions differ: {set_a.dim} vs {set_b.dim}"
        )
    if set_a.n_vectors != set_b.n_vectors:
        raise ValueError(
            f"embedding counts differ: {set_a.n_vectors} vs {set_b.n_vectors}"
        )
    sims = [
        cosine_similarity(set_a.vectors[t], set_b.vectors[t])
        for t in range(set_a.n_vectors)
    ]
    return float(np.mean(sims)), sims


def similarity_curve(pairs_by_level):
    """Mean cosine similarity per encryption level.

    ``pairs_by_level`` is a list of (level, plain_set, encrypted_set); the
    output is descriptive only, no monotonicity is implied.
    """
    curve = []
    for level, set_a, set_b in pairs_by_level:
        mean, _ = mean_cosine_similarity(set_a, set_b)
        curve.append((int(level), mean))
    return curve


def _required_metadata(embedding_set):
    meta = {
        "encoder_id": embedding_set.encoder_id,
        "source_image": embedding_set.source_image,
        "s_level": int(embedding_set.s_level),
        "patch_size": embedding_set.metadata.get("patch_size"),
        "seed": embedding_set.metadata.get("seed"),
    }
    extras = {k: v for k, v in embedding_set.metadata.items() if k not in meta}
    meta.update(extras)
    return meta


def write_embeddings(embedding_set, path):
    """Serialize an EmbeddingSet to an LKE1 file (bit-exact round trip)."""
    meta_bytes = json.dumps(
        _required_metadata(embedding_set), sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
    payload = np.ascontiguousarray(embedding_set.vectors, dtype="<f4").tobytes()
    header = _HEADER.pack(
        LKE_MAGIC,
        LKE_VERSION,
        LKE_DTYPE_FLOAT32,
        0,
        embedding_set.n_vectors,
        embedding_set.dim,
        len(meta_bytes),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(meta_bytes)
        fh.write(payload)


def read_embeddings(path, expected_dim=None):
    """Parse an LKE1 file; malformed inputs raise a specific error category."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        if blob[: len(LKE_MAGIC)] != LKE_MAGIC[: len(blob)] and len(blob) >= 4:
            raise BadMagicError(f"{path}: not an LKE1 file")
        raise TruncatedPayloadError(f"{path}: truncated header ({len(blob)} bytes)")
    magic, version, dtype, _, n_vectors, dim, meta_len = _HEADER.unpack_from(blob)
    if magic != LKE_MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}, expected {LKE_MAGIC!r}")
    if version != LKE_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported version {version}")
    if dtype != LKE_DTYPE_FLOAT32:
        raise UnsupportedVersionError(f"{path}: unsupported dtype code {dtype}")
    if n_vectors < 1 or dim < 1:
        raise DimensionMismatchError(f"{path}: empty shape {n_vectors}x{dim}")
    offset = _HEADER.size
    if len(blob) < offset + meta_len:
        raise TruncatedPayloadError(f"{path}: truncated metadata")
    try:
        meta = json.loads(blob[offset : offset + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise EmbeddingFormatError(f"{path}: invalid metadata JSON: {err}") from err
    offset += meta_len
    expected_bytes = n_vectors * dim * 4
    if len(blob) < offset + expected_bytes:
        raise TruncatedPayloadError(
            f"{path}: truncated payload ({len(blob) - offset} of {expected_bytes} bytes)"
        )
    if len(blob) > offset + expected_bytes:
        raise EmbeddingFormatError(f"{path}: trailing bytes after payload")
    vectors = np.frombuffer(
        blob, dtype="<f4", count=n_vectors * dim, offset=offset
    ).reshape(n_vectors, dim)
    if expected_dim is not None and dim != expected_dim:
        raise DimensionMismatchError(f"{path}: dim {dim}, expected {expected_dim}")
    known = {"encoder_id", "source_image", "s_level"}
    return EmbeddingSet(
        vectors=vectors.copy(),
        encoder_id=str(meta.get("encoder_id", "")),
        source_image=str(meta.get("source_image", "")),
        s_level=int(meta.get("s_level", 0)),
        metadata={k: v for k, v in meta.items() if k not in known},
    )


def write_coordinate_manifest(path, entries, patch_size, seed):
    """Write the per-image patch coordinate manifest consumed by exporters.

    ``entries`` maps an image name to its (col, row) coordinate array; each
    record becomes (x, y, side) with the shared patch side.
    """
    payload = {
        "patch_size": int(patch_size),
        "seed": int(seed),
        "images": {
            name: [[int(c), int(r), int(patch_size)] for c, r in coords]
            for name, coords in entries.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_coordinate_manifest(path):
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    for key in ("patch_size", "seed", "images"):
        if key not in payload:
            raise ValueError(f"{path}: coordinate manifest missing key {key!r}")
    return payload

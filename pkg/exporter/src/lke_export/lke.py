"""Writer/reader for the LKE1 embedding interchange format.

Layout (little-endian): magic ``LKE1``, u16 version=1, u8 dtype=0 (float32),
u8 reserved=0, u32 n_vectors, u32 dim, u32 metadata_length, UTF-8 JSON
metadata, then the n_vectors*dim float32 payload. This mirrors the consumer's
normative definition; files written here must parse unchanged over there.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"LKE1"
VERSION = 1
DTYPE_FLOAT32 = 0
_HEADER = struct.Struct("<4sHBBIII")


def write_lke(path, vectors, metadata):
    vectors = np.ascontiguousarray(vectors, dtype="<f4")
    if vectors.ndim != 2 or vectors.shape[0] < 1 or vectors.shape[1] < 1:
        raise ValueError(f"vectors must be (n, dim), got shape {vectors.shape}")
    if not np.isfinite(vectors).all():
        raise ValueError("vectors contain non-finite values")
    meta_bytes = json.dumps(metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")
    header = _HEADER.pack(
        MAGIC, VERSION, DTYPE_FLOAT32, 0, vectors.shape[0], vectors.shape[1], len(meta_bytes)
    )
    tmp_path = f"{path}.tmp"
    with open(tmp_path, "wb") as fh:
        fh.write(header)
        fh.write(meta_bytes)
        fh.write(vectors.tobytes())
    import os

    os.replace(tmp_path, path)  # atomic per output path


def read_lke(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, dtype, _, n_vectors, dim, meta_len = _HEADER.unpack_from(blob)
    if magic != MAGIC or version != VERSION or dtype != DTYPE_FLOAT32:
        raise ValueError(f"{path}: not a version-{VERSION} float32 LKE file")
    offset = _HEADER.size
    metadata = json.loads(blob[offset : offset + meta_len].decode("utf-8"))
    offset += meta_len
    expected = n_vectors * dim * 4
    if len(blob) != offset + expected:
        raise ValueError(f"{path}: payload size mismatch")
    vectors = np.frombuffer(blob, dtype="<f4", count=n_vectors * dim, offset=offset)
    return vectors.reshape(n_vectors, dim).copy(), metadata

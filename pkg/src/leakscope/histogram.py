"""Plug-in (empirical histogram) entropy and mutual information.

Estimates are computed by substituting normalized joint-histogram counts into
the discrete MI formula, i.e. the KL divergence between the empirical joint
and the product of its marginals. Results are reported in bits by default;
zero-count cells contribute zero (the p*log(p) -> 0 limit convention) and no
bias correction is applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .crypto import BITS_PER_PIXEL, MASKED_LOW, EncryptionParams, encrypt, extract_clear
from .validation import check_aligned_pair, check_plane

LOG2 = math.log(2.0)

UNITS = ("bits", "nats")

# Estimator tags carried by MIEstimate.
HISTOGRAM = "histogram"
MINE = "mine"
MINE_EMBEDDING = "mine-embedding"

MIN_CURVE_PIXELS = 4096


@dataclass(frozen=True)
class MIEstimate:
    """A mutual-information value with its units and provenance."""

    value: float
    units: str
    estimator: str
    sample_count: int

    def in_units(self, units):
        if units not in UNITS:
            raise ValueError(f"units must be one of {UNITS}, got {units!r}")
        if units == self.units:
            return self
        factor = 1.0 / LOG2 if units == "bits" else LOG2
        return MIEstimate(self.value * factor, units, self.estimator, self.sample_count)


@dataclass(frozen=True)
class JointHistogram:
    """2-D count table over value pairs; empirical joint and marginals."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2:
            raise ValueError(f"counts must be 2-D, got shape {counts.shape}")
        if counts.size == 0:
            raise ValueError("counts must be nonempty")
        if np.issubdtype(counts.dtype, np.floating):
            raise ValueError("counts must be integers")
        if counts.min() < 0:
            raise ValueError("counts must be nonnegative")
        object.__setattr__(self, "counts", counts.astype(np.int64))

    @property
    def bins_a(self):
        return self.counts.shape[0]

    @property
    def bins_b(self):
        return self.counts.shape[1]

    @property
    def total(self):
        return int(self.counts.sum())

    def marginal_a(self):
        return self.counts.sum(axis=1)

    def marginal_b(self):
        return self.counts.sum(axis=0)


def build_joint_histogram(a, b, bins_a=256, bins_b=256):
    """Count co-occurrences of aligned discrete values.

    ``a`` and ``b`` must be equal-length sequences of integers already binned
    into [0, bins_a) and [0, bins_b); cell (u, v) counts the indices t with
    a[t] == u and b[t] == v.
    """
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("inputs must be nonempty")
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    a = a.astype(np.int64)
    b = b.astype(np.int64)
    if a.min() < 0 or a.max() >= bins_a:
        raise ValueError(f"first sequence has values outside [0, {bins_a})")
    if b.min() < 0 or b.max() >= bins_b:
        raise ValueError(f"second sequence has values outside [0, {bins_b})")
    flat = np.bincount(a * bins_b + b, minlength=bins_a * bins_b)
    return JointHistogram(flat.reshape(bins_a, bins_b))


def entropy(counts):
    """Shannon entropy in bits of a count table (any shape, pooled)."""
    counts = np.asarray(counts, dtype=np.float64).ravel()
    total = counts.sum()
    if total < 1:
        raise ValueError("entropy needs at least one observation")
    p = counts[counts > 0] / total
    return float(-(p * np.log2(p)).sum())


def mutual_information_plugin(hist, units="bits"):
    """Plug-in MI of a joint histogram: sum p_xy * log(p_xy / (p_x p_y)).

    Equals H(A) + H(B) - H(A,B) on the same counts; tiny negative rounding
    residue is clamped to zero so the estimate is always nonnegative.
    """
    if units not in UNITS:
        raise ValueError(f"units must be one of {UNITS}, got {units!r}")
    total = hist.total
    if total < 1:
        raise ValueError("mutual information needs at least one observation")
    pxy = hist.counts / total
    px = pxy.sum(axis=1)
    py = pxy.sum(axis=0)
    nz = pxy > 0
    ratio = pxy[nz] / (px[:, None] * py[None, :])[nz]
    value = float((pxy[nz] * np.log2(ratio)).sum())
    value = max(value, 0.0)
    if units == "nats":
        value *= LOG2
    return MIEstimate(value, units, HISTOGRAM, total)


def theoretic_upper_bound(encrypted_bits, bits_per_pixel=BITS_PER_PIXEL):
    """Upper bound on the MI between an image and its clear part, in bits.

    The clear-part alphabet has 2**(bits_per_pixel - encrypted_bits) values,
    so MI cannot exceed that many bits; uniform pixels attain the bound.
    """
    if not 0 <= encrypted_bits <= bits_per_pixel:
        raise ValueError(
            f"encrypted_bits must be in [0, {bits_per_pixel}], got {encrypted_bits}"
        )
    return float(bits_per_pixel - encrypted_bits)


def pixel_mi_curve(img, seed, levels=None, shift_mode=MASKED_LOW):
    """Plug-in MI between an image and its clear part, per encryption level.

    For each level: encrypt, extract the clear part, build the 256x256 joint
    histogram of co-located (original, clear) pixels, and return the plug-in
    estimate in bits. Small images are rejected because the 256x256 table is
    badly undersampled below a few thousand pixels.
    """
    plane = check_plane(img)
    area = plane.shape[0] * plane.shape[1]
    if area < MIN_CURVE_PIXELS:
        raise ValueError(
            f"image area {area} is below the {MIN_CURVE_PIXELS}-pixel minimum "
            "for a meaningful 256x256 histogram estimate"
        )
    if levels is None:
        levels = range(BITS_PER_PIXEL + 1)
    curve = []
    for level in levels:
        params = EncryptionParams(bits=int(level), seed=seed, shift_mode=shift_mode)
        clear = extract_clear(encrypt(plane, params), params)
        hist = build_joint_histogram(plane.ravel(), clear.ravel(), 256, 256)
        curve.append((int(level), mutual_information_plugin(hist)))
    return curve


def discretize_round(vectors, scale):
    """Map each component to round(component * scale), half away from zero."""
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    arr = np.asarray(vectors, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise ValueError("vectors contain non-finite components")
    scaled = arr * scale
    return (np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)).astype(np.int64)


def mutual_information_rounded(a_vectors, b_vectors, scale=10.0, units="bits"):
    """Plug-in MI between two vector sets after rounding, pooled over components.

    Every (vector, dimension) component pair contributes one scalar sample per
    side; the observed integer range on each side defines its bins.
    """
    xs, ys = check_aligned_pair(a_vectors, b_vectors)
    a = discretize_round(xs, scale).ravel()
    b = discretize_round(ys, scale).ravel()
    a -= a.min()
    b -= b.min()
    hist = build_joint_histogram(a, b, bins_a=int(a.max()) + 1, bins_b=int(b.max()) + 1)
    return mutual_information_plugin(hist, units=units)


class PluginMIEstimator(BaseEstimator):
    """Histogram plug-in MI with a scikit-learn estimator surface.

    `fit(a, b)` bins two aligned integer-valued sequences and stores the
    estimate in ``mi_`` (a float, in ``units``) and ``estimate_`` (the full
    :class:`MIEstimate`).
    """

    def __init__(self, bins_a=256, bins_b=256, units="bits"):
        self.bins_a = bins_a
        self.bins_b = bins_b
        self.units = units

    def fit(self, a, b):
        self.histogram_ = build_joint_histogram(a, b, self.bins_a, self.bins_b)
        self.estimate_ = mutual_information_plugin(self.histogram_, units=self.units)
        self.mi_ = self.estimate_.value
        return self

    def score(self, a=None, b=None):
        return self.mi_

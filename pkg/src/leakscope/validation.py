"""Input validation helpers shared across the package."""

from __future__ import annotations

import numbers

import numpy as np

SHIFT_MODES = ("masked", "shifted")


def check_shift_mode(mode):
    if mode not in SHIFT_MODES:
        raise ValueError(f"shift mode must be one of {SHIFT_MODES}, got {mode!r}")
    return mode


def check_seed(seed, name="seed"):
    if not isinstance(seed, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"{name} must be an unsigned 64-bit integer, got {seed}")
    return seed


def _check_uint8(arr, name):
    # Everything is 8 bits per channel; wider/deeper inputs are rejected, never coerced.
    if arr.dtype == np.uint8:
        return arr
    if arr.dtype == bool or not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"unsupported bit depth for {name}: dtype {arr.dtype} is not 8-bit")
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise ValueError(f"unsupported bit depth for {name}: values outside [0, 255]")
    return arr.astype(np.uint8)


def check_plane(img, name="image"):
    """Validate a single 8-bit channel and return it as a 2-D uint8 array."""
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D plane, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be at least 1x1, got shape {arr.shape}")
    return _check_uint8(arr, name)


def check_image(img, name="image"):
    """Validate an 8-bit image with 1 or 3 channels.

    Returns a (H, W) or (H, W, 3) uint8 array; anything else is rejected.
    """
    arr = np.asarray(img)
    if arr.ndim == 2:
        return check_plane(arr, name)
    if arr.ndim == 3:
        if arr.shape[2] == 1:
            return check_plane(arr[:, :, 0], name)
        if arr.shape[2] != 3:
            raise ValueError(
                f"unsupported channel count for {name}: got {arr.shape[2]}, expected 1 or 3"
            )
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"{name} must be at least 1x1, got shape {arr.shape}")
        return _check_uint8(arr, name)
    raise ValueError(f"{name} must be 2-D or 3-D, got shape {arr.shape}")


def check_vector_set(x, name="vectors"):
    """Validate a set of equal-length real vectors as a float64 (n, d) array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise ValueError(f"{name} must be a nonempty (n, d) array, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_aligned_pair(x, y, name_x="xs", name_y="ys"):
    xs = check_vector_set(x, name_x)
    ys = check_vector_set(y, name_y)
    if xs.shape[0] != ys.shape[0]:
        raise ValueError(
            f"{name_x} and {name_y} must be aligned: {xs.shape[0]} vs {ys.shape[0]} rows"
        )
    return xs, ys

"""Selective encryption of the leading bit-planes of 8-bit images.

The scheme XORs the ``bits`` most significant bit-planes of each channel with
a ChaCha20 keystream and leaves the remaining low bits in the clear. The clear
part can be isolated in place (``"masked"``: high bits zeroed) or promoted to
the top of the byte (``"shifted"``: low bits moved up, zeros below), which
rescales pixel values but carries the same information.

Keystream convention (normative for ciphertext reproducibility): the ChaCha20
key is the little-endian 64-bit seed repeated four times, the 16-byte nonce is
zero (counter starts at 0), and keystream bytes are consumed bit by bit,
most significant bit of each byte first. Bits are laid out plane-major: all
width*height bits for pixel-bit index 7 in row-major order, then index 6, and
so on down to ``8 - bits``. Multi-channel images consume further segments of
the same stream, channel-major, so no keystream bit is ever reused.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms

from .validation import check_image, check_plane, check_seed, check_shift_mode

MASKED_LOW = "masked"
SHIFTED_HIGH = "shifted"

BITS_PER_PIXEL = 8


@dataclass(frozen=True)
class EncryptionParams:
    """Encryption strength, keystream seed and clear-part convention.

    ``bits`` is the number of encrypted leading (most significant) bit-planes,
    in [0, 8]. ``shift_mode`` only affects :func:`extract_clear`.
    """

    bits: int
    seed: int
    shift_mode: str = MASKED_LOW

    def __post_init__(self):
        if not isinstance(self.bits, int) or not 0 <= self.bits <= BITS_PER_PIXEL:
            raise ValueError(f"bits must be an integer in [0, {BITS_PER_PIXEL}], got {self.bits!r}")
        check_seed(self.seed)
        check_shift_mode(self.shift_mode)


@dataclass(frozen=True)
class Keystream:
    """Deterministic pseudo-random bit-planes for one or more channels.

    ``bits`` has shape (channels, n_bitplanes, height, width) with values in
    {0, 1}; plane index 0 corresponds to pixel-bit index 7. ``source`` records
    how the stream was derived.
    """

    bits: np.ndarray
    source: dict = field(compare=False)

    @property
    def channels(self):
        return self.bits.shape[0]


def _chacha20_bytes(seed, n_bytes):
    key = seed.to_bytes(8, "little") * 4
    encryptor = Cipher(algorithms.ChaCha20(key, bytes(16)), mode=None).encryptor()
    return encryptor.update(bytes(n_bytes))


def generate_keystream(width, height, params, channels=1):
    """Generate the keystream bits for a width x height image.

    The stream is a pure function of (seed, width, height, bits, channels) and
    is byte-identical across runs and platforms. ``bits == 0`` yields an empty
    stream.
    """
    if width < 1 or height < 1:
        raise ValueError(f"image dimensions must be >= 1, got {width}x{height}")
    if channels < 1:
        raise ValueError(f"channels must be >= 1, got {channels}")
    seed = check_seed(params.seed)
    n_bits = channels * params.bits * height * width
    if n_bits == 0:
        bits = np.zeros((channels, params.bits, height, width), dtype=np.uint8)
    else:
        raw = np.frombuffer(_chacha20_bytes(seed, (n_bits + 7) // 8), dtype=np.uint8)
        bits = np.unpackbits(raw)[:n_bits].reshape(channels, params.bits, height, width)
    source = {
        "cipher": "chacha20",
        "key_derivation": "seed-le64-x4",
        "nonce": "zero-128",
        "seed": seed,
        "bit_order": "msb-first-per-byte, plane-major, channel-major",
        "channels": channels,
    }
    return Keystream(bits=bits, source=source)


def _keystream_mask(keystream, channel, n_encrypted_bits):
    """Pack one channel's bit-planes into a per-pixel uint8 XOR mask."""
    planes = keystream.bits[channel]
    mask = np.zeros(planes.shape[1:], dtype=np.uint8)
    for idx in range(n_encrypted_bits):
        mask |= planes[idx] << (BITS_PER_PIXEL - 1 - idx)
    return mask


def apply_keystream(plane, params, keystream, channel=0):
    """XOR one plane with the given channel segment of a keystream."""
    plane = check_plane(plane)
    if params.bits == 0:
        return plane.copy()
    if not 0 <= channel < keystream.channels:
        raise ValueError(f"keystream has {keystream.channels} channels, asked for {channel}")
    if keystream.bits.shape[1:] != (params.bits, plane.shape[0], plane.shape[1]):
        raise ValueError(
            f"keystream shape {keystream.bits.shape} does not match "
            f"{params.bits} bit-planes of a {plane.shape[0]}x{plane.shape[1]} plane"
        )
    return plane ^ _keystream_mask(keystream, channel, params.bits)


def encrypt(img, params, keystream=None):
    """XOR the ``params.bits`` most significant bit-planes with the keystream.

    Bit indices below ``8 - bits`` are returned unchanged; ``bits == 0`` is the
    identity. The operation is an involution: applying it twice with the same
    parameters restores the input.
    """
    plane = check_plane(img)
    if params.bits == 0:
        return plane.copy()
    if keystream is None:
        keystream = generate_keystream(plane.shape[1], plane.shape[0], params)
    return apply_keystream(plane, params, keystream, channel=0)


def decrypt(img, params, keystream=None):
    """Invert :func:`encrypt`; bit-exact with the same parameters (XOR involution)."""
    return encrypt(img, params, keystream=keystream)


def encrypt_image(img, params):
    """Encrypt a grayscale or RGB image with one keystream draw.

    Each channel consumes its own contiguous segment of the stream
    (channel-major continuation), so channels never share keystream bits.
    """
    arr = check_image(img)
    if arr.ndim == 2:
        return encrypt(arr, params)
    if params.bits == 0:
        return arr.copy()
    height, width, channels = arr.shape
    keystream = generate_keystream(width, height, params, channels=channels)
    out = np.empty_like(arr)
    for c in range(channels):
        out[:, :, c] = apply_keystream(arr[:, :, c], params, keystream, channel=c)
    return out


def decrypt_image(img, params):
    return encrypt_image(img, params)


def extract_clear(img_encrypted, params):
    """Isolate the unencrypted low bits of every pixel.

    ``"masked"`` returns ``(p << bits) >> bits`` within 8 bits (high bits
    zeroed, values unchanged); ``"shifted"`` returns ``p << bits`` within
    8 bits (clear bits promoted to the top, zeros below). Works per element on
    single planes and multi-channel images alike.
    """
    arr = check_image(img_encrypted)
    bits = params.bits
    if params.shift_mode == MASKED_LOW:
        low_mask = (1 << (BITS_PER_PIXEL - bits)) - 1
        return arr & np.uint8(low_mask)
    return ((arr.astype(np.uint16) << bits) & 0xFF).astype(np.uint8)


def split_channels(color_image):
    """Split an 8-bit image into per-channel planes (one plane for grayscale)."""
    arr = check_image(color_image)
    if arr.ndim == 2:
        return [arr]
    return [np.ascontiguousarray(arr[:, :, c]) for c in range(arr.shape[2])]

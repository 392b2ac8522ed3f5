"""Orthonormal 2-D DCT-II on 8x8 blocks and zigzag coefficient ordering.

All functions accept either a single (8, 8) block or a batch shaped
(..., 8, 8) and are vectorized over leading axes. Transforms run in
float64; integer conversion happens only in the quantization stage.
"""

from __future__ import annotations

import numpy as np
from scipy.fft import dctn, idctn

LEVEL_SHIFT = 128.0

# zigzag position -> row-major coefficient index
ZIGZAG_TO_RASTER = np.array(
    [
        0, 1, 8, 16, 9, 2, 3, 10,
        17, 24, 32, 25, 18, 11, 4, 5,
        12, 19, 26, 33, 40, 48, 41, 34,
        27, 20, 13, 6, 7, 14, 21, 28,
        35, 42, 49, 56, 57, 50, 43, 36,
        29, 22, 15, 23, 30, 37, 44, 51,
        58, 59, 52, 45, 38, 31, 39, 46,
        53, 60, 61, 54, 47, 55, 62, 63,
    ]
)

# row-major coefficient index -> zigzag position
RASTER_TO_ZIGZAG = np.argsort(ZIGZAG_TO_RASTER)


def zigzag_pairs() -> list[tuple[int, int]]:
    """The zigzag permutation as (row frequency, column frequency) pairs."""
    return [(int(r) // 8, int(r) % 8) for r in ZIGZAG_TO_RASTER]


def dct2(blocks: np.ndarray, level_shift: bool = True) -> np.ndarray:
    """Forward orthonormal 2-D DCT-II of (blocks - 128) when shifted.

    The shift is exposed as a flag because perturbation residuals carry no
    DC offset and are transformed unshifted.
    """
    blocks = np.asarray(blocks, dtype=np.float64)
    if level_shift:
        blocks = blocks - LEVEL_SHIFT
    return dctn(blocks, type=2, axes=(-2, -1), norm="ortho")


def idct2(coefs: np.ndarray, level_shift: bool = True) -> np.ndarray:
    """Inverse of :func:`dct2` up to floating-point tolerance."""
    out = idctn(np.asarray(coefs, dtype=np.float64), type=2, axes=(-2, -1), norm="ortho")
    if level_shift:
        out = out + LEVEL_SHIFT
    return out


def zigzag(coefs: np.ndarray) -> np.ndarray:
    """Reorder (..., 8, 8) coefficient blocks into (..., 64) zigzag vectors."""
    c = np.asarray(coefs)
    flat = c.reshape(c.shape[:-2] + (64,))
    return flat[..., ZIGZAG_TO_RASTER]


def unzigzag(vec: np.ndarray) -> np.ndarray:
    """Inverse of :func:`zigzag`: (..., 64) vectors back to (..., 8, 8) blocks."""
    v = np.asarray(vec)
    return v[..., RASTER_TO_ZIGZAG].reshape(v.shape[:-1] + (8, 8))

"""Corpus-level frequency-band statistics and the deviation-ratio ordering.

For a corpus of images (or perturbation residuals), every 8x8 block of the
selected color channel is transformed and the sample standard deviation of
each of the 64 bands is estimated in two passes (mean first, then squared
deviations) so the result is independent of accumulation schedule.

Band indices are row-major throughout this module; only the quantization
table uses zigzag indexing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError
from .image import (
    ImageBuffer,
    box_mean_2x2,
    linear_rgb_to_ycbcr,
    rgb_to_ycbcr,
    split_blocks,
    subsample_420,
)
from .transform import RASTER_TO_ZIGZAG, ZIGZAG_TO_RASTER, dct2

R, G, B, Y, CB, CR = "r", "g", "b", "y", "cb", "cr"
CHANNELS = (R, G, B, Y, CB, CR)

STATS_FORMAT = 1
RATIO_FORMAT = 1

# Zero-variance guard applied to the denominator before ratios are formed.
DELTA_FLOOR = 1e-6


@dataclass(frozen=True)
class BandStats:
    """Per-band standard deviations for one color channel."""

    channel: str
    delta: np.ndarray  # (64,) float64, row-major bands
    n_blocks: int

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ValidationError(f"unknown channel {self.channel!r}")
        delta = np.asarray(self.delta, dtype=np.float64)
        if delta.shape != (64,):
            raise ValidationError("delta must have 64 entries")
        if not np.all(np.isfinite(delta)) or np.any(delta < 0):
            raise ValidationError("delta entries must be finite and non-negative")
        if self.n_blocks < 2:
            raise ValidationError("band statistics need at least 2 blocks")
        object.__setattr__(self, "delta", delta)


@dataclass(frozen=True)
class BandRatio:
    """Per-band ratio of residual to benign deviations plus the band order
    sorted by ascending ratio (ties resolved by zigzag position)."""

    ratio: np.ndarray  # (64,) float64
    order: np.ndarray  # (64,) int, band indices

    def __post_init__(self):
        ratio = np.asarray(self.ratio, dtype=np.float64)
        order = np.asarray(self.order, dtype=np.int64)
        if ratio.shape != (64,) or order.shape != (64,):
            raise ValidationError("ratio and order must have 64 entries")
        if not np.all(np.isfinite(ratio)) or np.any(ratio <= 0):
            raise ValidationError("ratios must be finite and positive")
        if sorted(order.tolist()) != list(range(64)):
            raise ValidationError("order must be a permutation of 0..63")
        object.__setattr__(self, "ratio", ratio)
        object.__setattr__(self, "order", order)


def _channel_plane(item, channel: str) -> np.ndarray:
    """Extract the channel plane from a corpus item.

    Items may be ImageBuffers (full benign path, including rounded 4:2:0
    subsampling for Cb/Cr), (h, w, 3) float residual stacks (offset-free
    linear conversion, unrounded box averaging), or already-extracted 2-D
    planes used as-is.
    """
    if isinstance(item, ImageBuffer):
        if channel in (R, G, B):
            return item.plane((R, G, B).index(channel))
        y, cb, cr = rgb_to_ycbcr(item)
        if channel == Y:
            return y
        return subsample_420(cb if channel == CB else cr)
    arr = np.asarray(item, dtype=np.float64)
    if arr.ndim == 2:
        return arr
    if arr.ndim == 3 and arr.shape[2] == 3:
        if channel in (R, G, B):
            return arr[:, :, (R, G, B).index(channel)]
        y, cb, cr = linear_rgb_to_ycbcr(arr[:, :, 0], arr[:, :, 1], arr[:, :, 2])
        if channel == Y:
            return y
        return box_mean_2x2(cb if channel == CB else cr)
    raise ValidationError(
        f"corpus items must be ImageBuffer, 2-D plane, or (h, w, 3) residual; got shape {arr.shape}"
    )


def _corpus_coefs(corpus: Iterable, channel: str):
    for item in corpus:
        plane = _channel_plane(item, channel)
        blocks = split_blocks(plane).blocks
        # No level shift: a constant offset moves only the DC mean and
        # leaves every standard deviation unchanged.
        yield dct2(blocks, level_shift=False).reshape(-1, 64)


def estimate_band_stats(corpus: Sequence, channel: str) -> BandStats:
    """Sample standard deviation (n-1 denominator) of each frequency band
    over all blocks of all corpus items, after the channel's color and
    subsampling path."""
    if channel not in CHANNELS:
        raise ValidationError(f"unknown channel {channel!r}")
    total = np.zeros(64)
    n = 0
    for coefs in _corpus_coefs(corpus, channel):
        total += coefs.sum(axis=0)
        n += coefs.shape[0]
    if n < 2:
        raise ValidationError(f"corpus yields {n} block(s); need at least 2")
    mean = total / n
    m2 = np.zeros(64)
    for coefs in _corpus_coefs(corpus, channel):
        m2 += ((coefs - mean) ** 2).sum(axis=0)
    delta = np.sqrt(m2 / (n - 1))
    return BandStats(channel=channel, delta=delta, n_blocks=n)


def _order_by_ratio(ratio: np.ndarray) -> np.ndarray:
    # lexsort: primary key last; zigzag position breaks ties.
    return np.lexsort((RASTER_TO_ZIGZAG, ratio))


def band_ratio(adv: BandStats, ben: BandStats) -> BandRatio:
    """Per-band ratio adv/benign with a floored denominator, plus the
    ascending-ratio band order."""
    if adv.channel != ben.channel:
        raise ValidationError(
            f"channel mismatch: {adv.channel!r} vs {ben.channel!r}"
        )
    ratio = adv.delta / np.maximum(ben.delta, DELTA_FLOOR)
    ratio = np.maximum(ratio, DELTA_FLOOR)
    return BandRatio(ratio=ratio, order=_order_by_ratio(ratio))


def merge_rgb_ratio(pairs: Sequence[tuple[BandStats, BandStats]]) -> BandRatio:
    """One shared ordering for the RGB channels: residual and benign
    deviations are averaged across R, G, B per band before the ratio."""
    channels = sorted(adv.channel for adv, _ in pairs)
    if channels != sorted((R, G, B)):
        raise ValidationError(f"expected one pair per RGB channel, got {channels}")
    for adv, ben in pairs:
        if adv.channel != ben.channel:
            raise ValidationError(
                f"channel mismatch within pair: {adv.channel!r} vs {ben.channel!r}"
            )
    mean_adv = np.mean([adv.delta for adv, _ in pairs], axis=0)
    mean_ben = np.mean([ben.delta for _, ben in pairs], axis=0)
    ratio = mean_adv / np.maximum(mean_ben, DELTA_FLOOR)
    ratio = np.maximum(ratio, DELTA_FLOOR)
    return BandRatio(ratio=ratio, order=_order_by_ratio(ratio))


def zigzag_band_order() -> np.ndarray:
    """Band order when every ratio ties: plain zigzag scanning order."""
    return ZIGZAG_TO_RASTER.copy()


def save_stats(stats: BandStats, path) -> None:
    Path(path).write_text(json.dumps(
        {
            "format": STATS_FORMAT,
            "channel": stats.channel,
            "n_blocks": int(stats.n_blocks),
            "delta": [float(d) for d in stats.delta],
        },
        indent=2,
    ) + "\n")


def load_stats(path) -> BandStats:
    doc = _load_json(path)
    if doc.get("format") != STATS_FORMAT:
        raise ValidationError(f"{path}: unsupported stats format")
    return BandStats(
        channel=doc.get("channel", ""),
        delta=np.array(doc.get("delta", []), dtype=np.float64),
        n_blocks=int(doc.get("n_blocks", 0)),
    )


def save_ratio(ratio: BandRatio, path) -> None:
    Path(path).write_text(json.dumps(
        {
            "format": RATIO_FORMAT,
            "ratio": [float(r) for r in ratio.ratio],
            "order": [int(b) for b in ratio.order],
        },
        indent=2,
    ) + "\n")


def load_ratio(path) -> BandRatio:
    doc = _load_json(path)
    if doc.get("format") != RATIO_FORMAT:
        raise ValidationError(f"{path}: unsupported ratio format")
    return BandRatio(
        ratio=np.array(doc.get("ratio", []), dtype=np.float64),
        order=np.array(doc.get("order", []), dtype=np.int64),
    )


def _load_json(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: expected a JSON object")
    return doc

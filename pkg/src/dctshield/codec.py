"""End-to-end defend/compress pipeline and the lossless coefficient archive.

The pipeline is: color path -> (4:2:0 subsampling on the YCbCr path) ->
8x8 blocks -> DCT -> quantize -> dequantize -> inverse DCT -> merge ->
inverse color -> clamp. ``defend`` is literally decode(encode(x)) so the
two are bit-identical by construction.

Entropy coding is intentionally absent; the archive stores raw quantized
levels so every intermediate stays inspectable.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ArchiveError, ValidationError
from .image import (
    RGB,
    YCBCR420,
    COLOR_PATHS,
    BlockGrid,
    ImageBuffer,
    merge_blocks,
    rgb_to_ycbcr,
    split_blocks,
    subsample_420,
    upsample_420,
    ycbcr_to_rgb,
)
from .quant import QuantTable, dequantize, quantize
from .transform import ZIGZAG_TO_RASTER, dct2, idct2
from .util import clamp_u8, psnr

STANDARD_JPEG = "standard-jpeg"
ARCHIVE_MAGIC = b"DSH1"

# Baseline JPEG example tables (row-major), used by the standard-table
# comparison configs.
STD_LUMA_RASTER = np.array(
    [
        16, 11, 10, 16, 24, 40, 51, 61,
        12, 12, 14, 19, 26, 58, 60, 55,
        14, 13, 16, 24, 40, 57, 69, 56,
        14, 17, 22, 29, 51, 87, 80, 62,
        18, 22, 37, 56, 68, 109, 103, 77,
        24, 35, 55, 64, 81, 104, 113, 92,
        49, 64, 78, 87, 103, 121, 120, 101,
        72, 92, 95, 98, 112, 100, 103, 99,
    ]
)
STD_CHROMA_RASTER = np.array(
    [
        17, 18, 24, 47, 99, 99, 99, 99,
        18, 21, 26, 66, 99, 99, 99, 99,
        24, 26, 56, 99, 99, 99, 99, 99,
        47, 66, 99, 99, 99, 99, 99, 99,
        99, 99, 99, 99, 99, 99, 99, 99,
        99, 99, 99, 99, 99, 99, 99, 99,
        99, 99, 99, 99, 99, 99, 99, 99,
        99, 99, 99, 99, 99, 99, 99, 99,
    ]
)


def table_from_raster(raster_steps) -> QuantTable:
    raster = np.asarray(raster_steps, dtype=np.int64)
    return QuantTable(raster[ZIGZAG_TO_RASTER])


def std_luma_table() -> QuantTable:
    return table_from_raster(STD_LUMA_RASTER)


def std_chroma_table() -> QuantTable:
    return table_from_raster(STD_CHROMA_RASTER)


@dataclass(frozen=True)
class CodecConfig:
    """One codec configuration: color path, table (or the standard-table
    token), quality factor, and the level-shift flag."""

    color_path: str = RGB
    table: QuantTable | str = STANDARD_JPEG
    quality: int = 50
    level_shift: bool = True

    def __post_init__(self):
        if self.color_path not in COLOR_PATHS:
            raise ValidationError(f"unknown color path {self.color_path!r}")
        if not 1 <= self.quality <= 100:
            raise ValidationError(f"quality must lie in [1, 100], got {self.quality}")
        if isinstance(self.table, str):
            if self.table != STANDARD_JPEG:
                raise ValidationError(f"unknown table token {self.table!r}")
        elif not isinstance(self.table, QuantTable):
            raise ValidationError("table must be a QuantTable or the standard-jpeg token")


def scale_table(table: QuantTable, quality: int) -> QuantTable:
    """Scale a table by the usual JPEG quality mapping: S = 5000/q below 50,
    200 - 2q at or above, step' = clamp(floor((step*S + 50) / 100), 1, 255)."""
    if not 1 <= quality <= 100:
        raise ValidationError(f"quality must lie in [1, 100], got {quality}")
    s = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    steps = np.floor((table.steps.astype(np.float64) * s + 50.0) / 100.0)
    return QuantTable(np.clip(steps, 1, 255).astype(np.int64))


def channel_tables(cfg: CodecConfig) -> list[QuantTable]:
    """Effective per-channel tables after quality scaling.

    A custom table applies unchanged to every channel (one shared table).
    The standard token selects the luma table for R, G, B, or Y and the
    chroma table for Cb and Cr.
    """
    if isinstance(cfg.table, QuantTable):
        t = scale_table(cfg.table, cfg.quality)
        return [t, t, t]
    luma = scale_table(std_luma_table(), cfg.quality)
    if cfg.color_path == YCBCR420:
        chroma = scale_table(std_chroma_table(), cfg.quality)
        return [luma, chroma, chroma]
    return [luma, luma, luma]


def config_hash(cfg: CodecConfig) -> bytes:
    doc = {
        "color_path": cfg.color_path,
        "quality": cfg.quality,
        "level_shift": cfg.level_shift,
        "table": cfg.table if isinstance(cfg.table, str)
        else [int(s) for s in cfg.table.steps],
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("ascii")
    return hashlib.sha256(blob).digest()


@dataclass(frozen=True)
class CoefArchive:
    """Quantized levels of one image plus everything needed to invert them."""

    width: int
    height: int
    color_path: str
    quality: int
    cfg_hash: bytes
    channels: tuple[np.ndarray, ...]  # per channel: (n_blocks, 64) int16, zigzag
    cfg: CodecConfig


def _plane_dims(color_path: str, width: int, height: int) -> list[tuple[int, int]]:
    if color_path == YCBCR420:
        cw, ch = (width + 1) // 2, (height + 1) // 2
        return [(width, height), (cw, ch), (cw, ch)]
    return [(width, height)] * 3


def _encode_plane(plane, table: QuantTable, level_shift: bool) -> np.ndarray:
    blocks = split_blocks(plane).blocks
    return quantize(dct2(blocks, level_shift=level_shift), table)


def _decode_plane(levels, table: QuantTable, width: int, height: int,
                  level_shift: bool) -> np.ndarray:
    blocks = idct2(dequantize(levels, table), level_shift=level_shift)
    grid = BlockGrid(
        blocks=blocks,
        orig_width=width,
        orig_height=height,
        pad_right=(-width) % 8,
        pad_bottom=(-height) % 8,
    )
    return merge_blocks(grid)


def encode(img: ImageBuffer, cfg: CodecConfig) -> CoefArchive:
    """Run the forward pipeline and capture the quantized levels."""
    tables = channel_tables(cfg)
    if cfg.color_path == YCBCR420:
        y, cb, cr = rgb_to_ycbcr(img)
        planes = [y, subsample_420(cb), subsample_420(cr)]
    else:
        planes = [img.plane(c) for c in range(3)]
    channels = tuple(
        _encode_plane(p, t, cfg.level_shift) for p, t in zip(planes, tables)
    )
    return CoefArchive(
        width=img.width,
        height=img.height,
        color_path=cfg.color_path,
        quality=cfg.quality,
        cfg_hash=config_hash(cfg),
        channels=channels,
        cfg=cfg,
    )


def decode(archive: CoefArchive) -> ImageBuffer:
    """Invert an archive back to pixels."""
    cfg = archive.cfg
    tables = channel_tables(cfg)
    dims = _plane_dims(archive.color_path, archive.width, archive.height)
    planes = [
        _decode_plane(levels, t, w, h, cfg.level_shift)
        for levels, t, (w, h) in zip(archive.channels, tables, dims)
    ]
    if archive.color_path == YCBCR420:
        cb = upsample_420(planes[1], archive.width, archive.height)
        cr = upsample_420(planes[2], archive.width, archive.height)
        return ycbcr_to_rgb(planes[0], cb, cr)
    return ImageBuffer(clamp_u8(np.stack(planes, axis=-1)))


def defend(img: ImageBuffer, cfg: CodecConfig) -> ImageBuffer:
    """Full perturbation-filtering pass; identical to decode(encode(img))."""
    return decode(encode(img, cfg))


def save_archive(archive: CoefArchive, path) -> None:
    Path(path).write_bytes(archive_to_bytes(archive))


def archive_to_bytes(archive: CoefArchive) -> bytes:
    color_code = 0 if archive.color_path == RGB else 1
    head = ARCHIVE_MAGIC + struct.pack(
        "<IIBB", archive.width, archive.height, color_code, archive.quality
    ) + archive.cfg_hash
    body = b"".join(
        np.ascontiguousarray(ch, dtype="<i2").tobytes() for ch in archive.channels
    )
    return head + body


def load_archive(source, cfg: CodecConfig) -> CoefArchive:
    """Parse an archive from a path or bytes, verifying it against cfg.

    The caller supplies the codec config because the file stores only its
    hash; any mismatch (or a corrupted header) fails without producing a
    partial image.
    """
    data = source if isinstance(source, (bytes, bytearray)) else Path(source).read_bytes()
    head_len = 4 + 4 + 4 + 1 + 1 + 32
    if len(data) < head_len or data[:4] != ARCHIVE_MAGIC:
        raise ArchiveError("bad archive: missing DSH1 header")
    width, height, color_code, quality = struct.unpack("<IIBB", data[4:14])
    stored_hash = data[14:46]
    if width < 1 or height < 1 or color_code not in (0, 1):
        raise ArchiveError("bad archive: corrupt header fields")
    color_path = RGB if color_code == 0 else YCBCR420
    if cfg.color_path != color_path or cfg.quality != quality:
        raise ArchiveError(
            "archive header disagrees with the supplied config "
            f"(path {color_path}, quality {quality})"
        )
    if config_hash(cfg) != stored_hash:
        raise ArchiveError("config hash mismatch: wrong table, quality, or flags")
    dims = _plane_dims(color_path, width, height)
    counts = [((w + 7) // 8) * ((h + 7) // 8) for w, h in dims]
    expected = sum(c * 64 * 2 for c in counts)
    if len(data) - head_len != expected:
        raise ArchiveError(
            f"bad archive: expected {expected} level bytes, found {len(data) - head_len}"
        )
    channels = []
    pos = head_len
    for c in counts:
        nbytes = c * 64 * 2
        levels = np.frombuffer(data[pos:pos + nbytes], dtype="<i2").reshape(c, 64)
        channels.append(levels.astype(np.int16))
        pos += nbytes
    return CoefArchive(
        width=width,
        height=height,
        color_path=color_path,
        quality=quality,
        cfg_hash=stored_hash,
        channels=tuple(channels),
        cfg=cfg,
    )


@dataclass(frozen=True)
class AblationRow:
    label: str
    color_path: str
    standard_table: bool
    quality: int
    mean_benign_psnr: float
    mean_suppression: float


def suppression(benign: ImageBuffer, adv: ImageBuffer, cfg: CodecConfig) -> float:
    """Fraction of perturbation energy removed by one defend pass:
    max(0, 1 - |D(adv) - D(benign)|^2 / |adv - benign|^2). A zero-energy
    pair counts as fully suppressed."""
    den = float(np.sum(
        (adv.pixels.astype(np.float64) - benign.pixels.astype(np.float64)) ** 2
    ))
    if den == 0.0:
        return 1.0
    da = defend(adv, cfg).pixels.astype(np.float64)
    db = defend(benign, cfg).pixels.astype(np.float64)
    num = float(np.sum((da - db) ** 2))
    return max(0.0, 1.0 - num / den)


def ablate(
    benign: list[ImageBuffer],
    adv: list[ImageBuffer],
    opt_table: QuantTable,
    std_quality: int = 75,
    opt_quality: int = 50,
    level_shift: bool = True,
) -> list[AblationRow]:
    """Compare the four codec configurations (standard/optimized table x
    YCbCr420/RGB path) on paired benign and perturbed corpora."""
    if len(benign) != len(adv) or not benign:
        raise ValidationError("ablation needs non-empty paired corpora")
    combos = [
        ("standard+ycbcr420", CodecConfig(YCBCR420, STANDARD_JPEG, std_quality, level_shift)),
        ("standard+rgb", CodecConfig(RGB, STANDARD_JPEG, std_quality, level_shift)),
        ("optimized+ycbcr420", CodecConfig(YCBCR420, opt_table, opt_quality, level_shift)),
        ("optimized+rgb", CodecConfig(RGB, opt_table, opt_quality, level_shift)),
    ]
    rows = []
    for label, cfg in combos:
        psnrs = [psnr(defend(b, cfg).pixels, b.pixels) for b in benign]
        sups = [suppression(b, a, cfg) for b, a in zip(benign, adv)]
        rows.append(AblationRow(
            label=label,
            color_path=cfg.color_path,
            standard_table=isinstance(cfg.table, str),
            quality=cfg.quality,
            mean_benign_psnr=float(np.mean(psnrs)),
            mean_suppression=float(np.mean(sups)),
        ))
    return rows


def with_quality(cfg: CodecConfig, quality: int) -> CodecConfig:
    return replace(cfg, quality=quality)

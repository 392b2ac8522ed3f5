"""Image buffers, color conversion, chroma subsampling, and 8x8 block handling.

Planes are plain 2-D float64 arrays in sample units. Color conversion uses
the full-range BT.601 matrix (the JPEG/JFIF convention). Padding is always
edge replication so that block and subsampling stages do not inject
artificial high-frequency energy.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import AlphaChannelError, ImageFormatError, ValidationError
from .util import clamp_u8, round_half_away

RGB = "rgb"
YCBCR420 = "ycbcr420"
COLOR_PATHS = (RGB, YCBCR420)

# Plane: 2-D float64 array of samples. Kept as a bare ndarray on purpose.
Plane = np.ndarray


@dataclass(frozen=True)
class ImageBuffer:
    """8-bit interleaved RGB image, shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ImageFormatError(f"expected (h, w, 3) pixel array, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ImageFormatError("image must be at least 1x1")
        if px.dtype != np.uint8:
            raise ImageFormatError(f"expected uint8 samples, got {px.dtype}")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def plane(self, channel: int) -> Plane:
        return self.pixels[:, :, channel].astype(np.float64)


@dataclass(frozen=True)
class BlockGrid:
    """Raster-ordered 8x8 blocks of a plane plus the padding metadata
    needed to reconstruct the exact original size."""

    blocks: np.ndarray  # (n, 8, 8) float64
    orig_width: int
    orig_height: int
    pad_right: int
    pad_bottom: int

    def __post_init__(self):
        bx = (self.orig_width + 7) // 8
        by = (self.orig_height + 7) // 8
        if self.blocks.shape != (bx * by, 8, 8):
            raise ValidationError(
                f"block count {self.blocks.shape} inconsistent with "
                f"{self.orig_width}x{self.orig_height} plane"
            )


# Full-range BT.601 (JFIF). Rows: Y, Cb, Cr; columns: R, G, B.
YCBCR_FROM_RGB = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
YCBCR_OFFSET = np.array([0.0, 128.0, 128.0])
RGB_FROM_YCBCR = np.array(
    [
        [1.0, 0.0, 1.402],
        [1.0, -0.344136, -0.714136],
        [1.0, 1.772, 0.0],
    ]
)


def rgb_to_ycbcr(img: ImageBuffer) -> tuple[Plane, Plane, Plane]:
    """Convert to full-range YCbCr planes, clamped to [0, 255]."""
    rgb = img.pixels.astype(np.float64)
    ycc = rgb @ YCBCR_FROM_RGB.T + YCBCR_OFFSET
    ycc = np.clip(ycc, 0.0, 255.0)
    return ycc[:, :, 0], ycc[:, :, 1], ycc[:, :, 2]


def ycbcr_to_rgb(y: Plane, cb: Plane, cr: Plane) -> ImageBuffer:
    """Inverse color conversion back to an 8-bit RGB image."""
    if y.shape != cb.shape or y.shape != cr.shape:
        raise ValidationError(
            f"plane dimensions differ: y={y.shape} cb={cb.shape} cr={cr.shape}"
        )
    ycc = np.stack([y, cb - 128.0, cr - 128.0], axis=-1)
    rgb = ycc @ RGB_FROM_YCBCR.T
    return ImageBuffer(clamp_u8(rgb))


def linear_rgb_to_ycbcr(r: Plane, g: Plane, b: Plane) -> tuple[Plane, Plane, Plane]:
    """Offset-free BT.601 transform for residual (difference) planes.

    Differences cancel the +128 chroma offset, so residuals convert with
    the linear part only and are never clamped.
    """
    stacked = np.stack([r, g, b], axis=-1)
    ycc = stacked @ YCBCR_FROM_RGB.T
    return ycc[:, :, 0], ycc[:, :, 1], ycc[:, :, 2]


def _pad_to_even(plane: Plane) -> Plane:
    h, w = plane.shape
    return np.pad(plane, ((0, h % 2), (0, w % 2)), mode="edge")


def box_mean_2x2(plane: Plane) -> Plane:
    """Unrounded 2x2 box average; odd dimensions edge-replicated first."""
    p = _pad_to_even(np.asarray(plane, dtype=np.float64))
    return (p[0::2, 0::2] + p[0::2, 1::2] + p[1::2, 0::2] + p[1::2, 1::2]) / 4.0


def subsample_420(plane: Plane) -> Plane:
    """4:2:0 chroma subsampling: rounded 2x2 box average, output
    ceil(w/2) x ceil(h/2)."""
    return round_half_away(box_mean_2x2(plane))


def upsample_420(plane: Plane, width: int, height: int) -> Plane:
    """Nearest-neighbor duplication back to the given luma dimensions."""
    up = np.repeat(np.repeat(plane, 2, axis=0), 2, axis=1)
    return up[:height, :width]


def split_blocks(plane: Plane) -> BlockGrid:
    """Partition a plane into raster-ordered 8x8 blocks, edge-replicating
    to multiples of 8."""
    p = np.asarray(plane, dtype=np.float64)
    h, w = p.shape
    pad_b = (-h) % 8
    pad_r = (-w) % 8
    padded = np.pad(p, ((0, pad_b), (0, pad_r)), mode="edge")
    ph, pw = padded.shape
    blocks = (
        padded.reshape(ph // 8, 8, pw // 8, 8)
        .transpose(0, 2, 1, 3)
        .reshape(-1, 8, 8)
    )
    return BlockGrid(blocks=blocks, orig_width=w, orig_height=h,
                     pad_right=pad_r, pad_bottom=pad_b)


def merge_blocks(grid: BlockGrid) -> Plane:
    """Reassemble a plane from its block grid, dropping the padding."""
    w, h = grid.orig_width, grid.orig_height
    bw = (w + grid.pad_right) // 8
    bh = (h + grid.pad_bottom) // 8
    padded = (
        grid.blocks.reshape(bh, bw, 8, 8)
        .transpose(0, 2, 1, 3)
        .reshape(bh * 8, bw * 8)
    )
    return padded[:h, :w]


def read_image(path) -> ImageBuffer:
    """Read a PNG or binary PPM (P6) image. Alpha channels are rejected."""
    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pnm"):
        return _read_ppm(path)
    try:
        im = Image.open(path)
        im.load()
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ImageFormatError(f"{path}: {exc}") from exc
    if im.mode in ("RGBA", "LA", "PA") or "transparency" in im.info:
        raise AlphaChannelError(f"{path}: images with alpha are not supported")
    if im.mode.startswith("I") or im.mode == "F":
        raise ImageFormatError(f"{path}: only 8-bit images are supported")
    if im.mode != "RGB":
        im = im.convert("RGB")
    return ImageBuffer(np.asarray(im, dtype=np.uint8))


def write_image(img: ImageBuffer, path) -> None:
    """Write PNG or binary PPM depending on the file extension."""
    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pnm"):
        _write_ppm(img, path)
        return
    Image.fromarray(img.pixels, mode="RGB").save(path, format="PNG")


_PPM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _read_ppm(path: Path) -> ImageBuffer:
    data = path.read_bytes()
    pos = 0
    fields = []
    for _ in range(4):
        m = _PPM_TOKEN.match(data, pos)
        if not m:
            raise ImageFormatError(f"{path}: truncated PPM header")
        fields.append(m.group(1))
        pos = m.end()
    if fields[0] != b"P6":
        raise ImageFormatError(f"{path}: not a binary PPM (P6) file")
    try:
        w, h, maxval = (int(f) for f in fields[1:])
    except ValueError as exc:
        raise ImageFormatError(f"{path}: bad PPM header") from exc
    if maxval != 255:
        raise ImageFormatError(f"{path}: only 8-bit PPM supported (maxval {maxval})")
    pos += 1  # single whitespace byte after maxval
    raster = data[pos:pos + w * h * 3]
    if len(raster) != w * h * 3:
        raise ImageFormatError(f"{path}: truncated PPM raster")
    return ImageBuffer(np.frombuffer(raster, dtype=np.uint8).reshape(h, w, 3).copy())


def _write_ppm(img: ImageBuffer, path: Path) -> None:
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    path.write_bytes(header + img.pixels.tobytes())

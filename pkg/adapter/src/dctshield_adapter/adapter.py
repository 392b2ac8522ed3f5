"""Thin binding between ML data pipelines and the dctshield command line.

Everything here marshals arrays to files and back; no numeric work is
reimplemented, so outputs are byte-identical to the CLI by construction.
Safe to call from multiple worker processes: every call runs in its own
temporary directory and the CLI is stateless.
"""

from __future__ import annotations

import json
import subprocess
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

DEFAULT_COMMAND = (sys.executable, "-m", "dctshield")


class AdapterError(RuntimeError):
    """The native side failed; carries its exit code and stderr."""

    def __init__(self, message, returncode=None, stderr=""):
        super().__init__(message)
        self.returncode = returncode
        self.stderr = stderr


@dataclass(frozen=True)
class AdapterConfig:
    """Mirror of the codec flags plus the command used to reach them.

    The native side is the single source of truth for validation; bad
    values surface as AdapterError with the CLI's message.
    """

    table: str = "standard-jpeg"  # table JSON path or the standard token
    color_path: str = "rgb"
    quality: int = 50
    level_shift: bool = True
    batch_size: int = 64
    command: tuple = DEFAULT_COMMAND


def _defend_args(cfg: AdapterConfig, src: Path, dst: Path) -> list:
    args = list(cfg.command) + [
        "defend",
        "--in", str(src),
        "--out", str(dst),
        "--table", str(cfg.table),
        "--color-path", cfg.color_path,
        "--quality", str(cfg.quality),
    ]
    if not cfg.level_shift:
        args.append("--no-level-shift")
    return args


def _check_image(arr) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise AdapterError(
            f"expected (h, w, 3) uint8 image, got {arr.shape} {arr.dtype}"
        )
    return arr


def _run_defend(batch: Sequence[np.ndarray], cfg: AdapterConfig) -> list[np.ndarray]:
    with tempfile.TemporaryDirectory(prefix="dctshield-adapter-") as tmp:
        src = Path(tmp) / "in"
        dst = Path(tmp) / "out"
        src.mkdir()
        names = []
        for i, arr in enumerate(batch):
            name = f"img{i:05d}.png"
            Image.fromarray(arr, mode="RGB").save(src / name)
            names.append(name)
        proc = subprocess.run(_defend_args(cfg, src, dst),
                              capture_output=True, text=True)
        if proc.returncode != 0:
            raise AdapterError(
                f"defend failed with exit code {proc.returncode}: {proc.stderr.strip()}",
                returncode=proc.returncode,
                stderr=proc.stderr,
            )
        out = []
        for name in names:
            with Image.open(dst / name) as im:
                out.append(np.asarray(im.convert("RGB"), dtype=np.uint8))
        return out


def defend_batch(images, cfg: AdapterConfig = AdapterConfig()):
    """Run the filtering codec over a batch of (h, w, 3) uint8 arrays.

    Accepts a list of arrays or one (n, h, w, 3) array and returns the
    same container kind. Output bytes match a direct CLI `defend` run on
    the same pixels.
    """
    stacked = isinstance(images, np.ndarray) and images.ndim == 4
    batch = [
        _check_image(a)
        for a in (images if not stacked else list(images))
    ]
    if not batch:
        return np.empty((0,)) if stacked else []
    out = []
    size = max(1, cfg.batch_size)
    for start in range(0, len(batch), size):
        out.extend(_run_defend(batch[start:start + size], cfg))
    return np.stack(out) if stacked else out


def mixed_loss_weights(xi: float) -> tuple[float, float]:
    """Weights (clean, augmented) for the two-term fine-tuning loss."""
    if not 0.0 <= xi <= 1.0:
        raise ValueError(f"xi must lie in [0, 1], got {xi}")
    return (xi, 1.0 - xi)


def read_manifest(path) -> dict:
    """Load an augmentation dataset manifest for a data loader."""
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    doc = json.loads(path.read_text())
    if doc.get("format") != 1:
        raise AdapterError(f"{path}: unsupported manifest format {doc.get('format')!r}")
    return doc

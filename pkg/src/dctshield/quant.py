"""Scalar quantization of coefficient blocks against a 64-step table.

Levels are ``round(C / QS)`` with half-away-from-zero ties. The optional
trace exposes the decomposition ``C = eta * QS + theta`` used to reason
about which perturbations survive quantization: theta lies in
[-QS/2, QS/2] with the upper endpoint reached only when C sits exactly on
a negative half-step multiple (a measure-zero case for real coefficient
data, kept consistent with the tie rule).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .transform import RASTER_TO_ZIGZAG, unzigzag, zigzag
from .util import round_half_away

TABLE_FORMAT = 1


@dataclass(frozen=True)
class QuantTable:
    """64 integer quantization steps, zigzag-indexed, each in [1, 255]."""

    steps: np.ndarray

    def __post_init__(self):
        steps = np.asarray(self.steps, dtype=np.int64)
        if steps.shape != (64,):
            raise ValidationError(f"expected 64 steps, got shape {steps.shape}")
        if steps.min() < 1 or steps.max() > 255:
            raise ValidationError("quantization steps must lie in [1, 255]")
        object.__setattr__(self, "steps", steps)

    @property
    def raster_steps(self) -> np.ndarray:
        """Steps reordered to row-major band indexing."""
        return self.steps[RASTER_TO_ZIGZAG]


@dataclass(frozen=True)
class QuantizationTrace:
    """Per-coefficient levels, remainders, and reconstructed values
    (all zigzag-ordered, matching the level vectors)."""

    eta: np.ndarray
    theta: np.ndarray
    recon: np.ndarray


def quantize(coefs: np.ndarray, table: QuantTable, return_trace: bool = False):
    """Quantize (..., 8, 8) coefficient blocks to (..., 64) zigzag level vectors."""
    zz = zigzag(np.asarray(coefs, dtype=np.float64))
    steps = table.steps.astype(np.float64)
    levels = round_half_away(zz / steps).astype(np.int16)
    if not return_trace:
        return levels
    recon = levels.astype(np.float64) * steps
    theta = zz - recon
    return levels, QuantizationTrace(eta=levels, theta=theta, recon=recon)


def dequantize(levels: np.ndarray, table: QuantTable) -> np.ndarray:
    """Map (..., 64) zigzag level vectors back to (..., 8, 8) coefficient blocks."""
    zz = np.asarray(levels, dtype=np.float64) * table.steps.astype(np.float64)
    return unzigzag(zz)


def removal_probability(rho: float, qs: int) -> float:
    """Probability that a perturbation of size rho leaves the quantized
    level unchanged, for a coefficient whose remainder is uniform over
    one step: 1 - |rho| / QS. Requires |rho| <= QS/2."""
    if qs < 1:
        raise ValidationError(f"quantization step must be >= 1, got {qs}")
    if abs(rho) > qs / 2.0:
        raise ValidationError(f"|rho|={abs(rho)} exceeds QS/2={qs / 2.0}")
    return 1.0 - abs(rho) / qs


def save_table(table: QuantTable, path) -> None:
    Path(path).write_text(json.dumps(
        {"format": TABLE_FORMAT, "zigzag_steps": [int(s) for s in table.steps]},
        indent=2,
    ) + "\n")


def load_table(path) -> QuantTable:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != TABLE_FORMAT:
        raise ValidationError(f"{path}: unsupported table format")
    steps = doc.get("zigzag_steps")
    if not isinstance(steps, list) or len(steps) != 64:
        raise ValidationError(f"{path}: zigzag_steps must list 64 integers")
    return QuantTable(np.array(steps))

"""Bounded synthetic perturbations and the frequency-domain magnitude bound.

Generators stand in for gradient-based attacks at desk scale: sign noise
(every sample moved by +/- the integerized amplitude), Gaussian noise, and
uniform noise. Streams derive from (seed, image index, channel) so batches
are reproducible under any parallel schedule.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .image import ImageBuffer
from .transform import dct2
from .util import DEFAULT_SEED, clamp_u8

SIGN = "sign"
GAUSSIAN = "gaussian"
UNIFORM = "uniform"
KINDS = (SIGN, GAUSSIAN, UNIFORM)

# Sigma for noisy-training augmentation when the caller does not choose one.
# This is a guess at a sensible strength (3% of dynamic range), not a tuned
# value; override it freely.
DEFAULT_SIGMA = 0.03 * 255.0


@dataclass(frozen=True)
class PerturbSpec:
    kind: str
    eps: float = 0.0
    sigma: float = DEFAULT_SIGMA
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown perturbation kind {self.kind!r}")
        if not 0.0 <= self.eps <= 0.125:
            raise ValidationError(f"eps must lie in [0, 0.125], got {self.eps}")
        if self.sigma < 0:
            raise ValidationError(f"sigma must be >= 0, got {self.sigma}")

    @property
    def amplitude(self) -> int:
        """Integer sample amplitude round(eps * 255)."""
        return int(np.floor(self.eps * 255.0 + 0.5))


@dataclass(frozen=True)
class PerturbResult:
    image: ImageBuffer
    # Residual actually stored in the output samples (perturbed - original).
    residual: np.ndarray  # (h, w, 3) int16
    # Injected noise before clamping; this is what frequency-domain bound
    # checks operate on.
    residual_preclamp: np.ndarray  # (h, w, 3) float64


def _channel_rng(seed: int, image_index: int, channel: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, image_index, channel]))


def _noise_plane(rng: np.random.Generator, spec: PerturbSpec, shape) -> np.ndarray:
    if spec.kind == SIGN:
        amp = float(spec.amplitude)
        return (rng.integers(0, 2, size=shape).astype(np.float64) * 2.0 - 1.0) * amp
    if spec.kind == GAUSSIAN:
        return rng.normal(0.0, spec.sigma, size=shape)
    # Uniform noise is drawn over the integerized amplitude so the stated
    # L-infinity budget round(eps*255) holds exactly.
    amp = float(spec.amplitude)
    return rng.uniform(-amp, amp, size=shape)


def apply(img: ImageBuffer, spec: PerturbSpec, image_index: int = 0) -> PerturbResult:
    """Perturb one image; deterministic given (spec.seed, image_index)."""
    h, w = img.height, img.width
    noise = np.empty((h, w, 3), dtype=np.float64)
    for c in range(3):
        rng = _channel_rng(spec.seed, image_index, c)
        noise[:, :, c] = _noise_plane(rng, spec, (h, w))
    orig = img.pixels.astype(np.float64)
    perturbed = clamp_u8(orig + noise)
    residual = perturbed.astype(np.int16) - img.pixels.astype(np.int16)
    return PerturbResult(
        image=ImageBuffer(perturbed),
        residual=residual,
        residual_preclamp=noise,
    )


@dataclass(frozen=True)
class BoundReport:
    """Measured per-band maxima of |DCT(residual)| against the analytic bound."""

    band_max: np.ndarray  # (8, 8) float64
    observed_max: float
    bound: float
    dc_worst_case: float  # DC coefficient of the all-equal-sign block
    trials: int


def verify_dct_bound(spec: PerturbSpec, trials: int, chunk: int = 65536) -> BoundReport:
    """Monte Carlo check that every DCT coefficient of a residual block
    stays within 8 * 255 * eps.

    Blocks are drawn at the continuous amplitude 255 * eps, the scale the
    bound is stated in. Only sign and uniform kinds are bounded; a
    violation raises, naming the band and the offending block.
    """
    if spec.kind not in (SIGN, UNIFORM):
        raise ValidationError("DCT bound verification needs a sign or uniform spec")
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    amplitude = 255.0 * spec.eps
    bound = 8.0 * amplitude
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x0DC7]))
    band_max = np.zeros((8, 8))
    tol = 1e-9 + 1e-12 * bound
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        if spec.kind == SIGN:
            blocks = (rng.integers(0, 2, size=(n, 8, 8)).astype(np.float64) * 2.0 - 1.0) * amplitude
        else:
            blocks = rng.uniform(-amplitude, amplitude, size=(n, 8, 8))
        coefs = np.abs(dct2(blocks, level_shift=False))
        worst = coefs.max(axis=0)
        flat = coefs.reshape(n, 64)
        peak = flat.max()
        if peak > bound + tol:
            idx = np.unravel_index(np.argmax(flat), flat.shape)
            band = (int(idx[1]) // 8, int(idx[1]) % 8)
            raise ValidationError(
                f"DCT bound violated at band {band}: |C|={peak:.9g} > {bound:.9g}; "
                f"residual block: {blocks[idx[0]].tolist()}"
            )
        band_max = np.maximum(band_max, worst)
        done += n
    worst_case = dct2(np.full((8, 8), amplitude), level_shift=False)
    return BoundReport(
        band_max=band_max,
        observed_max=float(band_max.max()),
        bound=bound,
        dc_worst_case=float(worst_case[0, 0]),
        trials=trials,
    )


def save_residual(residual: np.ndarray, path) -> None:
    """Store a signed 16-bit residual map as .npy."""
    res = np.asarray(residual)
    if res.dtype != np.int16:
        raise ValidationError(f"residual maps are int16, got {res.dtype}")
    np.save(Path(path), res)


def load_residual(path) -> np.ndarray:
    res = np.load(Path(path))
    if res.dtype != np.int16 or res.ndim != 3 or res.shape[2] != 3:
        raise ValidationError(f"{path}: expected (h, w, 3) int16 residual map")
    return res

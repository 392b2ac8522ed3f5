"""Noisy-training dataset export and the manifest a training loop consumes.

For every quality in the list, each corpus image is compressed with the
table scaled to that quality and then Gaussian noise is added to the
decompressed pixels (offline, once per export). The manifest records the
mixing weight for the two-term fine-tuning loss, the optimizer defaults,
and the model chain in which each stage starts from the previous one's
weights.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .codec import CodecConfig, config_hash, defend
from .errors import ValidationError
from .image import ImageBuffer, write_image
from .perturb import DEFAULT_SIGMA
from .util import DEFAULT_SEED, clamp_u8

MANIFEST_FORMAT = 1
MANIFEST_NAME = "manifest.json"

DEFAULT_QUALITIES = (90, 80, 70, 60, 50, 40, 30)
DEFAULT_XI = 0.9
DEFAULT_LEARNING_RATE = 0.005
DEFAULT_DECAY = 0.94
DEFAULT_EPOCHS = 14
DEFAULT_SERVING_SET = ("M", "M90", "M70", "M50", "M30")


@dataclass(frozen=True)
class AugmentManifest:
    xi: float
    qualities: tuple[int, ...]
    sigma: float
    seed: int
    codec: dict
    codec_hash: str
    learning_rate: float
    decay: float
    epochs: int
    chain: tuple[str, ...]
    serving_set: tuple[str, ...]
    noise_mode: str
    files: dict = field(default_factory=dict)  # relpath -> sha256 hex

    def to_json(self) -> dict:
        return {
            "format": MANIFEST_FORMAT,
            "xi": self.xi,
            "qualities": list(self.qualities),
            "sigma": self.sigma,
            "seed": self.seed,
            "codec": self.codec,
            "codec_hash": self.codec_hash,
            "training": {
                "learning_rate": self.learning_rate,
                "decay": self.decay,
                "epochs": self.epochs,
            },
            "chain": list(self.chain),
            "serving_set": list(self.serving_set),
            "noise_mode": self.noise_mode,
            "files": dict(sorted(self.files.items())),
        }


def _codec_doc(cfg: CodecConfig) -> dict:
    return {
        "color_path": cfg.color_path,
        "quality": cfg.quality,
        "level_shift": cfg.level_shift,
        "table": cfg.table if isinstance(cfg.table, str)
        else [int(s) for s in cfg.table.steps],
    }


def export(
    corpus: Sequence[tuple[str, ImageBuffer]],
    cfg: CodecConfig,
    out_dir,
    qualities: Sequence[int] = DEFAULT_QUALITIES,
    sigma: float = DEFAULT_SIGMA,
    xi: float = DEFAULT_XI,
    seed: int = DEFAULT_SEED,
    learning_rate: float = DEFAULT_LEARNING_RATE,
    decay: float = DEFAULT_DECAY,
    epochs: int = DEFAULT_EPOCHS,
) -> AugmentManifest:
    """Write one directory per quality plus the manifest; fully
    deterministic for a fixed (corpus, cfg, seed)."""
    if not corpus:
        raise ValidationError("export needs a non-empty corpus")
    qualities = tuple(int(q) for q in qualities)
    if list(qualities) != sorted(qualities, reverse=True):
        raise ValidationError("qualities must be sorted descending")
    if not 0.0 <= xi <= 1.0:
        raise ValidationError(f"xi must lie in [0, 1], got {xi}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {}
    for q in qualities:
        qdir = out_dir / f"q{q}"
        qdir.mkdir(exist_ok=True)
        q_cfg = replace(cfg, quality=q)
        for idx, (name, img) in enumerate(corpus):
            compressed = defend(img, q_cfg)
            out = compressed.pixels.astype(np.float64)
            if sigma > 0:
                rng = np.random.default_rng(np.random.SeedSequence([seed, q, idx]))
                out = out + rng.normal(0.0, sigma, size=out.shape)
            noisy = ImageBuffer(clamp_u8(out))
            rel = f"q{q}/{Path(name).stem}.png"
            dest = out_dir / rel
            write_image(noisy, dest)
            files[rel] = hashlib.sha256(dest.read_bytes()).hexdigest()
    manifest = AugmentManifest(
        xi=xi,
        qualities=qualities,
        sigma=sigma,
        seed=seed,
        codec=_codec_doc(cfg),
        codec_hash=config_hash(cfg).hex(),
        learning_rate=learning_rate,
        decay=decay,
        epochs=epochs,
        chain=("M",) + tuple(f"M{q}" for q in qualities),
        serving_set=tuple(s for s in DEFAULT_SERVING_SET
                          if s == "M" or int(s[1:]) in qualities),
        noise_mode="offline",
        files=files,
    )
    # Manifest lands last, once every content hash is final.
    (out_dir / MANIFEST_NAME).write_text(
        json.dumps(manifest.to_json(), indent=2) + "\n"
    )
    return manifest


def load_manifest(path) -> AugmentManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON: {exc}") from exc
    if doc.get("format") != MANIFEST_FORMAT:
        raise ValidationError(f"{path}: unsupported manifest format")
    training = doc.get("training", {})
    return AugmentManifest(
        xi=float(doc.get("xi", -1.0)),
        qualities=tuple(int(q) for q in doc.get("qualities", ())),
        sigma=float(doc.get("sigma", 0.0)),
        seed=int(doc.get("seed", 0)),
        codec=doc.get("codec", {}),
        codec_hash=str(doc.get("codec_hash", "")),
        learning_rate=float(training.get("learning_rate", 0.0)),
        decay=float(training.get("decay", 0.0)),
        epochs=int(training.get("epochs", 0)),
        chain=tuple(doc.get("chain", ())),
        serving_set=tuple(doc.get("serving_set", ())),
        noise_mode=str(doc.get("noise_mode", "")),
        files=dict(doc.get("files", {})),
    )


@dataclass(frozen=True)
class ManifestReport:
    ok: bool
    problems: tuple[str, ...]


def validate_manifest(manifest: AugmentManifest, root=None) -> ManifestReport:
    """Check manifest invariants, chain consistency, and (when a dataset
    root is given) that every referenced file exists with the recorded
    hash."""
    problems = []
    if not 0.0 <= manifest.xi <= 1.0:
        problems.append(f"xi: {manifest.xi} outside [0, 1]")
    if list(manifest.qualities) != sorted(manifest.qualities, reverse=True):
        problems.append(f"qualities: {list(manifest.qualities)} not sorted descending")
    expected_chain = ("M",) + tuple(f"M{q}" for q in manifest.qualities)
    if manifest.chain != expected_chain:
        problems.append(
            f"chain: {list(manifest.chain)} != expected {list(expected_chain)}"
        )
    if len(manifest.chain) != len(manifest.qualities) + 1:
        problems.append("chain: length must be qualities length + 1")
    for s in manifest.serving_set:
        if s != "M" and (not s.startswith("M") or not s[1:].isdigit()
                         or int(s[1:]) not in manifest.qualities):
            problems.append(f"serving_set: {s} has no matching quality")
    if manifest.noise_mode not in ("offline", "online"):
        problems.append(f"noise_mode: {manifest.noise_mode!r} unknown")
    for q in manifest.qualities:
        if not any(rel.startswith(f"q{q}/") for rel in manifest.files):
            problems.append(f"files: quality directory q{q} has no entries")
    if root is not None:
        root = Path(root)
        for q in manifest.qualities:
            if not (root / f"q{q}").is_dir():
                problems.append(f"files: missing quality directory q{q}")
        for rel, digest in sorted(manifest.files.items()):
            f = root / rel
            if not f.is_file():
                problems.append(f"files.{rel}: missing")
            elif hashlib.sha256(f.read_bytes()).hexdigest() != digest:
                problems.append(f"files.{rel}: content hash mismatch")
    return ManifestReport(ok=not problems, problems=tuple(problems))

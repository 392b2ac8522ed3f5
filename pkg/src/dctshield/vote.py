"""Ensemble aggregation of per-model confidence vectors.

Two rules: argmax of the elementwise mean (the default) and mode of the
per-model argmax votes. Tie-breaks are fixed so decisions are independent
of model order.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError

AVERAGE = "average-confidence"
MAJORITY = "majority-vote"

SCORE_SUM_TOL = 1e-6


@dataclass(frozen=True)
class ConfidenceVector:
    """One model's softmax output over the class labels."""

    model_id: str
    scores: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 1 or scores.size < 1:
            raise ValidationError("scores must be a non-empty 1-D vector")
        if np.any(scores < 0):
            raise ValidationError(f"{self.model_id}: scores must be non-negative")
        if abs(float(scores.sum()) - 1.0) > SCORE_SUM_TOL:
            raise ValidationError(
                f"{self.model_id}: scores sum to {scores.sum():.8f}, expected 1"
            )
        object.__setattr__(self, "scores", scores)


@dataclass(frozen=True)
class EnsembleDecision:
    label: int
    mean_score: float
    votes: tuple[int, ...]
    rule: str


def _check_pool(vectors: Sequence[ConfidenceVector]) -> int:
    if not vectors:
        raise ValidationError("ensemble needs at least one confidence vector")
    dim = vectors[0].scores.size
    for v in vectors:
        if v.scores.size != dim:
            raise ValidationError(
                f"label dimension mismatch: {v.model_id} has {v.scores.size}, expected {dim}"
            )
    return dim


def average_confidence(vectors: Sequence[ConfidenceVector]) -> EnsembleDecision:
    """Label with the highest mean confidence; ties go to the lowest index."""
    _check_pool(vectors)
    mean = np.mean([v.scores for v in vectors], axis=0)
    label = int(np.argmax(mean))  # argmax returns the first (lowest) index
    votes = tuple(int(np.argmax(v.scores)) for v in vectors)
    return EnsembleDecision(
        label=label,
        mean_score=float(mean[label]),
        votes=votes,
        rule=AVERAGE,
    )


def majority_vote(vectors: Sequence[ConfidenceVector]) -> EnsembleDecision:
    """Most-voted per-model argmax; vote ties resolved by higher mean
    confidence among the tied labels, then lowest index."""
    _check_pool(vectors)
    mean = np.mean([v.scores for v in vectors], axis=0)
    votes = tuple(int(np.argmax(v.scores)) for v in vectors)
    counts = Counter(votes)
    top = max(counts.values())
    tied = [label for label, c in counts.items() if c == top]
    label = min(tied, key=lambda lb: (-mean[lb], lb))
    return EnsembleDecision(
        label=int(label),
        mean_score=float(mean[label]),
        votes=votes,
        rule=MAJORITY,
    )


def read_scores_jsonl(path) -> tuple[str, dict]:
    """Read one model's score file: JSON lines of {"image": ..., "scores": [...]}.

    The model id is the file stem.
    """
    path = Path(path)
    model_id = path.stem
    table = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            name = doc["image"]
            scores = doc["scores"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValidationError(f"{path}:{lineno}: bad score line: {exc}") from exc
        table[name] = ConfidenceVector(model_id=model_id, scores=np.array(scores))
    return model_id, table


def vote_files(paths: Sequence, rule: str = AVERAGE) -> list[dict]:
    """Join per-model score files on image name and emit one decision per
    image. Images missing from any model are reported as incomplete, never
    silently dropped."""
    if rule not in (AVERAGE, MAJORITY):
        raise ValidationError(f"unknown rule {rule!r}")
    models = [read_scores_jsonl(p) for p in paths]
    if not models:
        raise ValidationError("need at least one score file")
    names = sorted({n for _, table in models for n in table})
    decide = average_confidence if rule == AVERAGE else majority_vote
    out = []
    for name in names:
        missing = [mid for mid, table in models if name not in table]
        if missing:
            out.append({"image": name, "incomplete": True, "missing": missing})
            continue
        decision = decide([table[name] for _, table in models])
        out.append({
            "image": name,
            "label": decision.label,
            "mean_score": decision.mean_score,
            "votes": list(decision.votes),
            "rule": decision.rule,
        })
    return out

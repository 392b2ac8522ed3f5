"""Band partitioning and the joint grid search for quantization steps.

Bands sort by ascending deviation ratio; a partition keeps the first T(k)
of them (the cumulative anti-diagonal counts of an 8x8 block) as the
gently quantized set and assigns the aggressive step to the rest. The
optimizer walks the full (k, qs_af) grid against a pluggable evaluator and
keeps the feasible point with the best defense efficiency.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .codec import CodecConfig, defend, suppression
from .errors import EvaluatorError, ValidationError
from .image import RGB, ImageBuffer
from .quant import QuantTable, save_table
from .stats import BandRatio, estimate_band_stats, merge_rgb_ratio
from .transform import ZIGZAG_TO_RASTER
from .util import psnr, round_half_away

DESIGN_FORMAT = 1

# Cumulative anti-diagonal sizes of an 8x8 block: T(k) for k = 1..15.
DIAGONAL_CUMULATIVE = (1, 3, 6, 10, 15, 21, 28, 36, 43, 49, 54, 58, 61, 63, 64)

K_RANGE = range(1, 16)
QS_AF_RANGE = range(1, 121, 5)

# Accuracy-decline proxy: a defended benign image below this PSNR counts
# as degraded.
PSNR_FLOOR_DB = 28.0

ACC_DEC_LIMIT = 0.01


@dataclass(frozen=True)
class BandPartition:
    """Split of the 64 bands into a gently quantized set (of_set) and an
    aggressively quantized set (af_set), sized by T(k)."""

    k: int
    of_set: frozenset
    af_set: frozenset

    def __post_init__(self):
        if not 1 <= self.k <= 15:
            raise ValidationError(f"k must lie in [1, 15], got {self.k}")
        full = self.of_set | self.af_set
        if full != frozenset(range(64)) or (self.of_set & self.af_set):
            raise ValidationError("of_set and af_set must partition 0..63")
        if 0 not in self.of_set:
            raise ValidationError("DC band must belong to of_set")
        if len(self.of_set) != DIAGONAL_CUMULATIVE[self.k - 1]:
            raise ValidationError(
                f"of_set size {len(self.of_set)} != T({self.k})"
            )


@dataclass(frozen=True)
class DesignConfig:
    """One candidate quantization design."""

    eps: float
    k: int
    qs_of: int
    qs_af: int

    def __post_init__(self):
        if not 1 <= self.k <= 15:
            raise ValidationError(f"k must lie in [1, 15], got {self.k}")
        if self.qs_of < 1 or self.qs_af < 1:
            raise ValidationError("quantization steps must be >= 1")


@dataclass(frozen=True)
class EvalReport:
    acc_dec: float
    def_eff: float
    metric: str | None = None
    infeasible: bool = False

    def __post_init__(self):
        for name, v in (("acc_dec", self.acc_dec), ("def_eff", self.def_eff)):
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class EvalContext:
    """Everything an evaluator needs about the grid point under test."""

    design: DesignConfig
    table: QuantTable
    codec: CodecConfig


@dataclass(frozen=True)
class GridPoint:
    k: int
    qs_af: int
    acc_dec: float
    def_eff: float


@dataclass(frozen=True)
class DesignResult:
    design: DesignConfig
    table: QuantTable
    report: EvalReport
    order: np.ndarray
    grid: tuple[GridPoint, ...] = field(default=())


def qs_of_from_eps(eps: float) -> int:
    """Gentle-band step from the perturbation budget: round(16 * 255 * eps),
    clamped into [1, 255]."""
    if not 0.0 < eps <= 0.125:
        raise ValidationError(f"eps must lie in (0, 0.125], got {eps}")
    step = int(round_half_away(16.0 * 255.0 * eps))
    return int(np.clip(step, 1, 255))


def build_partition(order, k: int) -> BandPartition:
    """Keep the first T(k) bands of the ascending-ratio order gentle.

    The DC band is always forced into the gentle set; when it is not
    already there, it replaces the highest-ratio member so the set size
    stays T(k).
    """
    if not 1 <= k <= 15:
        raise ValidationError(f"k must lie in [1, 15], got {k}")
    seq = order.order if isinstance(order, BandRatio) else np.asarray(order)
    if sorted(int(b) for b in seq) != list(range(64)):
        raise ValidationError("order must be a permutation of 0..63")
    size = DIAGONAL_CUMULATIVE[k - 1]
    of = [int(b) for b in seq[:size]]
    if 0 not in of:
        of[-1] = 0
    of_set = frozenset(of)
    return BandPartition(k=k, of_set=of_set, af_set=frozenset(range(64)) - of_set)


def build_table(partition: BandPartition, qs_of: int, qs_af: int) -> QuantTable:
    """Assign qs_of to the gentle set and qs_af to the rest."""
    raster = np.full(64, qs_af, dtype=np.int64)
    raster[list(partition.of_set)] = qs_of
    return QuantTable(raster[ZIGZAG_TO_RASTER])


def _residual_stack(benign: ImageBuffer, adv: ImageBuffer) -> np.ndarray:
    return adv.pixels.astype(np.float64) - benign.pixels.astype(np.float64)


def ratio_from_corpora(benign: Sequence[ImageBuffer],
                       adv: Sequence[ImageBuffer]) -> BandRatio:
    """Shared RGB band ordering from paired benign/perturbed corpora."""
    if len(benign) != len(adv) or not benign:
        raise ValidationError("need non-empty paired corpora")
    residuals = [_residual_stack(b, a) for b, a in zip(benign, adv)]
    pairs = []
    for ch in ("r", "g", "b"):
        pairs.append((
            estimate_band_stats(residuals, ch),
            estimate_band_stats(list(benign), ch),
        ))
    return merge_rgb_ratio(pairs)


def builtin_signal_evaluator(benign: Sequence[ImageBuffer],
                             adv: Sequence[ImageBuffer],
                             ctx: EvalContext) -> EvalReport:
    """Signal-level stand-in for a classifier-based evaluator.

    def_eff is the mean perturbation-energy suppression over pairs;
    acc_dec is the fraction of benign images whose defended PSNR falls
    below the floor.
    """
    if len(benign) != len(adv) or not benign:
        raise EvaluatorError("builtin evaluator needs non-empty paired corpora")
    sups = [suppression(b, a, ctx.codec) for b, a in zip(benign, adv)]
    degraded = [
        psnr(defend(b, ctx.codec).pixels, b.pixels) < PSNR_FLOOR_DB for b in benign
    ]
    return EvalReport(
        acc_dec=float(np.mean(degraded)),
        def_eff=float(np.mean(sups)),
        metric="signal-proxy",
    )


def make_external_evaluator(command, benign_dir, adv_dir) -> Callable:
    """Wrap a user command into an evaluator.

    The command is invoked as ``cmd --benign-dir D --adv-dir D --table P``
    and must print one JSON line {"acc_dec": f, "def_eff": f} on stdout.
    A nonzero exit fails the grid point being evaluated.
    """
    argv = shlex.split(command) if isinstance(command, str) else list(command)

    def evaluator(benign, adv, ctx: EvalContext) -> EvalReport:
        with tempfile.TemporaryDirectory(prefix="dctshield-eval-") as tmp:
            table_path = Path(tmp) / "table.json"
            save_table(ctx.table, table_path)
            proc = subprocess.run(
                argv + [
                    "--benign-dir", str(benign_dir),
                    "--adv-dir", str(adv_dir),
                    "--table", str(table_path),
                ],
                capture_output=True,
                text=True,
            )
        if proc.returncode != 0:
            raise EvaluatorError(
                f"external evaluator exited {proc.returncode}: {proc.stderr.strip()}",
            )
        line = proc.stdout.strip().splitlines()
        try:
            doc = json.loads(line[0]) if line else {}
            return EvalReport(
                acc_dec=float(doc["acc_dec"]),
                def_eff=float(doc["def_eff"]),
                metric=doc.get("metric"),
            )
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise EvaluatorError(
                f"external evaluator produced unparseable output: {exc}"
            ) from exc

    return evaluator


def optimize(
    benign: Sequence[ImageBuffer],
    adv: Sequence[ImageBuffer],
    eps: float,
    evaluator: Callable,
    order: BandRatio | np.ndarray | None = None,
    color_path: str = RGB,
    level_shift: bool = True,
    jobs: int | None = None,
) -> DesignResult:
    """Exhaustive search over k in 1..15 and qs_af in {1, 6, ..., 116}.

    Returns the feasible point (acc_dec < 1%) with maximal def_eff, ties
    broken by smaller qs_af then smaller k. When nothing is feasible the
    point with minimal acc_dec is returned with the report flagged.
    """
    if not benign or not adv:
        raise ValidationError("optimizer needs non-empty corpora")
    if order is None:
        order = ratio_from_corpora(benign, adv)
    order_seq = order.order if isinstance(order, BandRatio) else np.asarray(order)
    qs_of = qs_of_from_eps(eps)

    points = [(k, qs_af) for k in K_RANGE for qs_af in QS_AF_RANGE]

    def run_point(point):
        k, qs_af = point
        design = DesignConfig(eps=eps, k=k, qs_of=qs_of, qs_af=qs_af)
        table = build_table(build_partition(order_seq, k), qs_of, qs_af)
        ctx = EvalContext(
            design=design,
            table=table,
            codec=CodecConfig(color_path, table, 50, level_shift),
        )
        try:
            report = evaluator(benign, adv, ctx)
        except EvaluatorError as exc:
            raise EvaluatorError(
                f"grid point k={k}, qs_af={qs_af}: {exc}", k=k, qs_af=qs_af
            ) from exc
        return GridPoint(k=k, qs_af=qs_af, acc_dec=report.acc_dec,
                         def_eff=report.def_eff)

    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            grid = list(pool.map(run_point, points))
    else:
        grid = [run_point(p) for p in points]

    feasible = [g for g in grid if g.acc_dec < ACC_DEC_LIMIT]
    if feasible:
        best = min(feasible, key=lambda g: (-g.def_eff, g.qs_af, g.k))
        report = EvalReport(acc_dec=best.acc_dec, def_eff=best.def_eff)
    else:
        best = min(grid, key=lambda g: (g.acc_dec, -g.def_eff, g.qs_af, g.k))
        report = EvalReport(acc_dec=best.acc_dec, def_eff=best.def_eff,
                            infeasible=True)
    design = DesignConfig(eps=eps, k=best.k, qs_of=qs_of, qs_af=best.qs_af)
    table = build_table(build_partition(order_seq, best.k), qs_of, best.qs_af)
    return DesignResult(
        design=design,
        table=table,
        report=report,
        order=np.asarray(order_seq, dtype=np.int64),
        grid=tuple(grid),
    )


def save_design(result: DesignResult, path) -> None:
    doc = {
        "format": DESIGN_FORMAT,
        "eps": result.design.eps,
        "k": result.design.k,
        "qs_of": result.design.qs_of,
        "qs_af": result.design.qs_af,
        "order": [int(b) for b in result.order],
        "report": {
            "acc_dec": result.report.acc_dec,
            "def_eff": result.report.def_eff,
            "metric": result.report.metric,
            "infeasible": result.report.infeasible,
        },
        "grid": [
            {"k": g.k, "qs_af": g.qs_af, "acc_dec": g.acc_dec, "def_eff": g.def_eff}
            for g in result.grid
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_design(path) -> DesignResult:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON: {exc}") from exc
    if doc.get("format") != DESIGN_FORMAT:
        raise ValidationError(f"{path}: unsupported design format")
    design = DesignConfig(
        eps=float(doc["eps"]), k=int(doc["k"]),
        qs_of=int(doc["qs_of"]), qs_af=int(doc["qs_af"]),
    )
    order = np.array(doc["order"], dtype=np.int64)
    rep = doc.get("report", {})
    report = EvalReport(
        acc_dec=float(rep.get("acc_dec", 0.0)),
        def_eff=float(rep.get("def_eff", 0.0)),
        metric=rep.get("metric"),
        infeasible=bool(rep.get("infeasible", False)),
    )
    table = build_table(
        build_partition(order, design.k), design.qs_of, design.qs_af
    )
    grid = tuple(
        GridPoint(k=int(g["k"]), qs_af=int(g["qs_af"]),
                  acc_dec=float(g["acc_dec"]), def_eff=float(g["def_eff"]))
        for g in doc.get("grid", [])
    )
    return DesignResult(design=design, table=table, report=report,
                        order=order, grid=grid)

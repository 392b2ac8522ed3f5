"""Defensive blockwise-DCT image compression toolkit.

Removes bounded pixel perturbations by requantizing 8x8 DCT coefficients
with a table designed from corpus frequency statistics, exports
noisy-training augmentation datasets, and aggregates multi-model
predictions by confidence voting.
"""

from .augment import AugmentManifest, export, load_manifest, validate_manifest
from .codec import (
    CodecConfig,
    CoefArchive,
    STANDARD_JPEG,
    ablate,
    decode,
    defend,
    encode,
    load_archive,
    save_archive,
    scale_table,
)
from .design import (
    BandPartition,
    DesignConfig,
    DesignResult,
    EvalReport,
    build_partition,
    build_table,
    builtin_signal_evaluator,
    optimize,
    qs_of_from_eps,
)
from .errors import (
    AlphaChannelError,
    ArchiveError,
    DctShieldError,
    EvaluatorError,
    ImageFormatError,
    UsageError,
    ValidationError,
)
from .image import (
    RGB,
    YCBCR420,
    BlockGrid,
    ImageBuffer,
    merge_blocks,
    read_image,
    rgb_to_ycbcr,
    split_blocks,
    subsample_420,
    write_image,
    ycbcr_to_rgb,
)
from .perturb import PerturbSpec, apply, verify_dct_bound
from .quant import (
    QuantTable,
    QuantizationTrace,
    dequantize,
    load_table,
    quantize,
    removal_probability,
    save_table,
)
from .stats import (
    BandRatio,
    BandStats,
    band_ratio,
    estimate_band_stats,
    merge_rgb_ratio,
)
from .transform import dct2, idct2, unzigzag, zigzag
from .vote import (
    ConfidenceVector,
    EnsembleDecision,
    average_confidence,
    majority_vote,
    vote_files,
)

__version__ = "0.1.0"

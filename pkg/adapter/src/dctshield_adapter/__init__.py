from .adapter import (
    AdapterConfig,
    AdapterError,
    defend_batch,
    mixed_loss_weights,
    read_manifest,
)

__version__ = "0.1.0"

"""Position-map regression network, masked loss and training."""

from .dataset import make_sample, synthetic_dataset
from .layers import ShapeError, conv_forward, conv_transpose_forward
from .mask import default_weight_mask
from .network import (
    CheckpointError,
    Network,
    NetworkSpec,
    forward,
    load_checkpoint,
    read_checkpoint,
    residual_block_forward,
    save_checkpoint,
    write_checkpoint,
)
from .training import (
    NonFiniteLossError,
    Sample,
    TrainConfig,
    TrainingError,
    TrainResult,
    backward,
    train,
    weighted_loss,
)

__all__ = [
    "CheckpointError",
    "Network",
    "NetworkSpec",
    "NonFiniteLossError",
    "Sample",
    "ShapeError",
    "TrainConfig",
    "TrainResult",
    "TrainingError",
    "backward",
    "conv_forward",
    "conv_transpose_forward",
    "default_weight_mask",
    "forward",
    "load_checkpoint",
    "make_sample",
    "read_checkpoint",
    "residual_block_forward",
    "save_checkpoint",
    "synthetic_dataset",
    "train",
    "weighted_loss",
    "write_checkpoint",
]

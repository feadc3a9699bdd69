"""Dual color-space (RGB + YCbCr) image dehazing toolkit."""

__version__ = "0.1.0"

from .backbone import AblationFlags, DualSpaceDehazeNet, ModelConfig, count_params
from .losses import LossWeights
from .trainer import TrainConfig

__all__ = [
    "AblationFlags",
    "DualSpaceDehazeNet",
    "ModelConfig",
    "LossWeights",
    "TrainConfig",
    "count_params",
    "__version__",
]

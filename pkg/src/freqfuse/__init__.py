"""Frequency-decomposed infrared/visible feature extraction with cross-modal
reconstruction, on a small verifiable tensor core with reverse-mode gradients."""

from . import config, dct, encoder, mrm, tensor, training, verify
from .errors import (ConfigError, FdtError, FreqfuseError, GraphError,
                     NonFiniteError, ShapeError, TrainingDivergedError)

__version__ = "0.1.0"

__all__ = [
    "tensor", "dct", "encoder", "mrm", "training", "verify", "config",
    "FreqfuseError", "ShapeError", "NonFiniteError", "GraphError",
    "ConfigError", "FdtError", "TrainingDivergedError", "__version__",
]

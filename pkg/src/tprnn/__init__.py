"""Multi-scale pyramidal recurrent forecaster with a taped autodiff core."""

__version__ = "0.1.0"

from .errors import (
    CheckpointChecksumError,
    CheckpointError,
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ConfigError,
    DataError,
    DimensionError,
    GraphError,
    TprnnError,
    TrainingError,
)
from .tensor import Tensor, backward, clear_tape, grad_check, no_grad


def __getattr__(name):
    # heavier submodules load lazily so `import tprnn` stays cheap
    if name in ("TPRNN", "ModelConfig", "init_params"):
        from . import model
        return getattr(model, name)
    if name in ("TrainConfig", "fit", "evaluate"):
        from . import training
        return getattr(training, name)
    raise AttributeError(f"module 'tprnn' has no attribute '{name}'")


__all__ = [
    "Tensor",
    "backward",
    "clear_tape",
    "grad_check",
    "no_grad",
    "TprnnError",
    "DimensionError",
    "ConfigError",
    "GraphError",
    "DataError",
    "TrainingError",
    "CheckpointError",
    "CheckpointVersionError",
    "CheckpointShapeError",
    "CheckpointTruncatedError",
    "CheckpointChecksumError",
    "__version__",
]

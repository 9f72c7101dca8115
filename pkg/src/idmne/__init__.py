"""Semi-supervised domain adaptation with inter-domain mixup and
neighborhood expansion, on a small numpy autodiff core."""

from idmne.errors import (
    CheckpointError,
    ConfigError,
    DegenerateInputError,
    DimensionError,
    NumericError,
)

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "ConfigError",
    "DegenerateInputError",
    "DimensionError",
    "NumericError",
    "__version__",
]

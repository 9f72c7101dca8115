class DimensionError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


class DegenerateInputError(NumericError):
    """Raised when a feature vector is too close to zero to normalize."""


class ConfigError(ValueError):
    pass


class CheckpointError(ValueError):
    """Unreadable, corrupt or version-mismatched checkpoint file."""

"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Raised when tensor or grid shapes are incompatible."""


class ConfigurationError(ValueError):
    """Raised for invalid configuration values or mismatched model/input sizes."""


class UnsupportedFeatureError(RuntimeError):
    """Raised when an operation is requested from a component that cannot provide it."""


class CheckpointError(RuntimeError):
    """Raised when a checkpoint file is corrupt, truncated or of the wrong version."""


class EnvironmentFault(RuntimeError):
    """Raised (or flagged) when the simulator receives non-finite input."""

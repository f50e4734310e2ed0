"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value or unknown configuration key."""


class DimensionError(ValueError):
    """Tensor shape does not match what a layer expects."""


class StateError(RuntimeError):
    """Operation called in the wrong lifecycle state."""


class NumericError(ArithmeticError):
    """A NaN or infinite value appeared where a finite one is required."""

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot or {}

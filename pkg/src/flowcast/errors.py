"""Shared exception types and CLI exit codes."""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DIVERGED = 4


class ShapeMismatchError(ValueError):
    """Operands with incompatible grid shapes."""


class ConfigError(ValueError):
    """Invalid run configuration (bad key, bad value, inconsistent fields)."""


class FrameIOError(OSError):
    """Unreadable, malformed, or mismatched image file."""


class DivergenceError(ArithmeticError):
    """Optimization produced a non-finite loss or gradient."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace

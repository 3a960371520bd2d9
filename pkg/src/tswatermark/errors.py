"""Exception hierarchy shared by all modules.

The CLI maps each family to a process exit code.
"""


class WatermarkError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ConfigError(WatermarkError, ValueError):
    """Invalid configuration or usage."""

    exit_code = 1


class DataError(WatermarkError, ValueError):
    """Malformed input data or a failed validation check."""

    exit_code = 2


class FingerprintError(DataError):
    """A watermark book or plan was used with a different encoder."""


class NumericError(WatermarkError, ArithmeticError):
    """Non-finite values or an ill-posed linear system."""

    exit_code = 3

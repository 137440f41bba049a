"""Exception hierarchy shared across the toolkit.

Exit-code mapping used by the CLI: ConfigError -> 2, DataError -> 3,
NumericError / TrainingError -> 4.
"""


class SensekitError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(SensekitError):
    """Invalid configuration or usage (bad parameter, unrealizable filter, ...)."""


class DataError(SensekitError):
    """Malformed or incompatible data (missing class, label mismatch, ...)."""


class NumericError(SensekitError):
    """Non-finite values where finite ones are required."""


class TrainingError(NumericError):
    """Training diverged (non-finite loss); carries the offending epoch."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch

"""Exception types shared across the package."""


class CvaeadError(Exception):
    """Base class for all package errors."""


class ShapeError(CvaeadError, ValueError):
    """Array dimensions do not match what an operation expects."""


class ConfigError(CvaeadError, ValueError):
    """Invalid configuration value, key, or file."""


class TrainingDivergedError(CvaeadError, RuntimeError):
    """Loss became NaN/Inf during training.

    Carries the epoch index at which divergence was detected.
    """

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


class UndefinedAucError(CvaeadError, ValueError):
    """AUC requested for a label set containing only one class."""


class FileFormatError(CvaeadError, ValueError):
    """A data/score/report file failed to parse; message names file and line."""


class NumericError(CvaeadError, ArithmeticError):
    """An operation produced non-finite values."""

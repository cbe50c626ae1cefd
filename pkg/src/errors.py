"""
Exception hierarchy for matteforge

Every error carries the process exit code the CLI reports for it.
"""


class MatteForgeError(Exception):
    """Base class for all matteforge errors"""

    exit_code = 1


class UsageError(MatteForgeError):
    """Bad command-line usage or invalid configuration"""

    exit_code = 1


class DataError(MatteForgeError):
    """Unreadable, missing or inconsistent input data"""

    exit_code = 2


class DimensionError(DataError, ValueError):
    """Tensor or buffer shapes do not line up"""


class UnsupportedDepthError(DataError):
    """PNG file with a bit depth other than 8"""


class CheckpointError(DataError):
    """Checkpoint archive is missing, truncated or has the wrong magic/version"""


class EmptyRegionError(DataError, ValueError):
    """A loss or metric was asked to average over an empty unknown region"""


class TrimapError(DataError, ValueError):
    """Invalid trimap operation parameters"""


class NumericalError(MatteForgeError):
    """NaN or Inf produced during a forward or backward pass"""

    exit_code = 3

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step

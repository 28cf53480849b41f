"""Exception hierarchy.

The CLI maps these onto exit codes: configuration errors exit 1, data
errors exit 2 and divergence exits 3.
"""


class NNLFTError(Exception):
    """Base class for all package errors."""


class ConfigError(NNLFTError, ValueError):
    """Invalid hyperparameter, ratio, policy or other configuration value."""


class DataError(NNLFTError):
    """Problem with input data (parsing, ranges, bounds)."""


class ParseError(DataError, ValueError):
    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class BoundsError(DataError, IndexError):
    """Tensor index outside the declared shape."""


class RangeError(DataError, ValueError):
    """Scalar value outside its admissible interval."""


class EvaluationError(DataError, ValueError):
    """Metric requested over an empty entry set."""


class DivergenceError(NNLFTError, FloatingPointError):
    """Training produced a non-finite parameter or velocity."""

    def __init__(self, message, entry=None, epoch=None):
        super().__init__(message)
        self.entry = entry
        self.epoch = epoch

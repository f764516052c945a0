"""Exception types raised across the package."""


class SSMDenoiseError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(SSMDenoiseError, ValueError):
    pass


class NonDiagonalizableError(SSMDenoiseError, ValueError):
    pass


class ShapeMismatchError(SSMDenoiseError, ValueError):
    pass


class AlignmentError(SSMDenoiseError, ValueError):
    """Signal or chunk length is not a multiple of the required factor."""


class CostOverflowError(SSMDenoiseError, OverflowError):
    pass


class ConfigError(SSMDenoiseError, ValueError):
    pass


class WeightFileError(SSMDenoiseError, ValueError):
    """Malformed or truncated weight file."""


class VersionMismatchError(WeightFileError):
    pass


class AudioFormatError(SSMDenoiseError, ValueError):
    pass


class SilentSignalError(SSMDenoiseError, ValueError):
    pass


class DivergenceError(SSMDenoiseError, FloatingPointError):
    def __init__(self, step, loss):
        super().__init__(f"loss became non-finite ({loss}) at step {step}")
        self.step = step
        self.loss = loss

"""Exception types shared across the package.

The split matters for the CLI: input/configuration problems exit with
code 1, numerical failures with code 2.
"""


class RdriskError(Exception):
    """Base class for package errors."""


class DataError(RdriskError, ValueError):
    """Malformed input data or invalid configuration."""


class EmptyArmError(RdriskError, ValueError):
    """A bandwidth window left one side of the threshold without records."""


class UnidentifiedError(RdriskError, ArithmeticError):
    """An estimator's defining equation has no solution on this dataset."""


class SamplerError(RdriskError, RuntimeError):
    """The MCMC engine could not start or made no progress."""


class DgpOverflowError(RdriskError, RuntimeError):
    """A simulated scenario produced too many capped outcome probabilities."""

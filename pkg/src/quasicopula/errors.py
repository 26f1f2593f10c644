"""Typed errors raised by the quasi-copula library.

Fitting code needs to distinguish invalid inputs from numerical trouble,
so domain guards raise these instead of letting NaNs propagate.
"""


class QuasiCopulaError(Exception):
    """Base class for all library errors."""


class DomainError(QuasiCopulaError):
    """A value lies outside the support or mean domain of a family."""


class ParameterError(QuasiCopulaError):
    """A distribution or covariance parameter violates its admissible range."""


class UnsupportedFamilyError(QuasiCopulaError):
    """Operation requested for a family that only supports sampling."""


class UnsupportedCovarianceError(QuasiCopulaError):
    """Operation requested for a covariance kind that does not define it."""


class DegenerateError(QuasiCopulaError):
    """A quantity that must be positive collapsed to zero (e.g. perfect fit)."""


class TruncationError(QuasiCopulaError):
    """A truncated discrete enumeration failed to cover the required mass."""


class NumericError(QuasiCopulaError):
    """A numerical routine (root finder, factorization) failed unexpectedly."""


class DesignError(QuasiCopulaError):
    """The stacked design matrix is rank deficient or inconsistent."""


class InitError(QuasiCopulaError):
    """Initialization (independence-model IRLS) failed to converge."""


class NestingError(QuasiCopulaError):
    """Likelihood-ratio inputs are not nested (full loglik below null)."""


class DataError(QuasiCopulaError):
    """A data file could not be parsed; the message names the offending row."""

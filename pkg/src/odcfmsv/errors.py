"""Exception taxonomy shared across the package.

Numerical failures (decompositions, degenerate variances, sampler
breakdowns) are kept distinct from data problems so the CLI can map them
to different exit codes.
"""


class OdcfmsvError(Exception):
    """Base class for all package errors."""


class DataError(OdcfmsvError):
    """Malformed or inconsistent input data (CSV ingestion, shapes)."""


class ConfigError(OdcfmsvError):
    """Invalid configuration or argument combination."""


class NumericalError(OdcfmsvError):
    """Numerical failure during computation or sampling."""


class NotSpdError(NumericalError):
    """Matrix expected to be symmetric positive definite is not.

    Carries the index of the first failing Cholesky pivot when known.
    """

    def __init__(self, message: str, pivot: int | None = None):
        super().__init__(message)
        self.pivot = pivot


class NearSingularError(NumericalError):
    """Eigenvalue (or diagonal entry) below the configured floor."""


class SamplerError(NumericalError):
    """A Monte Carlo routine exhausted its iteration budget."""

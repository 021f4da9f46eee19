"""Exception hierarchy shared by all estimators and the CLI.

Two families matter for exit codes: input problems (malformed or
out-of-domain data, CLI exit 2) and statistical degeneracies (valid input
on which the requested estimator is undefined, CLI exit 3).
"""


class DeltaMetricsError(Exception):
    """Base class for all package errors."""


class InputDomainError(DeltaMetricsError, ValueError):
    """Input is malformed or outside the documented domain (exit 2)."""


class InsufficientDataError(DeltaMetricsError):
    """Too few observations/clusters for the requested estimator (exit 3)."""


class DegenerateDataError(DeltaMetricsError):
    """Data is statistically degenerate for the method (exit 3).

    Examples: zero denominator mean in a ratio, Fieller's g >= 1,
    singular metric covariance in GLS.
    """


class FiellerDegenerateError(DegenerateDataError):
    """Fieller's quadratic does not invert to a bounded interval (g >= 1)."""

"""Exception hierarchy shared by all modules."""


class SSEMError(Exception):
    """Base class for every error raised by the package."""


class ShapeError(SSEMError, ValueError):
    """Array length or dimension does not match the shell grid."""


class DomainError(SSEMError, ValueError):
    """An argument lies outside the domain of a formula."""


class ConfigurationError(SSEMError, ValueError):
    """Invalid or unknown configuration value."""


class IntegrationError(SSEMError, ArithmeticError):
    """Non-finite value produced while integrating.

    Attributes
    ----------
    t : float
        Time (years) at the start of the failing step.
    index : int
        Flat index of the first offending state entry.
    """

    def __init__(self, message, t=float("nan"), index=-1):
        super().__init__(f"{message} (t={t:g} yr, index={index})")
        self.t = t
        self.index = index


class CovarianceError(SSEMError, ArithmeticError):
    """Covariance matrix could not be conditioned or factorised.

    ``minor`` is the 1-based leading-minor index that failed, or -1.
    """

    def __init__(self, message, minor=-1):
        super().__init__(f"{message} (leading minor {minor})" if minor >= 0 else message)
        self.minor = minor


class InsufficientDataError(SSEMError, ValueError):
    """Too few samples for the requested statistic."""


class EmptyDataError(SSEMError, ValueError):
    """Histogram or series carries no usable data."""


class DegenerateFitError(SSEMError, ValueError):
    """Sample has zero variance, so no distribution can be fitted."""


class MissingArtifactError(SSEMError, FileNotFoundError):
    """An upstream file required by a CLI command does not exist."""

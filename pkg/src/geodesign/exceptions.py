"""Exception types shared across the package."""


class GeodesignError(Exception):
    """Base class for all package-specific errors."""


class ParameterDomainError(GeodesignError, ValueError):
    """A parameter lies outside its mathematical domain."""


class ConditioningError(GeodesignError):
    """A covariance matrix could not be factorised even after jitter escalation."""

    def __init__(self, message, min_distance=None):
        super().__init__(message)
        self.min_distance = min_distance


class SimulationDomainError(GeodesignError):
    """Forward simulation produced values outside the supported range."""


class FitFailureError(GeodesignError):
    """Posterior mode search did not converge within the restart budget.

    Carries the best iterate seen so callers can inspect or reuse it.
    """

    def __init__(self, message, best_theta=None, best_value=None):
        super().__init__(message)
        self.best_theta = best_theta
        self.best_value = best_value


class EvaluationError(GeodesignError):
    """Too many inner failures while estimating an expected loss."""


class UndefinedEfficiencyError(GeodesignError):
    """Efficiency ratio is undefined because the reference loss sum is zero."""


class ConfigError(GeodesignError):
    """Configuration file is missing, malformed or internally inconsistent."""


class IngestionError(GeodesignError):
    """Station data file is malformed."""


class SearchError(GeodesignError):
    """Design search could not produce any evaluated design."""

"""
Custom exceptions for GeoNarrate package.
"""

from typing import Iterable, Optional


class GeoNarrateError(Exception):
    """Base exception for GeoNarrate package."""
    pass


class ValidationError(GeoNarrateError):
    """Raised when input data validation fails."""
    pass


class InvalidFeatureError(ValidationError):
    """Raised when a feature record is malformed."""
    pass


class InvalidTimestampError(InvalidFeatureError):
    """Raised when a feature timestamp cannot be parsed."""
    pass


class InvalidGeometryError(InvalidFeatureError):
    """Raised when a feature geometry is not a valid simple polygon."""
    pass


class DegenerateGeometryError(InvalidFeatureError):
    """Raised when a polygon area is below the degeneracy tolerance."""
    pass


class EmptyDataError(GeoNarrateError):
    """Raised when no valid features are available."""
    pass


class ConfigurationError(GeoNarrateError):
    """Raised when a configuration, constraint or rule file is invalid."""
    pass


class UnknownObjectTypeError(ConfigurationError):
    """Raised when a rule references an object type nobody declares."""
    pass


class CalculusDefinitionError(ConfigurationError):
    """Raised when calculus tables are incomplete or contradictory."""
    pass


class ParseError(GeoNarrateError):
    """Raised when network, observation or duration text cannot be parsed."""
    pass


class NetworkMismatchError(GeoNarrateError):
    """Raised when two networks are compared over different variables."""
    pass


class InconsistentNetworkError(GeoNarrateError):
    """Raised when closure fails on a network required to be consistent."""
    pass


class SearchBudgetExceeded(GeoNarrateError):
    """Raised when a search stops at its configured budget without a result."""

    def __init__(self, message: str, budget: int):
        super().__init__(message)
        self.budget = budget


class UnresolvableConflictError(GeoNarrateError):
    """Raised when no consistent compliant scenario exists at all."""
    pass


class NoExplanationError(GeoNarrateError):
    """Raised when no event sequence links two observations."""
    pass


class InterpolationError(GeoNarrateError):
    """Raised when no neighbourhood path exists within the step bound."""
    pass


class PipelineStageError(GeoNarrateError):
    """Raised when a pipeline stage fails; carries the stage and offending ids."""

    def __init__(self, stage: str, message: str, offending_ids: Optional[Iterable[str]] = None):
        self.stage = stage
        self.offending_ids = sorted(offending_ids or [])
        detail = f" (ids: {', '.join(self.offending_ids)})" if self.offending_ids else ""
        super().__init__(f"Stage '{stage}' failed: {message}{detail}")

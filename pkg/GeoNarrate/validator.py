"""
Feature validation using regular expressions and shapely geometry checks.
"""

import re
from datetime import datetime, timedelta, timezone
from typing import Any, Mapping

from shapely.geometry import Polygon, shape
from shapely.geometry.polygon import orient
from shapely.validation import explain_validity

from .exceptions import (
    ValidationError, InvalidFeatureError, InvalidTimestampError,
    InvalidGeometryError, DegenerateGeometryError, ParseError
)

DEGENERATE_AREA = 1e-12


class FeatureValidator:
    """Validates the properties and geometry of ingested features."""

    # '@' is reserved for source-tagged duplicate variables
    ID_PATTERN = r"^[A-Za-z0-9_][\w.\-']*$"
    TYPE_PATTERN = r'^[A-Za-z][A-Za-z0-9_]*$'
    SOURCE_PATTERN = r'^[\w.\-]+$'
    DURATION_PATTERN = r'^(\d+(?:\.\d+)?)([smhdw])$'

    _DURATION_UNITS = {'s': 'seconds', 'm': 'minutes', 'h': 'hours', 'd': 'days', 'w': 'weeks'}

    @staticmethod
    def validate_identifier(value: Any, field: str = 'id') -> str:
        """
        Validate an object id.

        Raises:
            InvalidFeatureError: If the id is missing or contains reserved characters
        """
        if not isinstance(value, str) or not value.strip():
            raise InvalidFeatureError(f"Property '{field}' must be a nonempty string, got {value!r}")
        value = value.strip()
        if not re.match(FeatureValidator.ID_PATTERN, value):
            raise InvalidFeatureError(f"Property '{field}' contains invalid characters: '{value}'")
        return value

    @staticmethod
    def validate_type(value: Any) -> str:
        """Validate an object type name such as ``RuralZone``."""
        if not isinstance(value, str) or not re.match(FeatureValidator.TYPE_PATTERN, value.strip()):
            raise InvalidFeatureError(f"Object type must be an identifier, got {value!r}")
        return value.strip()

    @staticmethod
    def validate_source(value: Any) -> str:
        if not isinstance(value, str) or not re.match(FeatureValidator.SOURCE_PATTERN, value.strip()):
            raise InvalidFeatureError(f"Source id must be a simple token, got {value!r}")
        return value.strip()

    @staticmethod
    def validate_timestamp(value: Any) -> datetime:
        """
        Parse an ISO-8601 instant and normalise it to UTC.

        Naive timestamps are read as UTC.

        Raises:
            InvalidTimestampError: If the value is not an ISO-8601 instant
        """
        if not isinstance(value, str):
            raise InvalidTimestampError(f"Timestamp must be an ISO-8601 string, got {value!r}")
        text = value.strip()
        if text.endswith('Z'):
            text = text[:-1] + '+00:00'
        try:
            instant = datetime.fromisoformat(text)
        except ValueError:
            raise InvalidTimestampError(f"Unparseable timestamp '{value}'")
        if instant.tzinfo is None:
            instant = instant.replace(tzinfo=timezone.utc)
        return instant.astimezone(timezone.utc)

    @staticmethod
    def validate_polygon(geometry: Any) -> Polygon:
        """
        Build a valid polygon with a counterclockwise outer ring.

        Args:
            geometry: A GeoJSON geometry mapping or a shapely Polygon

        Returns:
            Oriented shapely Polygon

        Raises:
            InvalidGeometryError: If the geometry is not a valid simple polygon
            DegenerateGeometryError: If its area is below the degeneracy tolerance
        """
        if isinstance(geometry, Mapping):
            if geometry.get('type') != 'Polygon':
                raise InvalidGeometryError(f"Geometry type must be Polygon, got {geometry.get('type')!r}")
            try:
                polygon = shape(geometry)
            except Exception as e:
                raise InvalidGeometryError(f"Malformed polygon coordinates: {e}")
        elif isinstance(geometry, Polygon):
            polygon = geometry
        else:
            raise InvalidGeometryError(f"Expected a Polygon, got {type(geometry).__name__}")

        if polygon.is_empty:
            raise InvalidGeometryError("Polygon is empty")
        if not polygon.is_valid:
            raise InvalidGeometryError(f"Invalid polygon: {explain_validity(polygon)}")
        if polygon.area < DEGENERATE_AREA:
            raise DegenerateGeometryError(f"Polygon area {polygon.area:.3e} is below {DEGENERATE_AREA}")
        return orient(polygon, sign=1.0)

    @staticmethod
    def validate_error_radius(value: Any) -> float:
        try:
            radius = float(value)
        except (TypeError, ValueError):
            raise ValidationError(f"Error radius must be a number, got {value!r}")
        if radius < 0:
            raise ValidationError(f"Error radius must be non-negative, got {radius}")
        return radius

    @staticmethod
    def parse_duration(value: str) -> timedelta:
        """
        Parse a compact duration like ``5m``, ``1h`` or ``10d``.

        Raises:
            ParseError: If the text is not ``<number><unit>``
        """
        match = re.match(FeatureValidator.DURATION_PATTERN, str(value).strip())
        if not match:
            raise ParseError(f"Duration must look like '<number><s|m|h|d|w>', got '{value}'")
        amount = float(match.group(1))
        if amount <= 0:
            raise ParseError(f"Duration must be positive, got '{value}'")
        return timedelta(**{FeatureValidator._DURATION_UNITS[match.group(2)]: amount})

"""
Timestamped polygon feature model.
"""

from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Dict, Optional

from shapely.geometry import Polygon, mapping

from .validator import FeatureValidator


@dataclass
class TimedFeature:
    """One observation of an object's extent at an instant, from one source."""

    object_id: str
    object_type: str
    timestamp: Any
    geometry: Any
    source_id: str = 'default'
    raw_timestamp: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        """Validate and normalise after initialization."""
        self.object_id = FeatureValidator.validate_identifier(self.object_id)
        self.object_type = FeatureValidator.validate_type(self.object_type)
        self.source_id = FeatureValidator.validate_source(self.source_id)
        if isinstance(self.timestamp, datetime):
            if self.raw_timestamp is None:
                self.raw_timestamp = self.timestamp.isoformat()
            self.timestamp = FeatureValidator.validate_timestamp(self.timestamp.isoformat())
        else:
            if self.raw_timestamp is None:
                self.raw_timestamp = self.timestamp
            self.timestamp = FeatureValidator.validate_timestamp(self.timestamp)
        self.geometry: Polygon = FeatureValidator.validate_polygon(self.geometry)

    @property
    def area(self) -> float:
        return self.geometry.area

    @classmethod
    def from_geojson(cls, record: Dict[str, Any]) -> 'TimedFeature':
        """Build a feature from a GeoJSON Feature mapping."""
        properties = record.get('properties') or {}
        return cls(
            object_id=properties.get('id'),
            object_type=properties.get('type'),
            timestamp=properties.get('timestamp'),
            geometry=record.get('geometry'),
            source_id=properties.get('source', 'default'),
        )

    def to_geojson(self) -> Dict[str, Any]:
        return {
            'type': 'Feature',
            'properties': {
                'id': self.object_id,
                'type': self.object_type,
                'timestamp': self.raw_timestamp,
                'source': self.source_id,
            },
            'geometry': mapping(self.geometry),
        }

    def __repr__(self) -> str:
        return (f"TimedFeature({self.object_id}, {self.object_type}, "
                f"{self.timestamp.isoformat()}, source={self.source_id})")

"""
Detection of geospatial events between consecutive qualitative snapshots.

Existential changes (appearance, disappearance, split, merge) are decided
first; split and merge take precedence over the plain appearances and
disappearances they explain. Changes of persisting objects and of pairwise
relations are then found by registered detectors.
"""

import logging
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from itertools import combinations
from typing import Any, Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

from shapely.geometry import Polygon
from shapely.ops import unary_union

from .calculus import RCC8, RelationSet
from .exceptions import ConfigurationError, ValidationError
from .qcn import ConstraintNetwork, Variable
from .qualify import bounding_diagonal

logger = logging.getLogger(__name__)

DISCONNECTED = frozenset({'dc', 'ec'})


class EventKind(str, Enum):
    """Kinds of occurrences in a narrative, in canonical order."""

    APPEARANCE = 'appearance'
    DISAPPEARANCE = 'disappearance'
    SPLIT = 'split'
    MERGE = 'merge'
    GROWTH = 'growth'
    SHRINKAGE = 'shrinkage'
    DEFORMATION = 'deformation'
    TRANSITION = 'transition'
    # declared for rule files; no detector emits it
    TRANSFORMATION = 'transformation'

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, text: str) -> 'EventKind':
        try:
            return cls(str(text).strip().lower())
        except ValueError:
            raise ValidationError(f"Unknown event kind '{text}'. Available: {[k.value for k in cls]}")


_KIND_ORDER = {k: i for i, k in enumerate(EventKind)}


@dataclass(frozen=True)
class EventOccurrence:
    """
    One occurrence whose effects hold at ``time_index``.

    Participants: a split lists the parent then its children, a merge lists
    its parts then the result, a transition lists the ordered pair whose
    relation becomes ``target``.
    """

    kind: EventKind
    participants: Tuple[str, ...]
    time_index: int
    target: Optional[RelationSet] = None
    prior: Optional[RelationSet] = None
    continuous: bool = True
    evidence: str = ''
    abduced: bool = False

    def __post_init__(self):
        if self.kind in (EventKind.SPLIT, EventKind.MERGE) and len(self.participants) < 3:
            raise ValidationError(f"{self.kind} needs at least two parts, got {self.participants}")
        if self.kind == EventKind.TRANSITION and (len(self.participants) != 2 or not self.target):
            raise ValidationError(f"A transition needs a pair and a target relation, got {self.participants}")

    @property
    def parts(self) -> Tuple[str, ...]:
        if self.kind == EventKind.SPLIT:
            return self.participants[1:]
        if self.kind == EventKind.MERGE:
            return self.participants[:-1]
        return ()

    @property
    def whole(self) -> Optional[str]:
        if self.kind == EventKind.SPLIT:
            return self.participants[0]
        if self.kind == EventKind.MERGE:
            return self.participants[-1]
        return None

    def encoding(self) -> str:
        """Compact deterministic text form, e.g. ``merge(rz1,rz3;rz_new)``."""
        if self.kind == EventKind.SPLIT:
            body = f"{self.participants[0]};{','.join(self.parts)}"
        elif self.kind == EventKind.MERGE:
            body = f"{','.join(self.parts)};{self.participants[-1]}"
        else:
            body = ','.join(self.participants)
        if self.target is not None:
            body += f";{RCC8.format_set(self.target)}"
        return f"{self.kind.value}({body})"

    def sort_key(self) -> Tuple:
        return (self.time_index, _KIND_ORDER[self.kind], self.participants, self.evidence,
                tuple(RCC8.sort(self.target or ())))

    def converse_oriented(self) -> 'EventOccurrence':
        """The same transition stated for the reversed pair."""
        if self.kind != EventKind.TRANSITION:
            return self
        return EventOccurrence(
            self.kind, tuple(reversed(self.participants)), self.time_index,
            RCC8.converse(self.target),
            RCC8.converse(self.prior) if self.prior is not None else None,
            self.continuous, self.evidence, self.abduced,
        )

    def to_record(self) -> Dict[str, Any]:
        record = {
            'record': 'event',
            'time_index': self.time_index,
            'kind': self.kind.value,
            'participants': list(self.participants),
            'evidence': self.evidence,
        }
        if self.target is not None:
            record['target_relation'] = RCC8.sort(self.target)
        if self.prior is not None:
            record['prior_relation'] = RCC8.sort(self.prior)
        if self.kind == EventKind.TRANSITION:
            record['continuous'] = self.continuous
        if self.abduced:
            record['abduced'] = True
        return record

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> 'EventOccurrence':
        target = record.get('target_relation')
        prior = record.get('prior_relation')
        return cls(
            kind=EventKind.parse(record['kind']),
            participants=tuple(record['participants']),
            time_index=int(record['time_index']),
            target=RCC8.relation_set(target) if target is not None else None,
            prior=RCC8.relation_set(prior) if prior is not None else None,
            continuous=bool(record.get('continuous', True)),
            evidence=record.get('evidence', ''),
            abduced=bool(record.get('abduced', False)),
        )


@dataclass
class SnapshotState:
    """Qualitative state at one time index, with the geometry it came from."""

    time_index: int
    network: ConstraintNetwork
    geometries: Dict[str, Polygon] = field(default_factory=dict)
    instant: Optional[datetime] = None

    @property
    def existing(self) -> FrozenSet[str]:
        return frozenset(self.network.existing_names())

    @property
    def types(self) -> Dict[str, Optional[str]]:
        return {v.name: v.object_type for v in self.network.variables if v.exists}


@dataclass
class Narrative:
    """Events ordered by time together with the per-time qualitative states."""

    events: List[EventOccurrence] = field(default_factory=list)
    states: List[SnapshotState] = field(default_factory=list)

    def __post_init__(self):
        self.events = sorted(self.events, key=EventOccurrence.sort_key)
        known = set()
        for state in self.states:
            known |= set(state.network.names)
        if self.states:
            unknown = {p for e in self.events for p in e.participants} - known
            if unknown:
                raise ValidationError(f"Narrative events reference unknown objects {sorted(unknown)}")

    def type_map(self) -> Dict[str, str]:
        types: Dict[str, str] = {}
        for state in self.states:
            for name, object_type in state.types.items():
                if object_type and name not in types:
                    types[name] = object_type
        return types

    def objects(self) -> List[str]:
        return sorted({n for s in self.states for n in s.existing})

    def events_at(self, time_index: int) -> List[EventOccurrence]:
        return [e for e in self.events if e.time_index == time_index]

    def of_kind(self, kind: EventKind) -> List[EventOccurrence]:
        return [e for e in self.events if e.kind == kind]

    def to_records(self) -> List[Dict[str, Any]]:
        """Object records (id, type, time indices present) followed by event records."""
        presence: Dict[str, List[int]] = {}
        for state in self.states:
            for name in sorted(state.existing):
                presence.setdefault(name, []).append(state.time_index)
        types = self.type_map()
        records = [{'record': 'object', 'id': name, 'type': types.get(name), 'time_indices': presence[name]}
                   for name in sorted(presence)]
        records.extend(e.to_record() for e in self.events)
        return records

    @classmethod
    def from_records(cls, records: Iterable[Mapping[str, Any]]) -> 'Narrative':
        """Rebuild a narrative; states carry existence and types but no geometry."""
        events, presence = [], {}
        for record in records:
            kind = record.get('record', 'event')
            if kind == 'object':
                for t in record.get('time_indices', []):
                    presence.setdefault(int(t), []).append(Variable(record['id'], record.get('type')))
            elif kind == 'event':
                events.append(EventOccurrence.from_record(record))
            else:
                raise ValidationError(f"Unknown narrative record kind '{kind}'")
        states = [SnapshotState(t, ConstraintNetwork(sorted(vs, key=lambda v: v.name)))
                  for t, vs in sorted(presence.items())]
        return cls(events, states)


@dataclass(frozen=True)
class DetectionConfig:
    """
    Geometric thresholds of the detectors.

    Args:
        tau: Coverage tolerance for split and merge
        delta_ratio: Allowed centroid displacement, as a fraction of the whole's bounding-box diagonal
        growth_threshold: Relative area change that counts as growth or shrinkage
        deformation_threshold: Symmetric difference over union that counts as a shape change
        detectors: Registered detector names to run on persisting objects
    """

    tau: float = 0.1
    delta_ratio: float = 0.1
    growth_threshold: float = 0.05
    deformation_threshold: float = 0.25
    detectors: Tuple[str, ...] = ('growth_shrinkage', 'deformation', 'transition')

    def __post_init__(self):
        for name in ('tau', 'delta_ratio', 'growth_threshold', 'deformation_threshold'):
            value = getattr(self, name)
            if not 0 <= value < 1:
                raise ConfigurationError(f"Detection parameter {name} must lie in [0, 1), got {value}")

    @classmethod
    def from_dict(cls, values: Optional[Mapping[str, Any]]) -> 'DetectionConfig':
        values = dict(values or {})
        if 'delta' in values:
            values['delta_ratio'] = values.pop('delta')
        if 'detectors' in values:
            values['detectors'] = tuple(values['detectors'])
        unknown = set(values) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"Unknown detection settings {sorted(unknown)}")
        return cls(**values)


Detector = Callable[[SnapshotState, SnapshotState, DetectionConfig], List[EventOccurrence]]


class DetectorRegistry:
    """Registry of detectors for changes of objects present in both states."""

    _detectors: Dict[str, Detector] = {}

    @classmethod
    def register(cls, name: str):
        """
        Decorator to register a detector function.

        Usage:
            @DetectorRegistry.register('custom')
            def detect_custom(prev, next, cfg):
                ...
        """
        def decorator(func: Detector) -> Detector:
            cls._detectors[name] = func
            logger.debug(f"Registered detector: {name}")
            return func
        return decorator

    @classmethod
    def get(cls, name: str) -> Detector:
        if name not in cls._detectors:
            raise ConfigurationError(f"Detector '{name}' not found. Available: {list(cls._detectors)}")
        return cls._detectors[name]

    @classmethod
    def list_detectors(cls) -> List[str]:
        return list(cls._detectors)


def detect_existential(prev: SnapshotState, next: SnapshotState) -> List[EventOccurrence]:
    """Appearances and disappearances for every id whose existence flips."""
    events = [EventOccurrence(EventKind.APPEARANCE, (o,), next.time_index, evidence='present now, absent before')
              for o in sorted(next.existing - prev.existing)]
    events += [EventOccurrence(EventKind.DISAPPEARANCE, (o,), next.time_index, evidence='absent now, present before')
               for o in sorted(prev.existing - next.existing)]
    return events


def _groupings(wholes: Sequence[str], whole_geoms: Mapping[str, Polygon],
               pool: Sequence[str], part_geoms: Mapping[str, Polygon],
               part_net: ConstraintNetwork, cfg: DetectionConfig) -> List[Tuple[str, Tuple[str, ...], str]]:
    """Match wholes with two or more disjoint parts that jointly cover them."""
    matches = []
    available = [p for p in pool if p in part_geoms]
    for whole in wholes:
        if whole not in whole_geoms:
            continue
        w = whole_geoms[whole]
        parts = tuple(p for p in available
                      if part_geoms[p].intersection(w).area >= (1 - cfg.tau) * part_geoms[p].area)
        if len(parts) < 2:
            continue
        if any(not part_net.label(a, b) <= DISCONNECTED for a, b in combinations(parts, 2)):
            continue
        union = unary_union([part_geoms[p] for p in parts])
        coverage = union.area / w.area
        displacement = union.centroid.distance(w.centroid)
        delta = cfg.delta_ratio * bounding_diagonal([w])
        if not (1 - cfg.tau) <= coverage <= (1 + cfg.tau) or displacement > delta:
            logger.debug(f"{whole}: coverage {coverage:.3f}, displacement {displacement:.3f} rejected")
            continue
        evidence = f"coverage {coverage:.3f}, centroid shift {displacement:.3f}"
        matches.append((whole, parts, evidence))
        available = [p for p in available if p not in parts]
    return matches


def detect_split(prev: SnapshotState, next: SnapshotState, cfg: DetectionConfig = DetectionConfig()) -> List[EventOccurrence]:
    """Vanished objects whose area is covered by two or more new, disjoint objects."""
    vanished = sorted(prev.existing - next.existing)
    new = sorted(next.existing - prev.existing)
    return [EventOccurrence(EventKind.SPLIT, (whole,) + parts, next.time_index, evidence=evidence)
            for whole, parts, evidence in _groupings(vanished, prev.geometries, new, next.geometries,
                                                     next.network, cfg)]


def detect_merge(prev: SnapshotState, next: SnapshotState, cfg: DetectionConfig = DetectionConfig(),
                 exclude: Iterable[str] = ()) -> List[EventOccurrence]:
    """New objects whose area is covered by two or more vanished, disjoint objects."""
    excluded = set(exclude)
    vanished = sorted(prev.existing - next.existing - excluded)
    new = sorted(next.existing - prev.existing - excluded)
    return [EventOccurrence(EventKind.MERGE, parts + (whole,), next.time_index, evidence=evidence)
            for whole, parts, evidence in _groupings(new, next.geometries, vanished, prev.geometries,
                                                     prev.network, cfg)]


def _persisting(prev: SnapshotState, next: SnapshotState) -> List[str]:
    return sorted(o for o in prev.existing & next.existing if o in prev.geometries and o in next.geometries)


def detect_growth_shrinkage(prev: SnapshotState, next: SnapshotState,
                            ratio_threshold: float = 0.05) -> List[EventOccurrence]:
    """Growth when area ratio exceeds ``1 + threshold``, shrinkage when below ``1 - threshold``."""
    events = []
    for o in _persisting(prev, next):
        ratio = next.geometries[o].area / prev.geometries[o].area
        if ratio > 1 + ratio_threshold:
            events.append(EventOccurrence(EventKind.GROWTH, (o,), next.time_index, evidence=f"area ratio {ratio:.3f}"))
        elif ratio < 1 - ratio_threshold:
            events.append(EventOccurrence(EventKind.SHRINKAGE, (o,), next.time_index, evidence=f"area ratio {ratio:.3f}"))
    return events


def detect_deformation(prev: SnapshotState, next: SnapshotState, cfg: DetectionConfig) -> List[EventOccurrence]:
    """Shape changes of objects whose area stays within the growth threshold."""
    events = []
    for o in _persisting(prev, next):
        before, after = prev.geometries[o], next.geometries[o]
        ratio = after.area / before.area
        if not 1 - cfg.growth_threshold <= ratio <= 1 + cfg.growth_threshold:
            continue
        change = before.symmetric_difference(after).area / before.union(after).area
        if change > cfg.deformation_threshold:
            events.append(EventOccurrence(EventKind.DEFORMATION, (o,), next.time_index,
                                          evidence=f"shape change {change:.3f}"))
    return events


def detect_transitions(prev_net: ConstraintNetwork, next_net: ConstraintNetwork,
                       time_index: int = 0) -> List[EventOccurrence]:
    """
    Relation changes for pairs of objects existing in both networks.

    A pair changes when its old and new labels share no relation. The event
    is continuous when some old and some new relation are neighbours.
    """
    common = sorted(n for n in prev_net.existing_names()
                    if n in next_net and next_net.variable(n).exists)
    events = []
    for a, b in combinations(common, 2):
        before, after = prev_net.label(a, b), next_net.label(a, b)
        if before & after:
            continue
        continuous = any(RCC8.cnd_distance(x, y) == 1 for x in before for y in after)
        events.append(EventOccurrence(
            EventKind.TRANSITION, (a, b), time_index, target=after, prior=before,
            continuous=continuous,
            evidence=f"{RCC8.format_set(before)} -> {RCC8.format_set(after)}",
        ))
    return events


@DetectorRegistry.register('growth_shrinkage')
def _growth_shrinkage_detector(prev, next, cfg):
    return detect_growth_shrinkage(prev, next, cfg.growth_threshold)


@DetectorRegistry.register('deformation')
def _deformation_detector(prev, next, cfg):
    return detect_deformation(prev, next, cfg)


@DetectorRegistry.register('transition')
def _transition_detector(prev, next, cfg):
    return detect_transitions(prev.network, next.network, next.time_index)


def detect_events(prev: SnapshotState, next: SnapshotState,
                  cfg: DetectionConfig = DetectionConfig()) -> List[EventOccurrence]:
    """All occurrences between two consecutive states, in canonical order."""
    splits = detect_split(prev, next, cfg)
    claimed = {p for e in splits for p in e.participants}
    merges = detect_merge(prev, next, cfg, exclude=claimed)
    claimed |= {p for e in merges for p in e.participants}

    events = splits + merges
    events += [e for e in detect_existential(prev, next) if e.participants[0] not in claimed]
    for name in cfg.detectors:
        events += DetectorRegistry.get(name)(prev, next, cfg)
    return sorted(events, key=EventOccurrence.sort_key)


def build_narrative(states: Sequence[SnapshotState], cfg: DetectionConfig = DetectionConfig()) -> Narrative:
    """Fold event detection over consecutive states."""
    events: List[EventOccurrence] = []
    for prev, next in zip(states, states[1:]):
        found = detect_events(prev, next, cfg)
        logger.info(f"t{prev.time_index} -> t{next.time_index}: {len(found)} events")
        events.extend(found)
    return Narrative(events, list(states))

"""
Temporal partitioning and qualitative abstraction of polygon features.

Features are grouped into snapshots, and every pair of polygons within a
snapshot is classified into one RCC-8 base relation using shapely predicates
with an eps tolerance on boundaries.
"""

import logging
import statistics
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from itertools import combinations
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

from shapely.geometry import Polygon
from shapely.ops import unary_union

from .calculus import RCC8, SIZE, BaseRelation, RelationSet, SizeRelation
from .exceptions import (
    DegenerateGeometryError, EmptyDataError, InvalidGeometryError, ValidationError
)
from .feature import TimedFeature
from .qcn import ConstraintNetwork, Variable
from .validator import DEGENERATE_AREA, FeatureValidator

logger = logging.getLogger(__name__)

EPS_FACTOR = 1e-6


@dataclass(frozen=True)
class PartitionPolicy:
    """
    How timestamps are grouped into snapshots.

    ``gap``: single-linkage clustering, a new snapshot starts when the distance
    to the previous distinct instant exceeds ``width`` (default: half the median
    of all gaps between consecutive instants). ``window``: fixed windows of
    ``width`` anchored at the earliest timestamp.
    """

    kind: str = 'gap'
    width: Optional[timedelta] = None

    def __post_init__(self):
        if self.kind not in ('gap', 'window'):
            raise ValidationError(f"Partition policy must be 'gap' or 'window', got '{self.kind}'")
        if self.kind == 'window' and self.width is None:
            raise ValidationError("Window partitioning needs a width")

    @classmethod
    def parse(cls, text: Optional[str]) -> 'PartitionPolicy':
        """Parse ``gap``, ``gap:<dur>`` or ``window:<dur>``."""
        if not text:
            return cls()
        kind, _, duration = text.partition(':')
        width = FeatureValidator.parse_duration(duration) if duration else None
        return cls(kind.strip(), width)

    def __str__(self) -> str:
        if self.width is None:
            return self.kind
        return f"{self.kind}:{int(self.width.total_seconds())}s"


@dataclass
class Snapshot:
    """Features falling into one time interval, keyed by object id."""

    time_index: int
    representative_instant: datetime
    start: datetime
    end: datetime
    features: Dict[str, List[TimedFeature]] = field(default_factory=dict)

    def __post_init__(self):
        for feats in self.features.values():
            for f in feats:
                if not self.start <= f.timestamp <= self.end:
                    raise ValidationError(
                        f"Feature {f.object_id} at {f.timestamp} lies outside snapshot {self.time_index}"
                    )

    def object_ids(self) -> List[str]:
        return sorted(self.features)

    def types(self) -> Dict[str, str]:
        return {oid: feats[0].object_type for oid, feats in sorted(self.features.items())}

    def variables(self) -> List[Tuple[Variable, TimedFeature]]:
        """
        Network variables with their features.

        An id observed by several sources yields one ``id@source`` variable
        per source, tagged as co-referent with ``id``.
        """
        result = []
        for oid in self.object_ids():
            feats = sorted(self.features[oid], key=lambda f: f.source_id)
            if len(feats) == 1:
                result.append((Variable(oid, feats[0].object_type), feats[0]))
            else:
                for f in feats:
                    result.append((Variable(f"{oid}@{f.source_id}", f.object_type, True, oid), f))
        return result

    def geometries(self) -> Dict[str, Polygon]:
        """One geometry per object id; the first source wins for duplicates."""
        return {oid: sorted(feats, key=lambda f: f.source_id)[0].geometry
                for oid, feats in sorted(self.features.items())}


@dataclass
class Timeline:
    """Ordered snapshots with strictly increasing instants."""

    snapshots: List[Snapshot]

    def __post_init__(self):
        for expected, snap in enumerate(self.snapshots, start=1):
            if snap.time_index != expected:
                raise ValidationError(f"Snapshot indices must be contiguous from 1, got {snap.time_index}")
        for earlier, later in zip(self.snapshots, self.snapshots[1:]):
            if not earlier.representative_instant < later.representative_instant:
                raise ValidationError("Snapshot instants must be strictly increasing")

    def __len__(self) -> int:
        return len(self.snapshots)

    def __iter__(self):
        return iter(self.snapshots)


def _default_gap(instants: List[datetime]) -> timedelta:
    gaps = sorted(later - earlier for earlier, later in zip(instants, instants[1:]))
    return statistics.median(gaps) / 2


def partition(features: Iterable[TimedFeature], policy: Optional[PartitionPolicy] = None) -> Timeline:
    """
    Assign every feature to exactly one snapshot.

    Raises:
        EmptyDataError: If no features are given
    """
    feats = sorted(features, key=lambda f: (f.timestamp, f.object_id, f.source_id))
    if not feats:
        raise EmptyDataError("no features")
    policy = policy or PartitionPolicy()
    instants = sorted({f.timestamp for f in feats})

    groups: List[List[datetime]] = []
    if policy.kind == 'gap':
        if len(instants) == 1:
            groups = [instants]
        else:
            threshold = policy.width if policy.width is not None else _default_gap(instants)
            logger.info(f"Gap partitioning with threshold {threshold}")
            groups = [[instants[0]]]
            for previous, instant in zip(instants, instants[1:]):
                if instant - previous > threshold:
                    groups.append([])
                groups[-1].append(instant)
    else:
        origin = instants[0]
        windows: Dict[int, List[datetime]] = {}
        for instant in instants:
            windows.setdefault(int((instant - origin) / policy.width), []).append(instant)
        groups = [windows[k] for k in sorted(windows)]

    membership = {instant: i for i, group in enumerate(groups) for instant in group}
    buckets: List[Dict[str, Dict[str, TimedFeature]]] = [{} for _ in groups]
    for f in feats:
        by_source = buckets[membership[f.timestamp]].setdefault(f.object_id, {})
        if f.source_id in by_source:
            logger.warning(f"{f.object_id} observed twice by {f.source_id} in one snapshot; keeping the later")
        by_source[f.source_id] = f

    snapshots = []
    for i, (group, bucket) in enumerate(zip(groups, buckets), start=1):
        snapshots.append(Snapshot(
            time_index=i,
            representative_instant=group[0],
            start=group[0],
            end=group[-1],
            features={oid: list(by_source.values()) for oid, by_source in sorted(bucket.items())},
        ))
    logger.info(f"Partitioned {len(feats)} features into {len(snapshots)} snapshots ({policy})")
    return Timeline(snapshots)


def default_eps(geometries: Iterable[Polygon]) -> float:
    """``EPS_FACTOR`` times the diagonal of the joint bounding box."""
    diagonal = bounding_diagonal(geometries)
    return EPS_FACTOR * diagonal if diagonal > 0 else EPS_FACTOR


def qualify_pair(a: Polygon, b: Polygon, eps: float) -> str:
    """
    Classify two polygons into one RCC-8 base relation.

    Boundaries closer than ``eps`` count as touching; overlap or leftover
    areas below ``eps`` times the longer perimeter count as empty.

    Raises:
        DegenerateGeometryError: If either polygon has (near) zero area
    """
    if a.area < DEGENERATE_AREA or b.area < DEGENERATE_AREA:
        raise DegenerateGeometryError("Cannot qualify a polygon with degenerate area")

    if a.distance(b) > eps:
        return BaseRelation.DC.value
    area_tol = eps * max(a.length, b.length)
    if a.intersection(b).area <= area_tol:
        return BaseRelation.EC.value

    a_inside = a.difference(b).area <= area_tol
    b_inside = b.difference(a).area <= area_tol
    if a_inside and b_inside:
        return BaseRelation.EQ.value
    if a_inside or b_inside:
        tangent = a.boundary.distance(b.boundary) <= eps
        if a_inside:
            return BaseRelation.TPP.value if tangent else BaseRelation.NTPP.value
        return BaseRelation.TPPI.value if tangent else BaseRelation.NTPPI.value
    return BaseRelation.PO.value


def _variants(geometry: Polygon, radius: float) -> List[Polygon]:
    shapes = [geometry]
    if radius > 0:
        grown = geometry.buffer(radius)
        shrunk = geometry.buffer(-radius)
        shapes.append(grown)
        if not shrunk.is_empty and shrunk.geom_type == 'Polygon' and shrunk.area >= DEGENERATE_AREA:
            shapes.append(shrunk)
    return shapes


def qualify_pair_uncertain(a: Polygon, b: Polygon, eps: float,
                           radius_a: float = 0.0, radius_b: float = 0.0) -> RelationSet:
    """
    Disjunctive label for polygons known only up to a positional error radius.

    Relations reached by growing or shrinking either polygon within its radius,
    or by widening the touching tolerance, are added when they are conceptual
    neighbours of the measured relation.
    """
    base = qualify_pair(a, b, eps)
    if radius_a <= 0 and radius_b <= 0:
        return frozenset({base})
    permissible = RCC8.neighbors(base) | {base}
    observed = {base, qualify_pair(a, b, eps + radius_a + radius_b)}
    for va in _variants(a, radius_a):
        for vb in _variants(b, radius_b):
            observed.add(qualify_pair(va, vb, eps))
    return frozenset(observed & permissible)


def size_relation(a: Polygon, b: Polygon, ratio_tol: float = 0.05) -> str:
    """Compare areas; ``equal`` when they differ by less than ``ratio_tol`` relatively."""
    if a.area < DEGENERATE_AREA or b.area < DEGENERATE_AREA:
        raise DegenerateGeometryError("Cannot compare sizes of degenerate polygons")
    if abs(a.area - b.area) / max(a.area, b.area) < ratio_tol:
        return SizeRelation.EQUAL.value
    return SizeRelation.SMALLER.value if a.area < b.area else SizeRelation.LARGER.value


def qualify_snapshot(snapshot: Snapshot, eps: Optional[float] = None,
                     error_radii: Optional[Mapping[str, float]] = None) -> ConstraintNetwork:
    """
    Qualitative network over every object present in a snapshot.

    Args:
        snapshot: The snapshot to abstract
        eps: Boundary tolerance; defaults to ``default_eps`` over the snapshot
        error_radii: Optional positional error radius per source id

    Raises:
        InvalidGeometryError: With the offending object ids when a predicate fails
    """
    members = snapshot.variables()
    if eps is None:
        eps = default_eps(f.geometry for _, f in members)
    radii = dict(error_radii or {})

    network = ConstraintNetwork([v for v, _ in members])
    labels = {}
    for (va, fa), (vb, fb) in combinations(members, 2):
        try:
            labels[(va.name, vb.name)] = qualify_pair_uncertain(
                fa.geometry, fb.geometry, eps,
                radii.get(fa.source_id, 0.0), radii.get(fb.source_id, 0.0)
            )
        except DegenerateGeometryError as e:
            raise DegenerateGeometryError(f"Objects {va.name}, {vb.name}: {e}")
        except Exception as e:
            raise InvalidGeometryError(f"Objects {va.name}, {vb.name}: {e}")
    network = network.with_labels(labels)
    logger.info(f"Qualified snapshot {snapshot.time_index}: {len(members)} variables, eps={eps:.3e}")
    return network


def size_network(network: ConstraintNetwork, geometries: Mapping[str, Polygon],
                 ratio_tol: float = 0.05) -> ConstraintNetwork:
    """Size-calculus network over the same variables, from polygon areas."""
    names = [n for n in network.existing_names() if n in geometries]
    labels = {(a, b): {size_relation(geometries[a], geometries[b], ratio_tol)}
              for a, b in combinations(names, 2)}
    return ConstraintNetwork(network.variables, labels, SIZE)


def bounding_diagonal(geometries: Iterable[Polygon]) -> float:
    """Diagonal length of the bounding box of the union of geometries."""
    geometries = list(geometries)
    if not geometries:
        return 0.0
    minx, miny, maxx, maxy = unary_union(geometries).bounds
    return ((maxx - minx) ** 2 + (maxy - miny) ** 2) ** 0.5


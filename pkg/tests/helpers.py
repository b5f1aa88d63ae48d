"""
Builders and analytic oracles used across the tests.
"""

import json
import math
import os
from datetime import datetime, timedelta, timezone
from typing import Dict, Iterable, Optional, Sequence

from shapely.geometry import Point, box, mapping

from GeoNarrate.events import SnapshotState
from GeoNarrate.feature import TimedFeature
from GeoNarrate.qcn import ConstraintNetwork, Variable

EPOCH = datetime(2000, 1, 1, tzinfo=timezone.utc)
SAMPLE_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), '..', 'sample_data'))


def sample_path(name: str) -> str:
    return os.path.join(SAMPLE_DIR, name)


def square(x: float, y: float, size: float = 1.0):
    return box(x, y, x + size, y + size)


def disk(cx: float, cy: float, r: float, quad_segs: int = 64):
    return Point(cx, cy).buffer(r, quad_segs=quad_segs)


def feature(object_id: str, geometry, minutes: float = 0, object_type: str = 'Zone',
            source: str = 'default') -> TimedFeature:
    return TimedFeature(object_id, object_type, EPOCH + timedelta(minutes=minutes), geometry, source)


def geojson_record(object_id: str, geometry, timestamp: str, object_type: str = 'Zone',
                   source: str = 'default') -> Dict:
    return {
        'type': 'Feature',
        'properties': {'id': object_id, 'type': object_type, 'timestamp': timestamp, 'source': source},
        'geometry': mapping(geometry),
    }


def write_ndjson(path, records: Iterable[Dict]) -> str:
    with open(path, 'w', encoding='utf-8') as f:
        for record in records:
            f.write(json.dumps(record) + '\n')
    return str(path)


def network(names: Sequence[str], labels: Optional[Dict] = None, types: Optional[Dict[str, str]] = None,
            absent: Iterable[str] = ()) -> ConstraintNetwork:
    types = types or {}
    absent = set(absent)
    variables = [Variable(n, types.get(n), n not in absent) for n in names]
    return ConstraintNetwork(variables, labels or {})


def state(time_index: int, geometries: Dict, labels: Optional[Dict] = None,
          types: Optional[Dict[str, str]] = None) -> SnapshotState:
    """Snapshot state over the objects of ``geometries``."""
    return SnapshotState(time_index, network(sorted(geometries), labels, types), dict(geometries))


def disk_relation(c1, r1: float, c2, r2: float, tol: float = 1e-9) -> str:
    """RCC-8 relation of two closed disks from centre distance and radii."""
    d = math.dist(c1, c2)
    if d <= tol and abs(r1 - r2) <= tol:
        return 'eq'
    if d > r1 + r2 + tol:
        return 'dc'
    if abs(d - (r1 + r2)) <= tol:
        return 'ec'
    inner = abs(r1 - r2)
    if d < inner - tol:
        return 'ntpp' if r1 < r2 else 'ntppi'
    if abs(d - inner) <= tol:
        return 'tpp' if r1 < r2 else 'tppi'
    return 'po'


def disk_margin(c1, r1: float, c2, r2: float) -> float:
    """Distance of a disk pair from the nearest relation change."""
    d = math.dist(c1, c2)
    return min(abs(d - (r1 + r2)), abs(d - abs(r1 - r2)))


def disk_with_relation(rng, base, rel: str):
    """A disk ``(centre, radius)`` standing in ``rel`` to ``base``, seen from ``base``."""
    (cx, cy), r = base
    if rel == 'eq':
        return (cx, cy), r
    if rel == 'dc':
        r2 = r * rng.uniform(0.2, 2.0)
        d = r + r2 + r * rng.uniform(0.1, 1.0)
    elif rel == 'ec':
        r2 = r * rng.uniform(0.2, 2.0)
        d = r + r2
    elif rel == 'po':
        r2 = r * rng.uniform(0.3, 2.0)
        d = abs(r - r2) + (r + r2 - abs(r - r2)) * rng.uniform(0.2, 0.8)
    elif rel == 'tpp':
        r2 = r * rng.uniform(1.25, 3.0)
        d = r2 - r
    elif rel == 'ntpp':
        r2 = r * rng.uniform(1.5, 3.0)
        d = (r2 - r) * rng.uniform(0.0, 0.8)
    elif rel == 'tppi':
        r2 = r * rng.uniform(0.2, 0.8)
        d = r - r2
    elif rel == 'ntppi':
        r2 = r * rng.uniform(0.2, 0.7)
        d = (r - r2) * rng.uniform(0.0, 0.8)
    else:
        raise ValueError(rel)
    angle = rng.uniform(0, 2 * math.pi)
    return (cx + d * math.cos(angle), cy + d * math.sin(angle)), r2


def random_disk(rng):
    return (rng.uniform(-10, 10), rng.uniform(-10, 10)), rng.uniform(0.5, 3.0)


def motion_relations(r1: float, r2: float, length: float, samples: int = 2001):
    """Relations of a fixed disk to one moving along a line through its centre, in time order."""
    critical = [s * v / length for v in (r1 + r2, abs(r1 - r2)) for s in (-1, 1)] + [0.0]
    times = sorted({-1 + 2 * k / (samples - 1) for k in range(samples)} | set(critical))
    relations = [disk_relation((0.0, 0.0), r1, (t * length, 0.0), r2) for t in times]
    return [r for i, r in enumerate(relations) if i == 0 or r != relations[i - 1]]


def linear_motion_relations(r1: float, start, velocity, r2: float):
    """
    Relations of a fixed disk at the origin to one whose centre moves from
    ``start`` along ``velocity`` for unit time.

    The relation is evaluated at every instant the centre distance crosses
    ``r1 + r2`` or ``|r1 - r2|`` and halfway between consecutive instants.
    """
    sx, sy = start
    vx, vy = velocity
    a = vx * vx + vy * vy
    b = 2 * (sx * vx + sy * vy)
    times = {0.0, 1.0}
    for radius in (r1 + r2, abs(r1 - r2)):
        disc = b * b - 4 * a * (sx * sx + sy * sy - radius * radius)
        if disc < 0:
            continue
        for sign in (-1, 1):
            t = (-b + sign * math.sqrt(disc)) / (2 * a)
            if 0 < t < 1:
                times.add(t)
    ordered = sorted(times)
    instants = sorted(ordered + [(x + y) / 2 for x, y in zip(ordered, ordered[1:])])
    relations = [disk_relation((0.0, 0.0), r1, (sx + t * vx, sy + t * vy), r2) for t in instants]
    return [r for i, r in enumerate(relations) if i == 0 or r != relations[i - 1]]

"""
Test suite for temporal partitioning and qualitative abstraction.
"""

import pytest
from shapely.geometry import box

from GeoNarrate.calculus import RCC8, rels
from GeoNarrate.exceptions import DegenerateGeometryError, EmptyDataError, ParseError, ValidationError
from GeoNarrate.qualify import (
    PartitionPolicy, bounding_diagonal, default_eps, partition, qualify_pair,
    qualify_pair_uncertain, qualify_snapshot, size_network, size_relation
)

from helpers import disk, disk_margin, disk_relation, feature, random_disk, square


class TestPartition:
    """Test grouping of timestamped features into snapshots."""

    def test_distinct_days(self):
        """Test six groups on separate days give six snapshots with a one hour gap."""
        features = [feature(f"o{d}_{k}", square(3 * k, 0), minutes=d * 24 * 60 + k)
                    for d in range(6) for k in range(3)]
        timeline = partition(features, PartitionPolicy.parse('gap:1h'))
        assert len(timeline) == 6
        assert [s.time_index for s in timeline] == [1, 2, 3, 4, 5, 6]
        assert all(len(s.features) == 3 for s in timeline)

    def test_default_gap_counts_repeated_gaps(self):
        """Test the default threshold is half the median over every consecutive gap."""
        features = [feature('a', square(0, 0), minutes=m) for m in (0, 1, 2, 3, 30)]
        timeline = partition(features)
        assert len(timeline) == 5
        assert [len(s.features['a']) for s in timeline] == [1, 1, 1, 1, 1]

    def test_default_gap_separates_days(self):
        """Test one instant per day stays one snapshot per day."""
        features = [feature(f"o{d}", square(2 * d, 0), minutes=d * 24 * 60) for d in range(4)]
        assert len(partition(features)) == 4

    def test_single_instant(self):
        features = [feature('a', square(0, 0)), feature('b', square(5, 0))]
        timeline = partition(features)
        assert len(timeline) == 1
        assert timeline.snapshots[0].object_ids() == ['a', 'b']

    def test_gap_clustering(self):
        """Test single-linkage clustering of {0, 10, 11, 25} minutes with a five minute gap."""
        features = [feature(f"o{m}", square(m, 0), minutes=m) for m in (0, 10, 11, 25)]
        timeline = partition(features, PartitionPolicy.parse('gap:5m'))
        assert [s.object_ids() for s in timeline] == [['o0'], ['o10', 'o11'], ['o25']]

    def test_fixed_windows(self):
        """Test windows anchored at the earliest timestamp."""
        features = [feature(f"o{m}", square(m, 0), minutes=m) for m in (0, 30, 61)]
        timeline = partition(features, PartitionPolicy.parse('window:1h'))
        assert [s.object_ids() for s in timeline] == [['o0', 'o30'], ['o61']]

    def test_every_feature_assigned_once(self, rng):
        """Test partition totality on random timestamps."""
        features = [feature(f"o{i}", square(2 * i, 0), minutes=rng.uniform(0, 600)) for i in range(40)]
        timeline = partition(features, PartitionPolicy.parse('gap:15m'))
        assigned = [oid for snap in timeline for oid in snap.object_ids()]
        assert sorted(assigned) == sorted(f.object_id for f in features)
        for snap in timeline:
            for feats in snap.features.values():
                assert all(snap.start <= f.timestamp <= snap.end for f in feats)

    def test_empty(self):
        with pytest.raises(EmptyDataError):
            partition([])

    def test_policy_parsing(self):
        """Test invalid partition policies."""
        assert str(PartitionPolicy.parse('gap:5m')) == 'gap:300s'
        assert PartitionPolicy.parse(None) == PartitionPolicy()

        with pytest.raises(ValidationError):
            PartitionPolicy.parse('window')

        with pytest.raises(ValidationError):
            PartitionPolicy.parse('hourly:1h')

        with pytest.raises(ParseError):
            PartitionPolicy.parse('gap:5x')

    def test_duplicate_sources_kept_apart(self):
        """Test two sources observing one object stay separate in a snapshot."""
        features = [feature('park', square(0, 0), source='osm'), feature('park', square(0.2, 0), source='survey')]
        snap = partition(features).snapshots[0]
        names = [v.name for v, _ in snap.variables()]
        assert names == ['park@osm', 'park@survey']
        assert {v.coref for v, _ in snap.variables()} == {'park'}


class TestQualifyPair:
    """Test the geometry to relation abstraction."""

    def test_identical(self):
        assert qualify_pair(square(0, 0), square(0, 0), 0.01) == 'eq'

    def test_far_apart(self):
        assert qualify_pair(square(0, 0), square(11, 0), 0.01) == 'dc'

    def test_shared_edge(self):
        """Test unit squares sharing one full edge touch."""
        assert qualify_pair(square(0, 0), square(1, 0), 0.01) == 'ec'

    def test_gap_within_tolerance(self):
        """Test a gap narrower than eps counts as touching."""
        assert qualify_pair(square(0, 0), square(1.005, 0), 0.01) == 'ec'
        assert qualify_pair(square(0, 0), square(1.05, 0), 0.01) == 'dc'

    def test_nested(self):
        """Test containment with and without boundary contact."""
        outer = box(0, 0, 10, 10)
        assert qualify_pair(box(4, 4, 6, 6), outer, 0.01) == 'ntpp'
        assert qualify_pair(box(0, 0, 2, 2), outer, 0.01) == 'tpp'
        assert qualify_pair(outer, box(4, 4, 6, 6), 0.01) == 'ntppi'
        assert qualify_pair(outer, box(0, 0, 2, 2), 0.01) == 'tppi'

    def test_overlap(self):
        assert qualify_pair(square(0, 0, 2), square(1, 1, 2), 0.01) == 'po'

    def test_converse_coherence(self, rng):
        """Test swapping arguments gives the converse relation."""
        for _ in range(200):
            a = box(*sorted_box(rng))
            b = box(*sorted_box(rng))
            assert {qualify_pair(b, a, 1e-6)} == RCC8.converse({qualify_pair(a, b, 1e-6)})

    def test_degenerate(self):
        with pytest.raises(DegenerateGeometryError):
            qualify_pair(square(0, 0, 1e-7), square(0, 0), 0.01)

    def test_agrees_with_disk_oracle(self, rng):
        """Test fine disk polygons qualify as the analytic disk relation away from boundaries."""
        checked = 0
        while checked < 1000:
            (c1, r1), (c2, r2) = random_disk(rng), random_disk(rng)
            if rng.random() < 0.5:
                # pull the second disk near the first so overlaps and containment occur
                c2 = (c1[0] + rng.uniform(-4, 4), c1[1] + rng.uniform(-4, 4))
            if disk_margin(c1, r1, c2, r2) < 0.01:
                continue
            expected = disk_relation(c1, r1, c2, r2)
            assert qualify_pair(disk(*c1, r1), disk(*c2, r2), 1e-6) == expected
            checked += 1


def sorted_box(rng):
    x1, x2 = sorted(rng.sample(range(0, 12), 2))
    y1, y2 = sorted(rng.sample(range(0, 12), 2))
    return x1, y1, x2, y2


class TestUncertainQualification:
    """Test disjunctive labels from positional error radii."""

    def test_no_radius_gives_singleton(self):
        assert qualify_pair_uncertain(square(0, 0), square(1.05, 0), 1e-6) == rels('dc')

    def test_close_pair_becomes_disjunctive(self):
        """Test a narrow gap within the error radii may be contact."""
        label = qualify_pair_uncertain(square(0, 0), square(1.05, 0), 1e-6, 0.1, 0.1)
        assert label == rels('dc', 'ec')

    def test_only_neighbours_are_added(self):
        """Test every member of the label neighbours the measured relation."""
        label = qualify_pair_uncertain(square(0, 0, 2), square(1, 1, 2), 1e-6, 0.5, 0.5)
        assert 'po' in label
        assert label <= RCC8.neighbors('po') | {'po'}

    def test_far_pair_stays_certain(self):
        assert qualify_pair_uncertain(square(0, 0), square(10, 0), 1e-6, 0.1, 0.1) == rels('dc')


class TestSizeRelation:
    """Test qualitative size comparison."""

    def test_same_polygon(self):
        assert size_relation(square(0, 0), square(0, 0)) == 'equal'

    def test_smaller(self):
        assert size_relation(square(0, 0, 1), square(0, 0, 3), 0.05) == 'smaller'
        assert size_relation(square(0, 0, 3), square(0, 0, 1), 0.05) == 'larger'

    def test_within_tolerance(self):
        """Test areas 100 and 103 count as equal at five percent."""
        assert size_relation(box(0, 0, 10, 10), box(0, 0, 10, 10.3), 0.05) == 'equal'

    def test_size_network(self):
        """Test a size network over the existing variables."""
        snap = partition([feature('a', square(0, 0, 1)), feature('b', square(5, 0, 3))]).snapshots[0]
        net = size_network(qualify_snapshot(snap), snap.geometries())
        assert net.label('a', 'b') == frozenset({'smaller'})


class TestQualifySnapshot:
    """Test qualification of whole snapshots."""

    def test_single_object(self):
        snap = partition([feature('a', square(0, 0))]).snapshots[0]
        net = qualify_snapshot(snap)
        assert net.names == ('a',)
        assert net.asserted() == {}

    def test_nested_squares(self):
        """Test an inner square well inside an outer one."""
        snap = partition([feature('inner', box(4, 4, 6, 6)), feature('outer', box(0, 0, 10, 10))]).snapshots[0]
        net = qualify_snapshot(snap)
        assert net.label('inner', 'outer') == rels('ntpp')
        assert net.is_scenario()

    def test_duplicates_become_coreferent_variables(self):
        """Test two sources for one park give two variables for the same object."""
        features = [
            feature('park', box(0, 0, 4, 4), object_type='Park', source='osm'),
            feature('park', box(1, 0, 5, 4), object_type='Park', source='survey'),
            feature('rz2', box(3, 4, 8, 8), object_type='RuralZone'),
        ]
        net = qualify_snapshot(partition(features).snapshots[0])
        assert net.names == ('park@osm', 'park@survey', 'rz2')
        assert net.variable('park@osm').coref == 'park'
        assert net.label('park@osm', 'park@survey') == rels('po')
        assert net.label('rz2', 'park@osm') == rels('ec')

    def test_source_error_radii(self):
        """Test a declared source error radius widens labels."""
        features = [feature('a', square(0, 0), source='gps'), feature('b', square(1.05, 0), source='gps')]
        snap = partition(features).snapshots[0]
        assert qualify_snapshot(snap, 1e-6).label('a', 'b') == rels('dc')
        assert qualify_snapshot(snap, 1e-6, {'gps': 0.1}).label('a', 'b') == rels('dc', 'ec')

    def test_default_eps(self):
        """Test eps scales with the bounding-box diagonal."""
        assert bounding_diagonal([box(0, 0, 3, 4)]) == pytest.approx(5.0)
        assert default_eps([box(0, 0, 3, 4)]) == pytest.approx(5e-6)

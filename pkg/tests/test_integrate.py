"""
Test suite for integrity constraints and distance-based conflict resolution.
"""

from itertools import combinations, product

import pytest
from hypothesis import given, settings, strategies as st
from shapely.geometry import box

from GeoNarrate.calculus import RCC8, rels
from GeoNarrate.exceptions import (
    ConfigurationError, NetworkMismatchError, SearchBudgetExceeded, UnresolvableConflictError
)
from GeoNarrate.integrate import (
    IntegrityConstraint, allowed_labels, apply_constraints, collapse_coreferents,
    integrate_network, load_constraints, qualify_and_merge, relax, resolve, scenario_distance
)
from GeoNarrate.qcn import algebraic_closure, is_consistent
from GeoNarrate.qualify import partition, qualify_snapshot

from helpers import feature, network, sample_path

THREE = ['a', 'b', 'c']
PAIRS = [('a', 'b'), ('a', 'c'), ('b', 'c')]
FOUR = ['a', 'b', 'c', 'd']
FOUR_PAIRS = list(combinations(FOUR, 2))


def brute_force_minimum(q, constraints):
    """Minimal distance and union of all consistent compliant scenarios of a small network."""
    allowed = allowed_labels(q, constraints)
    pairs = q.pairs()
    best, union = None, {}
    for relations in product(*(RCC8.sort(allowed[p]) for p in pairs)):
        scenario = q.with_labels({p: {r} for p, r in zip(pairs, relations)})
        if not algebraic_closure(scenario).consistent:
            continue
        d = scenario_distance(scenario, q)
        if best is None or d < best:
            best, union = d, {p: {r} for p, r in zip(pairs, relations)}
        elif d == best:
            for p, r in zip(pairs, relations):
                union[p].add(r)
    return best, union


class TestIntegrityConstraint:
    """Test constraint definitions and loading."""

    def test_load_from_file(self):
        constraints = load_constraints(sample_path('dubai_constraints.yaml'))
        assert [c.name for c in constraints] == ['district-district', 'district-city']
        assert constraints[1].allowed == rels('tpp', 'ntpp')

    def test_allowed_as_text(self):
        """Test the allowed set may be written as braces text."""
        constraint = IntegrityConstraint.from_dict({'left_type': 'A', 'right_type': 'B', 'allowed': '{dc, ec}'})
        assert constraint.allowed == rels('dc', 'ec')
        assert constraint.name == 'A-B'

    def test_wildcard(self):
        constraint = IntegrityConstraint('any', '*', 'Park', rels('dc'))
        assert constraint.matches('RuralZone', 'Park')
        assert constraint.matches(None, 'Park')
        assert not constraint.matches('Park', 'RuralZone')

    def test_invalid_entries(self):
        """Test empty, unknown and incomplete constraints."""
        with pytest.raises(ConfigurationError):
            IntegrityConstraint('empty', 'A', 'B', frozenset())

        with pytest.raises(ConfigurationError):
            IntegrityConstraint.from_dict({'left_type': 'A', 'right_type': 'B', 'allowed': ['near']})

        with pytest.raises(ConfigurationError):
            load_constraints([{'left_type': 'A', 'allowed': ['dc']}])

        with pytest.raises(ConfigurationError):
            load_constraints({'constraints': 'dc'})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_constraints(str(tmp_path / 'missing.yaml'))


class TestApplyConstraints:
    """Test intersection of labels with constraint-allowed sets."""

    def test_no_matching_constraint(self, dubai):
        """Test constraints for other types leave the network unchanged."""
        constraints = [IntegrityConstraint('sea', 'Sea', 'Sea', rels('dc'))]
        assert apply_constraints(dubai, constraints) == dubai

    def test_district_in_city(self, dubai):
        """Test a district overlapping its city contradicts containment."""
        constrained = apply_constraints(dubai, load_constraints(sample_path('dubai_constraints.yaml')))
        assert constrained.label('Mirdif', 'Dubai') == frozenset()
        assert constrained.label('Deira', 'Dubai') == rels('ntpp')

    def test_constraint_applies_in_both_orientations(self, dubai):
        """Test a city-district pair is checked through the converse."""
        allowed = allowed_labels(dubai, load_constraints(sample_path('dubai_constraints.yaml')))
        assert allowed[('Deira', 'Dubai')] == rels('tpp', 'ntpp')
        assert allowed[('Deira', 'Mirdif')] == rels('dc', 'ec')

    def test_coreferent_duplicates_expect_eq(self, park_duplicates):
        """Test duplicates of one park are expected to coincide."""
        constraints = load_constraints(sample_path('park_constraints.yaml'))
        assert allowed_labels(park_duplicates, constraints)[('p', "p'")] == rels('eq')
        assert allowed_labels(park_duplicates, constraints)[('p', 'rz2')] == rels('dc', 'ec')


class TestScenarioDistance:
    """Test the summed neighbourhood distance."""

    def test_identical(self, dubai):
        assert scenario_distance(dubai, dubai) == 0

    def test_single_edge(self):
        assert scenario_distance(network(['a', 'b'], {('a', 'b'): {'po'}}),
                                 network(['a', 'b'], {('a', 'b'): {'ec'}})) == 1

    def test_two_pairs(self):
        """Test distances add up over pairs."""
        s1 = network(THREE, {('a', 'b'): {'po'}, ('a', 'c'): {'dc'}, ('b', 'c'): {'dc'}})
        s2 = network(THREE, {('a', 'b'): {'ec'}, ('a', 'c'): {'ec'}, ('b', 'c'): {'dc'}})
        assert scenario_distance(s1, s2) == 2
        assert scenario_distance(s2, s1) == 2

    def test_disjunctive_label_takes_closest(self):
        s1 = network(['a', 'b'], {('a', 'b'): {'dc', 'po'}})
        s2 = network(['a', 'b'], {('a', 'b'): {'tpp'}})
        assert scenario_distance(s1, s2) == 1

    def test_mismatch(self):
        with pytest.raises(NetworkMismatchError):
            scenario_distance(network(['a', 'b']), network(['a', 'c']))

    @given(st.lists(st.sampled_from(RCC8.relations), min_size=3, max_size=3),
           st.lists(st.sampled_from(RCC8.relations), min_size=3, max_size=3))
    def test_symmetric(self, first, second):
        """Test distance does not depend on argument order."""
        s1 = network(THREE, {p: {r} for p, r in zip(PAIRS, first)})
        s2 = network(THREE, {p: {r} for p, r in zip(PAIRS, second)})
        assert scenario_distance(s1, s2) == scenario_distance(s2, s1)


class TestRelax:
    """Test enumeration of scenarios at a given distance."""

    def test_distance_zero(self):
        q = network(['a', 'b'], {('a', 'b'): {'po'}})
        assert relax(q, 0) == [q]

    def test_neighbours_of_po(self):
        """Test one step away from po reaches its neighbours in tag order."""
        q = network(['a', 'b'], {('a', 'b'): {'po'}})
        assert [s.label('a', 'b') for s in relax(q, 1)] == [rels('ec'), rels('eq'), rels('tpp'), rels('tppi')]

    def test_exhaustion(self):
        """Test relaxing up to the exhaustive bound enumerates every scenario once."""
        q = network(THREE, {('a', 'b'): {'po'}, ('a', 'c'): {'dc'}, ('b', 'c'): {'ntpp'}})
        found = [s for i in range(len(PAIRS) * RCC8.diameter + 1) for s in relax(q, i)]
        assert len(found) == 8 ** 3
        assert len(set(found)) == 8 ** 3

    def test_respects_constraints(self):
        q = network(['a', 'b'], {('a', 'b'): {'po'}}, types={'a': 'T', 'b': 'T'})
        constraints = [IntegrityConstraint('apart', 'T', 'T', rels('dc', 'ec'))]
        assert [s.label('a', 'b') for s in relax(q, 1, constraints)] == [rels('ec')]
        assert [s.label('a', 'b') for s in relax(q, 2, constraints)] == [rels('dc')]

    def test_negative(self):
        assert relax(network(['a', 'b']), -1) == []


class TestResolve:
    """Test merging into the closest consistent compliant scenarios."""

    def test_dubai(self, dubai):
        """Test that the district/city conflicts are repaired at distance two."""
        result = resolve(dubai, load_constraints(sample_path('dubai_constraints.yaml')))
        assert result.distance == 2
        assert result.scenario_count == 1
        assert result.resolved.label('Deira', 'BurDubai') == rels('ec')
        assert result.resolved.label('Mirdif', 'Dubai') == rels('tpp')
        assert result.report() == "Deira–BurDubai: po → ec; Mirdif–Dubai: po → tpp; distance 2"

    def test_park_duplicates(self, park_duplicates):
        """Test the duplicated park is repaired and its relation to iz1 left open."""
        result = resolve(park_duplicates, load_constraints(sample_path('park_constraints.yaml')))
        assert result.distance == 4
        assert result.scenario_count == 2
        resolved = result.resolved
        assert resolved.label('p', "p'") == rels('eq')
        assert resolved.label('rz2', 'p') == rels('ec')
        assert resolved.label("p'", 'iz2') == rels('ec')
        assert resolved.label('p', 'iz1') == rels('dc', 'ec')

        collapsed = collapse_coreferents(resolved)
        assert collapsed.names == ('park', 'rz2', 'iz1', 'iz2')
        assert collapsed.label('park', 'iz1') == rels('dc', 'ec')
        assert collapsed.label('rz2', 'park') == rels('ec')

    def test_consistent_input_unchanged(self):
        """Test a consistent compliant scenario comes back at distance zero."""
        q = network(THREE, {('a', 'b'): {'ec'}, ('a', 'c'): {'dc'}, ('b', 'c'): {'ec'}})
        result = resolve(q)
        assert result.distance == 0
        assert result.resolved == q
        assert result.repaired_pairs == []

    def test_idempotent(self, dubai):
        constraints = load_constraints(sample_path('dubai_constraints.yaml'))
        assert resolve(resolve(dubai, constraints).resolved, constraints).distance == 0

    def test_compliance(self, park_duplicates):
        """Test every resolved label lies within what the constraints allow."""
        constraints = load_constraints(sample_path('park_constraints.yaml'))
        resolved = resolve(park_duplicates, constraints).resolved
        for (a, b), allowed in allowed_labels(park_duplicates, constraints).items():
            assert resolved.label(a, b) <= allowed
        assert is_consistent(resolved)

    def test_four_sources(self, four_sources):
        """Test the conflicting reports are repaired by one step."""
        result = resolve(four_sources)
        assert result.distance == 1
        assert is_consistent(result.resolved)

    def test_budget_exhausted(self, four_sources):
        """Test a zero budget is reported distinctly from inconsistency."""
        with pytest.raises(SearchBudgetExceeded) as info:
            resolve(four_sources, budget=0)
        assert info.value.budget == 0

    def test_unresolvable(self):
        """Test constraints no scenario can meet."""
        q = network(THREE, {('a', 'b'): {'po'}}, types={'a': 'T', 'b': 'T', 'c': 'T'})
        constraints = [
            IntegrityConstraint('inside', 'T', 'T', rels('ntpp')),
        ]
        with pytest.raises(UnresolvableConflictError):
            resolve(q, constraints)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.sampled_from(RCC8.relations), min_size=3, max_size=3),
           st.frozensets(st.sampled_from(RCC8.relations), min_size=1))
    def test_minimal_union_small_networks(self, relations, allowed):
        """Test distance and union against exhaustive enumeration over three variables."""
        q = network(THREE, {p: {r} for p, r in zip(PAIRS, relations)}, types={n: 'T' for n in THREE})
        constraints = [IntegrityConstraint('c', 'T', 'T', allowed)]
        best, union = brute_force_minimum(q, constraints)
        if best is None:
            with pytest.raises(UnresolvableConflictError):
                resolve(q, constraints)
            return
        result = resolve(q, constraints)
        assert result.distance == best
        for p in PAIRS:
            assert result.resolved.label(*p) == frozenset(union[p])

    @settings(max_examples=20, deadline=None)
    @given(st.lists(st.sampled_from(RCC8.relations), min_size=6, max_size=6),
           st.frozensets(st.sampled_from(RCC8.relations), min_size=1, max_size=3))
    def test_minimal_union_four_variables(self, relations, allowed):
        """Test distance and union against exhaustive enumeration over four variables."""
        q = network(FOUR, {p: {r} for p, r in zip(FOUR_PAIRS, relations)}, types={n: 'T' for n in FOUR})
        constraints = [IntegrityConstraint('c', 'T', 'T', allowed)]
        best, union = brute_force_minimum(q, constraints)
        if best is None:
            with pytest.raises(UnresolvableConflictError):
                resolve(q, constraints)
            return
        result = resolve(q, constraints)
        assert result.distance == best
        for p in FOUR_PAIRS:
            assert result.resolved.label(*p) == frozenset(union[p])


class TestQualifyAndMerge:
    """Test the qualify then merge flow on snapshots."""

    def test_conflict_free_snapshot(self):
        """Test a snapshot without conflicts equals its qualification."""
        snap = partition([feature('a', box(0, 0, 1, 1)), feature('b', box(1, 0, 2, 1))]).snapshots[0]
        assert qualify_and_merge(snap) == qualify_snapshot(snap)

    def test_duplicate_park_collapsed(self):
        """Test overlapping duplicates from two sources are merged into one object."""
        features = [
            feature('park', box(0, 0, 4, 4), object_type='Park', source='osm'),
            feature('park', box(0.5, 0, 4.5, 4), object_type='Park', source='survey'),
            feature('rz2', box(4.2, 0, 8, 4), object_type='RuralZone'),
        ]
        snap = partition(features).snapshots[0]
        merged = qualify_and_merge(snap, load_constraints(sample_path('park_constraints.yaml')))
        assert merged.names == ('park', 'rz2')
        assert merged.label('park', 'rz2') <= rels('dc', 'ec')

    def test_details(self):
        """Test the raw network and repair report come back with the merged network."""
        features = [
            feature('park', box(0, 0, 4, 4), object_type='Park', source='osm'),
            feature('park', box(0.5, 0, 4.5, 4), object_type='Park', source='survey'),
            feature('rz2', box(4.2, 0, 8, 4), object_type='RuralZone'),
        ]
        snap = partition(features).snapshots[0]
        constraints = load_constraints(sample_path('park_constraints.yaml'))
        merge = qualify_and_merge(snap, constraints, details=True)
        assert merge.raw == qualify_snapshot(snap)
        assert merge.merged == qualify_and_merge(snap, constraints)
        assert merge.raw.names == ('park@osm', 'park@survey', 'rz2')

    def test_details_without_conflict(self):
        snap = partition([feature('a', box(0, 0, 1, 1)), feature('b', box(1, 0, 2, 1))]).snapshots[0]
        merge = qualify_and_merge(snap, details=True)
        assert merge.result is None
        assert merge.raw == merge.merged

    def test_integrate_network_skips_consistent(self, dubai):
        network_out, result = integrate_network(dubai)
        assert result is None
        assert network_out == dubai

    def test_integrate_network_budget(self, four_sources):
        """Test an inconsistent snapshot with no repair budget reports exhaustion."""
        with pytest.raises(SearchBudgetExceeded):
            integrate_network(four_sources, [], budget=0)

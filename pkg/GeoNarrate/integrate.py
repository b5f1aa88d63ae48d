"""
Integrity constraints and distance-based conflict resolution.

``resolve`` relaxes the observed network step by step along the conceptual
neighbourhood graph and returns the union of all consistent, compliant
scenarios at the smallest total distance.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

from .calculus import RCC8, RelationSet
from .decorators import timing_decorator
from .exceptions import (
    ConfigurationError, NetworkMismatchError, SearchBudgetExceeded,
    UnresolvableConflictError, GeoNarrateError
)
from .file_handler import FileHandler
from .qcn import ConstraintNetwork, Pair, Variable, is_consistent
from .qualify import Snapshot, qualify_snapshot

logger = logging.getLogger(__name__)

WILDCARD = '*'


@dataclass(frozen=True)
class IntegrityConstraint:
    """Relations allowed between objects of two types; patterns are exact names or ``*``."""

    name: str
    left_type: str
    right_type: str
    allowed: RelationSet

    def __post_init__(self):
        try:
            allowed = RCC8.relation_set(self.allowed)
        except GeoNarrateError as e:
            raise ConfigurationError(f"Constraint '{self.name}': {e}")
        if not allowed:
            raise ConfigurationError(f"Constraint '{self.name}' allows no relation")
        object.__setattr__(self, 'allowed', allowed)

    def matches(self, left: Optional[str], right: Optional[str]) -> bool:
        return (self.left_type in (WILDCARD, left)) and (self.right_type in (WILDCARD, right))

    @classmethod
    def from_dict(cls, entry: Mapping[str, Any]) -> 'IntegrityConstraint':
        missing = [k for k in ('left_type', 'right_type', 'allowed') if k not in entry]
        if missing:
            raise ConfigurationError(f"Constraint entry {dict(entry)} misses {missing}")
        allowed = entry['allowed']
        if isinstance(allowed, str):
            allowed = [a.strip() for a in allowed.strip('{}').split(',') if a.strip()]
        name = entry.get('name') or f"{entry['left_type']}-{entry['right_type']}"
        return cls(name, entry['left_type'], entry['right_type'], frozenset(allowed))


@dataclass(frozen=True)
class RepairedPair:
    """A pair whose label differs between the observed and resolved networks."""

    left: str
    right: str
    before: RelationSet
    after: RelationSet

    def describe(self) -> str:
        return f"{self.left}–{self.right}: {_format(self.before)} → {_format(self.after)}"


@dataclass
class MergeResult:
    """Resolved network, its distance to the observation and the changed pairs."""

    resolved: ConstraintNetwork
    distance: int
    repaired_pairs: List[RepairedPair] = field(default_factory=list)
    scenario_count: int = 1

    def report(self) -> str:
        lines = [pair.describe() for pair in self.repaired_pairs]
        lines.append(f"distance {self.distance}")
        return '; '.join(lines)


def _format(rs: RelationSet) -> str:
    members = RCC8.sort(rs)
    return members[0] if len(members) == 1 else RCC8.format_set(members)


def load_constraints(source: Union[str, Sequence[Mapping[str, Any]], None]) -> List[IntegrityConstraint]:
    """
    Load constraints from a YAML/JSON file or an already parsed list.

    Raises:
        ConfigurationError: If the document is not a list of constraint entries
    """
    if source is None:
        return []
    entries = FileHandler.load_structured(source) if isinstance(source, str) else source
    if isinstance(entries, Mapping):
        entries = entries.get('constraints', [])
    if not isinstance(entries, list):
        raise ConfigurationError("Constraints must be a list of entries")
    constraints = [IntegrityConstraint.from_dict(e) for e in entries]
    logger.info(f"Loaded {len(constraints)} integrity constraints")
    return constraints


def _same_object(net: ConstraintNetwork, a: str, b: str) -> bool:
    va, vb = net.variable(a), net.variable(b)
    return va.coref is not None and va.coref == vb.coref


def allowed_labels(net: ConstraintNetwork, ics: Iterable[IntegrityConstraint]) -> Dict[Pair, RelationSet]:
    """Constraint-allowed label for every pair of existing variables."""
    ics = list(ics)
    allowed: Dict[Pair, RelationSet] = {}
    for a, b in net.pairs():
        if _same_object(net, a, b):
            allowed[(a, b)] = frozenset({'eq'})
            continue
        label = RCC8.universal
        ta, tb = net.variable(a).object_type, net.variable(b).object_type
        for ic in ics:
            if ic.matches(ta, tb):
                label &= ic.allowed
            if ic.matches(tb, ta):
                label &= RCC8.converse(ic.allowed)
        allowed[(a, b)] = label
    return allowed


def apply_constraints(net: ConstraintNetwork, ics: Iterable[IntegrityConstraint]) -> ConstraintNetwork:
    """Intersect every label with what the constraints allow; duplicates of one object with ``{eq}``."""
    allowed = allowed_labels(net, ics)
    return net.with_labels({p: net.label(*p) & rs for p, rs in allowed.items() if rs != RCC8.universal})


def scenario_distance(s1: ConstraintNetwork, s2: ConstraintNetwork) -> int:
    """
    Sum of neighbourhood distances over all pairs.

    Disjunctive labels contribute the smallest distance between any members.

    Raises:
        NetworkMismatchError: If the networks range over different variables
    """
    if set(s1.existing_names()) != set(s2.existing_names()):
        raise NetworkMismatchError(
            f"Cannot compare networks over {sorted(s1.existing_names())} and {sorted(s2.existing_names())}"
        )
    total = 0
    for a, b in s1.pairs():
        l1, l2 = s1.label(a, b), s2.label(a, b)
        total += min(RCC8.cnd_distance(r1, r2) for r1 in l1 for r2 in l2)
    return total


def _candidates(q: ConstraintNetwork, budget: int, allowed: Mapping[Pair, RelationSet],
                consistent_only: bool) -> Iterator[ConstraintNetwork]:
    """
    Scenarios at exactly ``budget`` distance from ``q`` within the allowed labels.

    Pairs are assigned in network order, each trying its relations by cost and
    then tag order. Partial assignments are pruned when the remaining budget
    cannot be met, and, with ``consistent_only``, when a completed triangle
    violates the composition table.
    """
    pairs = q.pairs()
    options: List[List[Tuple[int, str]]] = []
    for a, b in pairs:
        observed = q.label(a, b)
        opts = [(RCC8.set_distance(observed, r), r) for r in RCC8.sort(allowed.get((a, b), RCC8.universal))]
        options.append(sorted(opts, key=lambda o: o[0]))
    if any(not opts for opts in options):
        return

    suffix_min = [0] * (len(pairs) + 1)
    suffix_max = [0] * (len(pairs) + 1)
    for k in range(len(pairs) - 1, -1, -1):
        suffix_min[k] = suffix_min[k + 1] + options[k][0][0]
        suffix_max[k] = suffix_max[k + 1] + options[k][-1][0]

    names = q.existing_names()
    index = {n: i for i, n in enumerate(names)}
    assignment: Dict[Tuple[int, int], str] = {}

    def relation(i: int, j: int) -> Optional[str]:
        if i < j:
            return assignment.get((i, j))
        r = assignment.get((j, i))
        return None if r is None else next(iter(RCC8.converse({r})))

    def triangles_hold(i: int, j: int) -> bool:
        r_ij = assignment[(i, j)]
        for k in range(len(names)):
            if k == i or k == j:
                continue
            r_ik, r_kj = relation(i, k), relation(k, j)
            if r_ik is None or r_kj is None:
                continue
            if r_ij not in RCC8.compose(frozenset({r_ik}), frozenset({r_kj})):
                return False
        return True

    def search(k: int, remaining: int) -> Iterator[Dict[Tuple[int, int], str]]:
        if k == len(pairs):
            if remaining == 0:
                yield dict(assignment)
            return
        if remaining < suffix_min[k] or remaining > suffix_max[k]:
            return
        i, j = index[pairs[k][0]], index[pairs[k][1]]
        for cost, r in options[k]:
            if cost > remaining:
                break
            assignment[(i, j)] = r
            if not consistent_only or triangles_hold(i, j):
                yield from search(k + 1, remaining - cost)
            del assignment[(i, j)]

    for found in search(0, budget):
        yield q.with_labels({(names[i], names[j]): {r} for (i, j), r in found.items()})


def relax(q: ConstraintNetwork, i: int, ics: Iterable[IntegrityConstraint] = ()) -> List[ConstraintNetwork]:
    """
    All scenarios at distance exactly ``i`` from ``q``, in deterministic order.

    When constraints are given, only compliant scenarios are produced; no
    consistency filtering is applied.
    """
    if i < 0:
        return []
    return list(_candidates(q, i, allowed_labels(q, ics), consistent_only=False))


def _repairs(q: ConstraintNetwork, resolved: ConstraintNetwork) -> List[RepairedPair]:
    return [RepairedPair(a, b, q.label(a, b), resolved.label(a, b))
            for a, b in q.pairs() if q.label(a, b) != resolved.label(a, b)]


@timing_decorator
def resolve(q: ConstraintNetwork, ics: Iterable[IntegrityConstraint] = (),
            budget: Optional[int] = None) -> MergeResult:
    """
    Merge a possibly inconsistent network into the union of its closest repairs.

    Distances are tried from 0 upward until some consistent, compliant
    scenario exists. The exhaustive bound is pair count times the
    neighbourhood diameter; ``budget`` lowers it.

    Raises:
        SearchBudgetExceeded: If ``budget`` is reached before any repair
        UnresolvableConflictError: If no repair exists at the exhaustive bound
    """
    allowed = allowed_labels(q, ics)
    bound = len(q.pairs()) * RCC8.diameter
    cap = bound if budget is None else min(budget, bound)

    for i in range(cap + 1):
        found = list(_candidates(q, i, allowed, consistent_only=True))
        if not found:
            logger.debug(f"No compliant consistent scenario at distance {i}")
            continue
        union: Dict[Pair, set] = {}
        for scenario in found:
            for a, b in q.pairs():
                union.setdefault((a, b), set()).update(scenario.label(a, b))
        resolved = q.with_labels(union)
        result = MergeResult(resolved, i, _repairs(q, resolved), len(found))
        logger.info(f"Resolved network at distance {i} from {len(found)} minimal scenarios")
        return result

    if cap < bound:
        raise SearchBudgetExceeded(f"No consistent compliant scenario within distance {cap}", cap)
    raise UnresolvableConflictError("No consistent scenario satisfies the integrity constraints")


def integrate_network(q: ConstraintNetwork, ics: Iterable[IntegrityConstraint] = (),
                      budget: Optional[int] = None) -> Tuple[ConstraintNetwork, Optional[MergeResult]]:
    """Apply constraints and resolve only when the result is inconsistent."""
    ics = list(ics)
    constrained = apply_constraints(q, ics)
    if is_consistent(constrained):
        return constrained, None
    logger.info(f"Network over {len(q.existing_names())} variables is inconsistent; resolving")
    result = resolve(q, ics, budget)
    return result.resolved, result


def collapse_coreferents(net: ConstraintNetwork) -> ConstraintNetwork:
    """Replace each group of co-referent variables by one variable named after the object."""
    representatives: Dict[str, str] = {}
    variables: List[Variable] = []
    for v in net.variables:
        if v.coref is None:
            variables.append(v)
            representatives[v.name] = v.name
        elif v.coref not in representatives:
            representatives[v.coref] = v.name
            variables.append(Variable(v.coref, v.object_type, v.exists))
        else:
            first = representatives[v.coref]
            if net.label(first, v.name) != frozenset({'eq'}):
                logger.warning(f"Duplicates {first} and {v.name} are not resolved to eq")

    labels = {}
    kept = [v.name for v in variables]
    for i, a in enumerate(kept):
        for b in kept[i + 1:]:
            labels[(a, b)] = net.label(representatives[a], representatives[b])
    return ConstraintNetwork(variables, labels, net.calculus)


@dataclass(frozen=True)
class SnapshotMerge:
    """Intermediate results of ``qualify_and_merge`` for one snapshot."""

    raw: ConstraintNetwork
    merged: ConstraintNetwork
    result: Optional[MergeResult] = None


def qualify_and_merge(snapshot: Snapshot, ics: Iterable[IntegrityConstraint] = (),
                      eps: Optional[float] = None, budget: Optional[int] = None,
                      error_radii: Optional[Mapping[str, float]] = None,
                      details: bool = False) -> Union[ConstraintNetwork, SnapshotMerge]:
    """
    Qualify a snapshot, repair it if needed, and collapse duplicate variables.

    With ``details`` the raw network and the repair report come back too.
    """
    q = qualify_snapshot(snapshot, eps, error_radii)
    merged, result = integrate_network(q, ics, budget)
    collapsed = collapse_coreferents(merged)
    return SnapshotMerge(q, collapsed, result) if details else collapsed

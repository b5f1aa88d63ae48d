"""
Narrative completion by abduction.

Given ordered, partial qualitative observations, ``explain`` searches the
space of situations reachable by events (appearance, disappearance, split,
merge and neighbourhood transitions, optionally growth and shrinkage) for the
cheapest event sequences that lead from each observation to the next. Every
situation on a path must stay consistent in topology and qualitative size
taken together. Objects keep existing, and relations and sizes keep holding
unless an event changes them.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .calculus import RCC8, SIZE, Calculus, RelationSet, size_entailed, topology_compatible
from .decorators import timing_decorator
from .events import DISCONNECTED, EventKind, EventOccurrence
from .exceptions import (
    ConfigurationError, InconsistentNetworkError, InterpolationError,
    NetworkMismatchError, NoExplanationError, SearchBudgetExceeded, ValidationError
)
from .parser import NetworkBlock
from .qcn import ConstraintNetwork, Pair, Variable, algebraic_closure

logger = logging.getLogger(__name__)

DEFAULT_BUDGET = 10 ** 6
DEFAULT_MAX_EXPLANATIONS = 64
MAX_PATHS = 10_000

DEFAULT_ABDUCIBLES = frozenset({
    EventKind.APPEARANCE, EventKind.DISAPPEARANCE, EventKind.SPLIT,
    EventKind.MERGE, EventKind.TRANSITION,
})
ABDUCIBLE_KINDS = DEFAULT_ABDUCIBLES | {EventKind.GROWTH, EventKind.SHRINKAGE}
EXISTENTIAL_KINDS = frozenset({
    EventKind.APPEARANCE, EventKind.DISAPPEARANCE, EventKind.SPLIT, EventKind.MERGE,
})

# size of (o, x) after o grows or shrinks
_RESIZE = {
    EventKind.GROWTH: {'smaller': SIZE.universal, 'equal': frozenset({'larger'}), 'larger': frozenset({'larger'})},
    EventKind.SHRINKAGE: {'larger': SIZE.universal, 'equal': frozenset({'smaller'}), 'smaller': frozenset({'smaller'})},
}

PROPER_PART = frozenset({'tpp', 'ntpp'})
PROPER_PART_INVERSE = frozenset({'tppi', 'ntppi'})


def _canonical(a: str, b: str, rs: RelationSet, calculus: Calculus = RCC8) -> Tuple[str, str, RelationSet]:
    return (a, b, rs) if a < b else (b, a, calculus.converse(rs))


def _conjoin(labels: Mapping[Pair, RelationSet], calculus: Calculus = RCC8,
             existing: Optional[FrozenSet[str]] = None) -> Dict[Pair, RelationSet]:
    """Canonically oriented labels with repeated pairs intersected and universal ones dropped."""
    merged: Dict[Pair, RelationSet] = {}
    for (a, b), rs in labels.items():
        if existing is not None and (a not in existing or b not in existing):
            continue
        lo, hi, oriented = _canonical(a, b, frozenset(rs), calculus)
        merged[(lo, hi)] = merged.get((lo, hi), calculus.universal) & oriented
    return {p: rs for p, rs in merged.items() if rs != calculus.universal}


def resized(label: RelationSet, kind: EventKind) -> RelationSet:
    """Size label of (o, x) once o has grown or shrunk."""
    result = frozenset()
    for s in label:
        result |= _RESIZE[kind][s]
    return result


@dataclass
class Observation:
    """
    A partial qualitative description at one time point.

    ``present`` and ``absent`` are the objects known to exist or not; pair
    constraints and sizes are kept in the orientation they were stated in.
    """

    label: str
    present: FrozenSet[str]
    absent: FrozenSet[str]
    constraints: Dict[Pair, RelationSet] = field(default_factory=dict)
    types: Dict[str, str] = field(default_factory=dict)
    sizes: Dict[Pair, RelationSet] = field(default_factory=dict)

    def __post_init__(self):
        clash = self.present & self.absent
        if clash:
            raise ValidationError(f"Observation {self.label}: objects both present and absent {sorted(clash)}")
        mentioned = {o for pair in list(self.constraints) + list(self.sizes) for o in pair}
        if mentioned & self.absent:
            raise ValidationError(
                f"Observation {self.label}: relations stated for absent objects {sorted(mentioned & self.absent)}"
            )
        self.sizes = {p: SIZE.relation_set(rs) for p, rs in self.sizes.items()}
        self.present = frozenset(self.present | mentioned)

    @classmethod
    def from_block(cls, block: NetworkBlock) -> 'Observation':
        present = {s.name for s in block.variables.values() if s.exists is not False}
        absent = {s.name for s in block.variables.values() if s.exists is False}
        types = {s.name: s.object_type for s in block.variables.values() if s.object_type}
        return cls(block.label, frozenset(present), frozenset(absent), dict(block.pairs), types, dict(block.sizes))

    def canonical_constraints(self) -> Dict[Pair, RelationSet]:
        return _conjoin(self.constraints)

    def canonical_sizes(self) -> Dict[Pair, RelationSet]:
        return _conjoin(self.sizes, SIZE)

    def orientation(self, a: str, b: str) -> Tuple[str, str]:
        """The orientation in which the observation states the pair, if any."""
        return (b, a) if (b, a) in self.constraints and (a, b) not in self.constraints else (a, b)

    def _variables(self) -> List[Variable]:
        return [Variable(o, self.types.get(o)) for o in sorted(self.present)]

    def network(self) -> ConstraintNetwork:
        return ConstraintNetwork(self._variables(), self.constraints)

    def size_network(self) -> Optional[ConstraintNetwork]:
        return ConstraintNetwork(self._variables(), self.sizes, SIZE) if self.sizes else None


@dataclass(frozen=True)
class SituationState:
    """Existing objects with the relations and sizes asserted between them, in canonical form."""

    existing: FrozenSet[str]
    asserted: Tuple[Tuple[str, str, RelationSet], ...] = ()
    sizes: Tuple[Tuple[str, str, RelationSet], ...] = ()

    @classmethod
    def build(cls, existing: Iterable[str], labels: Mapping[Pair, RelationSet],
              sizes: Optional[Mapping[Pair, RelationSet]] = None) -> 'SituationState':
        existing = frozenset(existing)

        def frozen(merged: Dict[Pair, RelationSet]) -> Tuple[Tuple[str, str, RelationSet], ...]:
            return tuple(sorted(((a, b, rs) for (a, b), rs in merged.items()), key=lambda item: (item[0], item[1])))

        return cls(existing, frozen(_conjoin(labels, RCC8, existing)),
                   frozen(_conjoin(sizes or {}, SIZE, existing)))

    def labels(self) -> Dict[Pair, RelationSet]:
        return {(a, b): rs for a, b, rs in self.asserted}

    def size_labels(self) -> Dict[Pair, RelationSet]:
        return {(a, b): rs for a, b, rs in self.sizes}

    def sized_objects(self) -> FrozenSet[str]:
        return frozenset(o for a, b, _ in self.sizes for o in (a, b))

    def _variables(self, types: Optional[Mapping[str, str]]) -> List[Variable]:
        types = types or {}
        return [Variable(o, types.get(o)) for o in sorted(self.existing)]

    def network(self, types: Optional[Mapping[str, str]] = None) -> ConstraintNetwork:
        return ConstraintNetwork(self._variables(types), self.labels())

    def size_network(self, types: Optional[Mapping[str, str]] = None) -> Optional[ConstraintNetwork]:
        """Size network of the state, or None when no size is asserted."""
        if not self.sizes:
            return None
        return ConstraintNetwork(self._variables(types), self.size_labels(), SIZE)


@dataclass
class SituationNode:
    """A state reached in the search, with the event that produced it."""

    state: SituationState
    incoming_event: Optional[EventOccurrence] = None
    parent: Optional['SituationNode'] = None
    depth: int = 0
    cost: int = 0
    derived: Tuple[EventOccurrence, ...] = ()
    via: Optional[str] = None


@dataclass(frozen=True)
class Placement:
    """Symbolic time: between observation ``after_observation`` and the next, at ``position``."""

    after_observation: int
    position: int


@dataclass(frozen=True)
class AbducedEvent:
    event: EventOccurrence
    placement: Placement
    derived: bool = False
    via: Optional[str] = None

    def to_record(self) -> Dict:
        record = self.event.to_record()
        record['placement'] = {'after_observation': self.placement.after_observation,
                               'position': self.placement.position}
        if self.derived:
            record['derived'] = True
        if self.via:
            record['via'] = self.via
        return record


@dataclass
class Explanation:
    """
    Events that lead from each observation to the next.

    ``ordering`` lists index pairs ``(i, j)`` of ``delta`` where event ``i``
    must happen strictly before event ``j``; other events are unordered
    within their gap.
    """

    delta: List[AbducedEvent] = field(default_factory=list)
    ordering: List[Tuple[int, int]] = field(default_factory=list)
    cost: int = 0

    def primary(self) -> List[EventOccurrence]:
        return [a.event for a in self.delta if not a.derived]

    def event_set(self) -> FrozenSet[str]:
        return frozenset(a.event.encoding() for a in self.delta)

    def encoding(self) -> Tuple[str, ...]:
        return tuple(a.event.encoding() for a in self.delta if not a.derived)

    def to_records(self) -> List[Dict]:
        records = [a.to_record() for a in self.delta]
        records.extend({'record': 'ordering', 'before': i, 'after': j} for i, j in self.ordering)
        return records


def joint_closure(network: ConstraintNetwork, size_network: Optional[ConstraintNetwork] = None
                  ) -> Optional[Tuple[ConstraintNetwork, Optional[ConstraintNetwork]]]:
    """
    Closed topology and size networks, or None when they are jointly inconsistent.

    Topology and size labels are narrowed against each other through the
    interaction table and both closed, until nothing changes.
    """
    topo = algebraic_closure(network)
    if not topo.consistent:
        return None
    if size_network is None:
        return topo.network, None

    topo_net, size_net = topo.network, size_network
    while True:
        topo_labels, size_labels = {}, {}
        for a, b in topo_net.pairs():
            if a not in size_net or b not in size_net:
                continue
            t, s = topo_net.label(a, b), size_net.label(a, b)
            t2, s2 = t & topology_compatible(s), s & size_entailed(t)
            if not t2 or not s2:
                return None
            if t2 != t:
                topo_labels[(a, b)] = t2
            if s2 != s:
                size_labels[(a, b)] = s2
        size_closed = algebraic_closure(size_net.with_labels(size_labels))
        if not size_closed.consistent:
            return None
        topo_closed = algebraic_closure(topo_net.with_labels(topo_labels))
        if not topo_closed.consistent:
            return None
        if not topo_labels and size_closed.network == size_net and topo_closed.network == topo_net:
            return topo_net, size_net
        topo_net, size_net = topo_closed.network, size_closed.network


def c_consistent(network: ConstraintNetwork, size_network: Optional[ConstraintNetwork] = None) -> bool:
    """Joint consistency of topology and, when given, size."""
    return joint_closure(network, size_network) is not None


def monotonic_extension(partial: ConstraintNetwork) -> ConstraintNetwork:
    """
    Complete unspecified pairs with the tightest labels closure entails.

    Raises:
        InconsistentNetworkError: If the description is inconsistent
    """
    closed = algebraic_closure(partial)
    if not closed.consistent:
        raise InconsistentNetworkError(f"Inconsistent description; conflict at {closed.conflict}")
    return closed.network


def interpolate(start: ConstraintNetwork, end: ConstraintNetwork, max_steps: int) -> List[List[ConstraintNetwork]]:
    """
    All shortest sequences of consistent scenarios from ``start`` to ``end``.

    Between consecutive scenarios every pair either keeps its relation or
    moves one neighbourhood edge.

    Raises:
        NetworkMismatchError: If the scenarios range over different objects
        ValidationError: If either network is not a consistent scenario
        InterpolationError: If no sequence exists within ``max_steps``
    """
    if set(start.existing_names()) != set(end.existing_names()):
        raise NetworkMismatchError("Interpolation needs the same objects at both ends")
    for net in (start, end):
        if not net.is_scenario() or not algebraic_closure(net).consistent:
            raise ValidationError("Interpolation endpoints must be consistent scenarios")

    pairs = start.pairs()
    first = tuple(next(iter(start.label(a, b))) for a, b in pairs)
    last = tuple(next(iter(end.label(a, b))) for a, b in pairs)
    lower = max((RCC8.cnd_distance(x, y) for x, y in zip(first, last)), default=0)

    def to_network(relations: Tuple[str, ...]) -> ConstraintNetwork:
        return start.with_labels({p: {r} for p, r in zip(pairs, relations)})

    def consistent(relations: Tuple[str, ...]) -> bool:
        return algebraic_closure(to_network(relations)).consistent

    for length in range(lower, max_steps + 1):
        sequences: List[List[Tuple[str, ...]]] = []

        def walk(path: List[Tuple[str, ...]]):
            current = path[-1]
            remaining = length - (len(path) - 1)
            if remaining == 0:
                if current == last:
                    sequences.append(list(path))
                return
            options = []
            for r, goal in zip(current, last):
                moves = [r] + RCC8.sort(RCC8.neighbors(r))
                options.append([m for m in moves if RCC8.cnd_distance(m, goal) <= remaining - 1])
            for step in product(*options):
                if step != current and consistent(step):
                    walk(path + [step])

        if length == 0:
            sequences = [[first]] if first == last else []
        else:
            walk([first])
        if sequences:
            logger.info(f"Interpolated {len(sequences)} sequences of {length} steps")
            return [[to_network(s) for s in seq] for seq in sequences]

    raise InterpolationError(f"No neighbourhood path within {max_steps} steps")


class NarrativeAbducer:
    """
    Breadth-first search over situations for minimal event sequences.

    Args:
        types: Known object types; split and merge only combine objects of one type
        abducibles: Event kinds the search may hypothesise; growth and
            shrinkage are only tried for objects with a known size
        budget: Maximum number of expanded situations per gap
    """

    def __init__(self, types: Optional[Mapping[str, str]] = None,
                 abducibles: Optional[Iterable] = None, budget: int = DEFAULT_BUDGET):
        self.types = dict(types or {})
        kinds = DEFAULT_ABDUCIBLES if abducibles is None else {EventKind.parse(k) for k in abducibles}
        unsupported = kinds - ABDUCIBLE_KINDS
        if unsupported:
            raise ConfigurationError(f"Event kinds {sorted(k.value for k in unsupported)} cannot be abduced")
        self.abducibles = frozenset(kinds)
        self.budget = budget
        self._closed: Dict[SituationState, Optional[Tuple[ConstraintNetwork, Optional[ConstraintNetwork]]]] = {}

    def _closure(self, state: SituationState) -> Optional[Tuple[ConstraintNetwork, Optional[ConstraintNetwork]]]:
        if state not in self._closed:
            self._closed[state] = joint_closure(state.network(self.types), state.size_network(self.types))
        return self._closed[state]

    def closed(self, state: SituationState) -> Optional[ConstraintNetwork]:
        """Closed topology of a state, or None when topology and size are not jointly consistent."""
        closure = self._closure(state)
        return closure[0] if closure else None

    def closed_sizes(self, state: SituationState) -> Optional[ConstraintNetwork]:
        """Closed size network of a consistent state; None also when no size is asserted."""
        closure = self._closure(state)
        return closure[1] if closure else None

    def size_label(self, state: SituationState, a: str, b: str) -> RelationSet:
        """Sizes of (a, b) known in a consistent state, including what topology entails."""
        sizes = self.closed_sizes(state)
        known = sizes.label(a, b) if sizes is not None else SIZE.universal
        return known & size_entailed(self.closed(state).label(a, b))

    def with_target_sizes(self, state: SituationState, target: Observation) -> SituationState:
        """The state with the sizes the target observation states added."""
        sizes = state.size_labels()
        for pair, rs in target.canonical_sizes().items():
            sizes[pair] = sizes.get(pair, SIZE.universal) & rs
        return SituationState.build(state.existing, state.labels(), sizes)

    def satisfies(self, state: SituationState, target: Observation) -> bool:
        """
        Whether a state entails the target's topology and agrees with its sizes.

        Sizes the state leaves open are adopted from the target.
        """
        if not target.present <= state.existing or target.absent & state.existing:
            return False
        closed = self.closed(state)
        if closed is None:
            return False
        if not all(closed.label(a, b) <= rs for (a, b), rs in target.constraints.items()):
            return False
        return not target.sizes or self._closure(self.with_target_sizes(state, target)) is not None

    def _same_type(self, objects: Iterable[str]) -> bool:
        known = {self.types[o] for o in objects if self.types.get(o)}
        return len(known) <= 1

    def apply(self, state: SituationState, event: EventOccurrence) -> Optional[SituationState]:
        """
        Effect of one event on a state, or None when it cannot happen there.

        Children of a split start as proper parts of their parent and the
        result of a merge contains each of its parts. Where sizes are
        tracked, children are smaller than the parent and a merge result is
        larger than every part. Growth and shrinkage must change some size.
        """
        closed = self.closed(state)
        if closed is None:
            return None
        labels = state.labels()
        sizes = state.size_labels()
        tracked = bool(sizes)
        existing = set(state.existing)

        if event.kind == EventKind.APPEARANCE:
            (o,) = event.participants
            if o in existing:
                return None
            existing.add(o)
        elif event.kind == EventKind.DISAPPEARANCE:
            (o,) = event.participants
            if o not in existing:
                return None
            existing.discard(o)
        elif event.kind == EventKind.SPLIT:
            parent, children = event.whole, event.parts
            if parent not in existing or existing & set(children):
                return None
            existing.discard(parent)
            for child in children:
                for other in existing:
                    labels[(child, other)] = RCC8.compose(PROPER_PART, closed.label(parent, other))
                    if tracked:
                        sizes[(child, other)] = SIZE.compose(frozenset({'smaller'}), self.size_label(state, parent, other))
            for a, b in combinations(children, 2):
                labels[(a, b)] = DISCONNECTED
            existing |= set(children)
        elif event.kind == EventKind.MERGE:
            parts, result = event.parts, event.whole
            if result in existing or not set(parts) <= existing:
                return None
            existing -= set(parts)
            for other in existing:
                label, size = RCC8.universal, SIZE.universal
                for p in parts:
                    label &= RCC8.compose(PROPER_PART_INVERSE, closed.label(p, other))
                    size &= SIZE.compose(frozenset({'larger'}), self.size_label(state, p, other))
                if not label or not size:
                    return None
                labels[(result, other)] = label
                if tracked:
                    sizes[(result, other)] = size
            existing.add(result)
        elif event.kind == EventKind.TRANSITION:
            a, b = event.participants
            if a not in existing or b not in existing:
                return None
            labels = {p: rs for p, rs in labels.items() if set(p) != {a, b}}
            labels[(a, b)] = event.target
        elif event.kind in (EventKind.GROWTH, EventKind.SHRINKAGE):
            (o,) = event.participants
            if o not in existing:
                return None
            sizes = {p: rs for p, rs in sizes.items() if o not in p}
            changed = False
            for other in sorted(existing - {o}):
                current = self.size_label(state, o, other)
                sizes[(o, other)] = resized(current, event.kind)
                changed = changed or sizes[(o, other)] != current
            if not changed:
                return None
        else:
            return None

        successor = SituationState.build(existing, labels, sizes)
        return successor if self.closed(successor) is not None else None

    def successors(self, state: SituationState, target: Observation,
                   time_index: int) -> List[Tuple[EventOccurrence, Tuple[EventOccurrence, ...], Optional[str], SituationState]]:
        """Candidate events from ``state`` towards ``target`` with their derived effects."""
        closed = self.closed(state)
        if closed is None:
            return []
        required = sorted(target.present - state.existing)
        leaving = sorted(state.existing & target.absent)
        candidates: List[Tuple[EventOccurrence, Tuple[EventOccurrence, ...], Optional[str]]] = []

        def occurrence(kind, participants, **kwargs):
            return EventOccurrence(kind, tuple(participants), time_index, abduced=True,
                                   evidence=kwargs.pop('evidence', 'abduced'), **kwargs)

        if EventKind.APPEARANCE in self.abducibles:
            candidates += [(occurrence(EventKind.APPEARANCE, [o]), (), None) for o in required]
        if EventKind.DISAPPEARANCE in self.abducibles:
            candidates += [(occurrence(EventKind.DISAPPEARANCE, [o]), (), None) for o in leaving]
        if EventKind.SPLIT in self.abducibles:
            for parent in leaving:
                pool = [o for o in required if self._same_type([parent, o])]
                for size in range(2, len(pool) + 1):
                    for children in combinations(pool, size):
                        if not self._same_type(children):
                            continue
                        derived = (occurrence(EventKind.DISAPPEARANCE, [parent], evidence='effect of split'),) + tuple(
                            occurrence(EventKind.APPEARANCE, [c], evidence='effect of split') for c in children)
                        candidates.append((occurrence(EventKind.SPLIT, (parent,) + children), derived, None))
        if EventKind.MERGE in self.abducibles:
            for size in range(2, len(leaving) + 1):
                for parts in combinations(leaving, size):
                    if not self._same_type(parts):
                        continue
                    if any(not closed.label(a, b) & DISCONNECTED for a, b in combinations(parts, 2)):
                        continue
                    for result in required:
                        if not self._same_type(parts + (result,)):
                            continue
                        derived = tuple(occurrence(EventKind.DISAPPEARANCE, [p], evidence='effect of merge')
                                        for p in parts) + (
                            occurrence(EventKind.APPEARANCE, [result], evidence='effect of merge'),)
                        candidates.append((occurrence(EventKind.MERGE, parts + (result,)), derived, None))
        sized = sorted((state.sized_objects() | {o for p in target.sizes for o in p}) & state.existing)
        for kind in (EventKind.GROWTH, EventKind.SHRINKAGE):
            if kind in self.abducibles:
                candidates += [(occurrence(kind, [o]), (), None) for o in sized]
        if EventKind.TRANSITION in self.abducibles:
            pairs = {(a, b) for a, b, _ in state.asserted}
            for a, b, _ in (_canonical(x, y, rs) for (x, y), rs in target.constraints.items()):
                if a in state.existing and b in state.existing:
                    pairs.add((a, b))
            for a, b in sorted(pairs):
                current = closed.label(a, b)
                for r in RCC8.relations:
                    if current == frozenset({r}):
                        continue
                    via = [m for m in RCC8.sort(current) if m in RCC8.neighbors(r)]
                    if not via:
                        continue
                    x, y = target.orientation(a, b)
                    target_rel = frozenset({r}) if (x, y) == (a, b) else RCC8.converse({r})
                    via_rel = via[0] if (x, y) == (a, b) else next(iter(RCC8.converse({via[0]})))
                    event = occurrence(EventKind.TRANSITION, (x, y), target=target_rel,
                                       prior=current if (x, y) == (a, b) else RCC8.converse(current),
                                       evidence=f"abduced via {via_rel}")
                    candidates.append((event, (), via_rel))

        result = []
        for event, derived, via in candidates:
            successor = self.apply(state, event)
            if successor is not None:
                result.append((event, derived, via, successor))
        return result

    def search(self, source: SituationState, target: Observation,
               time_index: int) -> Tuple[int, List[List[SituationNode]]]:
        """
        Minimal-cost paths from ``source`` to states satisfying ``target``.

        Returns the cost and every minimal path as a list of nodes (without
        the source node), in deterministic order.

        Raises:
            SearchBudgetExceeded: If more than ``budget`` states are expanded
            NoExplanationError: If the reachable states are exhausted
        """
        if self.closed(source) is None:
            raise InconsistentNetworkError("Source situation is not consistent")
        layer: 'OrderedDict[SituationState, List[SituationNode]]' = OrderedDict({source: [SituationNode(source)]})
        seen: Set[SituationState] = {source}
        layers = [layer]
        expanded = 0

        while True:
            depth = len(layers) - 1
            goals = [s for s in layer if self.satisfies(s, target)]
            if goals:
                paths = []
                for goal in goals:
                    for path in self._paths(layers, goal, depth):
                        paths.append(path)
                        if len(paths) >= MAX_PATHS:
                            break
                logger.info(f"Found {len(paths)} minimal paths of cost {depth}")
                return depth, paths

            following: 'OrderedDict[SituationState, List[SituationNode]]' = OrderedDict()
            for state, nodes in layer.items():
                expanded += 1
                if expanded > self.budget:
                    raise SearchBudgetExceeded(f"Abduction expanded more than {self.budget} situations", self.budget)
                for event, derived, via, successor in self.successors(state, target, time_index):
                    if successor in seen and successor not in following:
                        continue
                    node = SituationNode(successor, event, nodes[0], depth + 1, depth + 1, derived, via)
                    following.setdefault(successor, []).append(node)
            if not following:
                raise NoExplanationError(f"No event sequence reaches observation {target.label}")
            seen.update(following)
            layers.append(following)
            layer = following
            logger.debug(f"Depth {depth + 1}: {len(following)} new situations, {expanded} expanded")

    def _paths(self, layers, state: SituationState, depth: int) -> List[List[SituationNode]]:
        if depth == 0:
            return [[]]
        paths = []
        for node in layers[depth][state]:
            for prefix in self._paths(layers, node.parent.state, depth - 1):
                paths.append(prefix + [node])
                if len(paths) >= MAX_PATHS:
                    return paths
        return paths


def _ordering(delta: Sequence[AbducedEvent], offset: int) -> List[Tuple[int, int]]:
    """Existential dependencies: later events mentioning objects earlier events create or remove."""
    pairs = []
    for j, later in enumerate(delta):
        for i in range(j):
            earlier = delta[i]
            if earlier.placement.position == later.placement.position:
                continue
            touched = set(earlier.event.participants) if earlier.event.kind in EXISTENTIAL_KINDS else set()
            if touched & set(later.event.participants):
                pairs.append((offset + i, offset + j))
    for j, later in enumerate(delta):
        if later.derived and later.event.kind == EventKind.APPEARANCE:
            for i, earlier in enumerate(delta):
                if (earlier.derived and earlier.event.kind == EventKind.DISAPPEARANCE
                        and earlier.placement.position == later.placement.position):
                    pairs.append((offset + i, offset + j))
    return sorted(set(pairs))


def _gap_explanation(path: Sequence[SituationNode], gap: int) -> Explanation:
    delta: List[AbducedEvent] = []
    for position, node in enumerate(path):
        placement = Placement(gap, position)
        for derived in node.derived:
            delta.append(AbducedEvent(derived, placement, derived=True))
        delta.append(AbducedEvent(node.incoming_event, placement, via=node.via))
    return Explanation(delta, _ordering(delta, 0), len(path))


def _combine(parts: Sequence[Explanation]) -> Explanation:
    delta, ordering, cost = [], [], 0
    for part in parts:
        offset = len(delta)
        delta.extend(part.delta)
        ordering.extend((i + offset, j + offset) for i, j in part.ordering)
        cost += part.cost
    return Explanation(delta, ordering, cost)


def check_observation(observation: Observation) -> None:
    """
    Reject an observation that is inconsistent on its own.

    Raises:
        InconsistentNetworkError: If the observation contradicts itself in topology or size
    """
    network = monotonic_extension(observation.network())
    if observation.sizes and not c_consistent(network, observation.size_network()):
        raise InconsistentNetworkError(f"Observation {observation.label}: sizes contradict the topology")


def source_state(observation: Observation) -> SituationState:
    """Situation described by an observation, checked for consistency."""
    check_observation(observation)
    return SituationState.build(observation.present, observation.canonical_constraints(),
                                observation.canonical_sizes())


@timing_decorator
def explain(observations: Sequence[Observation], abducibles: Optional[Iterable] = None,
            budget: int = DEFAULT_BUDGET, max_explanations: int = DEFAULT_MAX_EXPLANATIONS) -> List[Explanation]:
    """
    Minimal explanations linking consecutive observations.

    Explanations are ordered by cost and then by their event encodings; all
    of them have the minimal cost and distinct event sets.

    Raises:
        ValidationError: With fewer than two observations
        InconsistentNetworkError: If an observation is inconsistent on its own
        NoExplanationError, SearchBudgetExceeded: From the search
    """
    if len(observations) < 2:
        raise ValidationError("Explanation needs at least two observations")
    types: Dict[str, str] = {}
    for obs in observations:
        for name, object_type in obs.types.items():
            types.setdefault(name, object_type)
        check_observation(obs)

    abducer = NarrativeAbducer(types, abducibles, budget)
    state = source_state(observations[0])
    per_gap: List[List[Explanation]] = []

    for gap, target in enumerate(observations[1:], start=1):
        cost, paths = abducer.search(state, target, gap + 1)
        candidates: Dict[FrozenSet[str], Explanation] = {}
        for path in paths:
            explanation = _gap_explanation(path, gap)
            key = explanation.event_set()
            if key not in candidates or explanation.encoding() < candidates[key].encoding():
                candidates[key] = explanation
        ranked = sorted(candidates.values(), key=lambda e: e.encoding())
        per_gap.append(ranked)

        end = abducer.with_target_sizes(paths[0][-1].state if paths[0] else state, target)
        closed = abducer.closed(end)
        overlay = end.labels()
        for (a, b), _ in target.canonical_constraints().items():
            overlay[(a, b)] = closed.label(a, b)
        state = SituationState.build(end.existing, overlay, end.size_labels())
        logger.info(f"Gap {gap}: cost {cost}, {len(ranked)} distinct explanations")

    combined = []
    for choice in product(*per_gap):
        combined.append(_combine(choice))
        if len(combined) >= max_explanations:
            break
    return sorted(combined, key=lambda e: (e.cost, e.encoding()))


def replay(source: SituationState, explanation: Explanation,
           types: Optional[Mapping[str, str]] = None) -> SituationState:
    """
    Apply the primary events of an explanation in order.

    Raises:
        ValidationError: If some event cannot happen in the state it meets
    """
    abducer = NarrativeAbducer(types)
    state = source
    for abduced in explanation.delta:
        if abduced.derived:
            continue
        following = abducer.apply(state, abduced.event)
        if following is None:
            raise ValidationError(f"Event {abduced.event.encoding()} cannot happen in the replayed state")
        state = following
    return state


def observations_from_blocks(blocks: Iterable[NetworkBlock]) -> List[Observation]:
    return [Observation.from_block(b) for b in blocks]


def size_state(network: ConstraintNetwork, sizes: Mapping[Pair, str]) -> ConstraintNetwork:
    """Size network over the variables of ``network`` from explicit size atoms."""
    return ConstraintNetwork(network.variables, {p: {s} for p, s in sizes.items()}, SIZE)

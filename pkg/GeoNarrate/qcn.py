"""
Qualitative constraint networks with algebraic closure and scenario search.
"""

import logging
from collections import deque
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .calculus import RCC8, Calculus, RelationSet
from .exceptions import GeoNarrateError

logger = logging.getLogger(__name__)

Pair = Tuple[str, str]


@dataclass(frozen=True)
class Variable:
    """
    A network variable with its annotations.

    ``coref`` holds the object id shared by duplicate geometries of one
    object coming from different sources; such variables are expected to
    be ``eq`` to each other.
    """

    name: str
    object_type: Optional[str] = None
    exists: bool = True
    coref: Optional[str] = None

    @property
    def object_id(self) -> str:
        return self.coref or self.name


class ConstraintNetwork:
    """
    A complete labelled graph over variables.

    Labels are stored once per unordered pair, oriented by variable order;
    ``label(b, a)`` is always the converse of ``label(a, b)``. Pairs without
    a stored label are universal. Instances are treated as values: every
    modifying method returns a new network.
    """

    def __init__(self, variables: Iterable[Union[Variable, str]] = (),
                 labels: Optional[Mapping[Pair, Iterable]] = None,
                 calculus: Calculus = RCC8):
        self.calculus = calculus
        self._variables: Tuple[Variable, ...] = tuple(
            v if isinstance(v, Variable) else Variable(str(v)) for v in variables
        )
        self._index: Dict[str, int] = {}
        for i, v in enumerate(self._variables):
            if v.name in self._index:
                raise GeoNarrateError(f"Duplicate network variable '{v.name}'")
            self._index[v.name] = i
        self._labels: Dict[Pair, RelationSet] = {}
        for (a, b), rs in (labels or {}).items():
            self._store(a, b, calculus.relation_set(rs))

    def _store(self, a: str, b: str, rs: RelationSet):
        if a not in self._index or b not in self._index:
            raise GeoNarrateError(f"Pair ({a}, {b}) names an unknown variable")
        if a == b:
            raise GeoNarrateError(f"Cannot label the diagonal pair ({a}, {a})")
        if self._index[a] > self._index[b]:
            a, b, rs = b, a, self.calculus.converse(rs)
        if rs == self.calculus.universal:
            self._labels.pop((a, b), None)
        else:
            self._labels[(a, b)] = frozenset(rs)

    def _copy(self) -> 'ConstraintNetwork':
        clone = ConstraintNetwork.__new__(ConstraintNetwork)
        clone.calculus = self.calculus
        clone._variables = self._variables
        clone._index = self._index
        clone._labels = dict(self._labels)
        return clone

    @property
    def variables(self) -> Tuple[Variable, ...]:
        return self._variables

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(v.name for v in self._variables)

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __len__(self) -> int:
        return len(self._variables)

    def variable(self, name: str) -> Variable:
        return self._variables[self._index[name]]

    def existing_names(self) -> Tuple[str, ...]:
        return tuple(v.name for v in self._variables if v.exists)

    def types(self) -> Dict[str, Optional[str]]:
        return {v.name: v.object_type for v in self._variables}

    def label(self, a: str, b: str) -> RelationSet:
        """Label of the ordered pair (a, b)."""
        if a == b:
            return frozenset({self.calculus.identity})
        if self._index[a] < self._index[b]:
            return self._labels.get((a, b), self.calculus.universal)
        return self.calculus.converse(self._labels.get((b, a), self.calculus.universal))

    def pairs(self, existing_only: bool = True) -> List[Pair]:
        """Unordered pairs in variable order."""
        names = self.existing_names() if existing_only else self.names
        return [(names[i], names[j]) for i in range(len(names)) for j in range(i + 1, len(names))]

    def asserted(self) -> Dict[Pair, RelationSet]:
        """Non-universal labels, oriented by variable order."""
        return dict(self._labels)

    def with_label(self, a: str, b: str, rs: Iterable) -> 'ConstraintNetwork':
        clone = self._copy()
        clone._store(a, b, self.calculus.relation_set(rs))
        return clone

    def constrained(self, a: str, b: str, rs: Iterable) -> 'ConstraintNetwork':
        """Network with label(a, b) intersected with ``rs``."""
        return self.with_label(a, b, self.label(a, b) & self.calculus.relation_set(rs))

    def with_labels(self, labels: Mapping[Pair, Iterable]) -> 'ConstraintNetwork':
        clone = self._copy()
        for (a, b), rs in labels.items():
            clone._store(a, b, self.calculus.relation_set(rs))
        return clone

    def with_variables(self, variables: Sequence[Variable]) -> 'ConstraintNetwork':
        """Network over new variable annotations; labels between kept names survive."""
        kept = {v.name for v in variables}
        labels = {p: rs for p, rs in self._labels.items() if p[0] in kept and p[1] in kept}
        return ConstraintNetwork(variables, labels, self.calculus)

    def restrict(self, names: Iterable[str]) -> 'ConstraintNetwork':
        wanted = set(names)
        return self.with_variables([v for v in self._variables if v.name in wanted])

    def is_scenario(self) -> bool:
        return all(len(self.label(a, b)) == 1 for a, b in self.pairs())

    def has_empty_label(self) -> bool:
        return any(not self.label(a, b) for a, b in self.pairs())

    def key(self) -> Tuple:
        """Hashable canonical form, independent of variable order."""
        labels = []
        for a, b in self.pairs():
            lo, hi = (a, b) if a < b else (b, a)
            labels.append((lo, hi, tuple(self.calculus.sort(self.label(lo, hi)))))
        return (tuple(sorted(self._variables, key=lambda v: v.name)), tuple(sorted(labels)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ConstraintNetwork):
            return NotImplemented
        return self.calculus is other.calculus and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        return f"ConstraintNetwork({list(self.names)}, {len(self._labels)} constrained pairs)"

    def to_text(self, header: bool = True) -> str:
        """
        Canonical text form: optional ``@var`` lines in variable order, then one
        ``idA ; idB ; {rel,...}`` line per pair of existing variables, sorted
        lexicographically with the smaller id first.
        """
        lines = []
        if header:
            for v in self._variables:
                parts = [f"@var {v.name}"]
                if v.object_type:
                    parts.append(f"type={v.object_type}")
                if not v.exists:
                    parts.append("exists=false")
                if v.coref:
                    parts.append(f"coref={v.coref}")
                lines.append(' '.join(parts))
        pair_lines = []
        for a, b in self.pairs():
            lo, hi = (a, b) if a < b else (b, a)
            pair_lines.append(f"{lo} ; {hi} ; {self.calculus.format_set(self.label(lo, hi))}")
        lines.extend(sorted(pair_lines))
        return '\n'.join(lines) + ('\n' if lines else '')


@dataclass(frozen=True)
class ClosureResult:
    """Outcome of algebraic closure: refined network or an emptied triangle."""

    network: ConstraintNetwork
    consistent: bool
    conflict: Optional[Tuple[str, ...]] = None


def algebraic_closure(net: ConstraintNetwork) -> ClosureResult:
    """
    Refine every label with the composition over all triangles until a fixpoint.

    Only pairs whose labels changed are re-examined. Variables flagged as
    nonexistent are left out and keep their labels.
    """
    calc = net.calculus
    names = net.existing_names()
    n = len(names)
    matrix = [[calc.universal] * n for _ in range(n)]
    for i in range(n):
        matrix[i][i] = frozenset({calc.identity})
        for j in range(i + 1, n):
            rs = net.label(names[i], names[j])
            if not rs:
                return ClosureResult(net, False, (names[i], names[j]))
            matrix[i][j] = rs
            matrix[j][i] = calc.converse(rs)

    queue = deque((i, j) for i in range(n) for j in range(i + 1, n) if matrix[i][j] != calc.universal)
    queued = set(queue)

    def revise(x: int, z: int, refined: RelationSet) -> bool:
        current = matrix[x][z]
        narrowed = current & refined
        if narrowed == current:
            return False
        matrix[x][z] = narrowed
        matrix[z][x] = calc.converse(narrowed)
        edge = (x, z) if x < z else (z, x)
        if edge not in queued:
            queued.add(edge)
            queue.append(edge)
        return True

    while queue:
        i, j = queue.popleft()
        queued.discard((i, j))
        for k in range(n):
            if k == i or k == j:
                continue
            if revise(i, k, calc.compose(matrix[i][j], matrix[j][k])) and not matrix[i][k]:
                return ClosureResult(net, False, (names[i], names[j], names[k]))
            if revise(k, j, calc.compose(matrix[k][i], matrix[i][j])) and not matrix[k][j]:
                return ClosureResult(net, False, (names[k], names[i], names[j]))

    refined = net.with_labels({(names[i], names[j]): matrix[i][j]
                               for i in range(n) for j in range(i + 1, n)})
    return ClosureResult(refined, True)


def is_scenario(net: ConstraintNetwork) -> bool:
    """True iff every label between existing variables is a singleton."""
    return net.is_scenario()


def enumerate_scenarios(net: ConstraintNetwork, limit: Optional[int] = None) -> List[ConstraintNetwork]:
    """
    Backtracking search for closed consistent scenarios refining ``net``.

    Pairs are split in variable order and relations tried in tag order, so
    the result order is deterministic.
    """
    scenarios: List[ConstraintNetwork] = []
    closed = algebraic_closure(net)
    if not closed.consistent:
        return scenarios

    def backtrack(current: ConstraintNetwork):
        if limit is not None and len(scenarios) >= limit:
            return
        for a, b in current.pairs():
            label = current.label(a, b)
            if len(label) > 1:
                break
        else:
            scenarios.append(current)
            return
        for r in current.calculus.sort(label):
            step = algebraic_closure(current.with_label(a, b, {r}))
            if step.consistent:
                backtrack(step.network)
            if limit is not None and len(scenarios) >= limit:
                return

    backtrack(closed.network)
    logger.debug(f"Enumerated {len(scenarios)} scenarios over {len(net.existing_names())} variables")
    return scenarios


def is_consistent(net: ConstraintNetwork) -> bool:
    """Closure verdict for scenarios; backtracking for disjunctive networks."""
    if net.is_scenario():
        return algebraic_closure(net).consistent
    return bool(enumerate_scenarios(net, limit=1))


def minimal_conflict(net: ConstraintNetwork) -> List[Tuple[str, str, RelationSet]]:
    """
    A subset-minimal set of asserted labels that is already inconsistent.

    Deletion filter: each asserted label is dropped in turn and kept out if
    the rest stays inconsistent. Returns an empty list for consistent networks.
    """
    if is_consistent(net):
        return []
    existing = set(net.existing_names())
    asserted = [(a, b, rs) for (a, b), rs in net.asserted().items() if a in existing and b in existing]
    asserted.sort(key=lambda item: (min(item[0], item[1]), max(item[0], item[1])))
    kept = list(asserted)
    for item in asserted:
        trial = [c for c in kept if c is not item]
        candidate = ConstraintNetwork(net.variables, {(a, b): rs for a, b, rs in trial}, net.calculus)
        if not is_consistent(candidate):
            kept = trial
    return kept

"""
Binary qualitative calculi: RCC-8 topology and a point-algebra size calculus.

A calculus is a set of base relations together with converse and composition
tables and a conceptual neighbourhood graph. Labels are frozensets of relation
tags; the empty set is an unsatisfiable label and the full set carries no
information.
"""

import re
import logging
from collections import deque
from enum import Enum
from functools import lru_cache
from typing import Dict, FrozenSet, Iterable, List, Mapping, Sequence, Tuple

from .exceptions import CalculusDefinitionError, ParseError

logger = logging.getLogger(__name__)

# label pairs: 2^8 x 2^8 for RCC-8
COMPOSE_CACHE_SIZE = 1 << 16

RelationSet = FrozenSet[str]


class BaseRelation(str, Enum):
    """The eight RCC-8 base relations, in canonical tag order."""

    DC = 'dc'
    EC = 'ec'
    PO = 'po'
    EQ = 'eq'
    TPP = 'tpp'
    NTPP = 'ntpp'
    TPPI = 'tppi'
    NTPPI = 'ntppi'

    def __str__(self) -> str:
        return self.value


class SizeRelation(str, Enum):
    """Qualitative size atoms of a total-order point algebra."""

    SMALLER = 'smaller'
    EQUAL = 'equal'
    LARGER = 'larger'

    def __str__(self) -> str:
        return self.value


def _tag(relation) -> str:
    return relation.value if isinstance(relation, Enum) else str(relation)


class Calculus:
    """
    A binary qualitative calculus given by lookup tables.

    Args:
        name: Short calculus name used in logs and files
        relations: Base relation tags in canonical order
        converse_table: Converse of every base relation
        composition_table: Composition of every ordered pair of base relations
        neighbourhood: Undirected conceptual neighbourhood edges
        identity: The identity relation of the calculus

    Raises:
        CalculusDefinitionError: If a table is incomplete or refers to unknown tags
    """

    def __init__(self, name: str, relations: Sequence[str],
                 converse_table: Mapping[str, str],
                 composition_table: Mapping[Tuple[str, str], Iterable[str]],
                 neighbourhood: Iterable[Tuple[str, str]],
                 identity: str):
        self.name = name
        self.relations: Tuple[str, ...] = tuple(_tag(r) for r in relations)
        if len(set(self.relations)) != len(self.relations) or not self.relations:
            raise CalculusDefinitionError(f"Calculus '{name}' needs distinct, nonempty relations")

        self._order = {r: i for i, r in enumerate(self.relations)}
        self.universal: RelationSet = frozenset(self.relations)
        self.empty: RelationSet = frozenset()
        self.identity = _tag(identity)
        if self.identity not in self._order:
            raise CalculusDefinitionError(f"Identity '{identity}' is not a relation of '{name}'")

        self._converse = {_tag(k): _tag(v) for k, v in converse_table.items()}
        missing = self.universal - set(self._converse)
        if missing:
            raise CalculusDefinitionError(f"Converse table of '{name}' misses {sorted(missing)}")

        self._composition: Dict[Tuple[str, str], RelationSet] = {}
        for (r1, r2), result in composition_table.items():
            self._composition[(_tag(r1), _tag(r2))] = frozenset(_tag(r) for r in result)
        for r1 in self.relations:
            for r2 in self.relations:
                entry = self._composition.get((r1, r2))
                if entry is None:
                    raise CalculusDefinitionError(f"Composition table of '{name}' misses ({r1}, {r2})")
                if not entry <= self.universal:
                    raise CalculusDefinitionError(
                        f"Composition ({r1}, {r2}) of '{name}' names unknown relations {sorted(entry - self.universal)}"
                    )

        adjacency = {r: set() for r in self.relations}
        for a, b in neighbourhood:
            a, b = _tag(a), _tag(b)
            if a not in adjacency or b not in adjacency or a == b:
                raise CalculusDefinitionError(f"Invalid neighbourhood edge ({a}, {b}) in '{name}'")
            adjacency[a].add(b)
            adjacency[b].add(a)
        self._adjacency: Dict[str, RelationSet] = {r: frozenset(n) for r, n in adjacency.items()}
        self._distances = self._all_pairs_distances()

        logger.debug(f"Calculus '{name}' built with {len(self.relations)} relations")

    def _all_pairs_distances(self) -> Dict[Tuple[str, str], int]:
        distances = {}
        for source in self.relations:
            seen = {source: 0}
            queue = deque([source])
            while queue:
                current = queue.popleft()
                for nxt in self._adjacency[current]:
                    if nxt not in seen:
                        seen[nxt] = seen[current] + 1
                        queue.append(nxt)
            if len(seen) != len(self.relations):
                raise CalculusDefinitionError(f"Neighbourhood graph of '{self.name}' is not connected")
            for target, d in seen.items():
                distances[(source, target)] = d
        return distances

    def __repr__(self) -> str:
        return f"Calculus({self.name!r}, {len(self.relations)} relations)"

    @property
    def diameter(self) -> int:
        """Longest shortest path in the neighbourhood graph."""
        return max(self._distances.values())

    def relation_set(self, relations: Iterable) -> RelationSet:
        """Build a label from tags, rejecting unknown ones."""
        result = frozenset(_tag(r) for r in relations)
        unknown = result - self.universal
        if unknown:
            raise ParseError(f"Unknown {self.name} relations: {sorted(unknown)}")
        return result

    def sort(self, rs: Iterable[str]) -> List[str]:
        """Relations of a label in canonical tag order."""
        return sorted((_tag(r) for r in rs), key=self._order.__getitem__)

    def format_set(self, rs: Iterable[str]) -> str:
        return '{' + ','.join(self.sort(rs)) + '}'

    def converse(self, rs: Iterable[str]) -> RelationSet:
        """Elementwise converse of a label."""
        return frozenset(self._converse[_tag(r)] for r in rs)

    @lru_cache(maxsize=COMPOSE_CACHE_SIZE)
    def compose(self, rs1: RelationSet, rs2: RelationSet) -> RelationSet:
        """Union of table entries over all member pairs; empty if either input is empty."""
        result = set()
        for r1 in rs1:
            for r2 in rs2:
                result |= self._composition[(_tag(r1), _tag(r2))]
                if len(result) == len(self.relations):
                    return self.universal
        return frozenset(result)

    def cnd_distance(self, a, b) -> int:
        """Shortest-path length between two base relations in the neighbourhood graph."""
        return self._distances[(_tag(a), _tag(b))]

    def set_distance(self, rs: Iterable[str], b) -> int:
        """Minimum distance from any member of a label to ``b``."""
        return min(self.cnd_distance(a, b) for a in rs)

    def neighbors(self, a) -> RelationSet:
        """Relations one neighbourhood edge away from ``a``."""
        return self._adjacency[_tag(a)]

    def shortest_path(self, a, b) -> List[str]:
        """One shortest neighbourhood path, preferring earlier tags at each step."""
        a, b = _tag(a), _tag(b)
        path = [a]
        while path[-1] != b:
            remaining = self.cnd_distance(path[-1], b)
            step = next(n for n in self.sort(self._adjacency[path[-1]])
                        if self.cnd_distance(n, b) == remaining - 1)
            path.append(step)
        return path


_DC, _EC, _PO, _EQ = 'dc', 'ec', 'po', 'eq'
_TPP, _NTPP, _TPPI, _NTPPI = 'tpp', 'ntpp', 'tppi', 'ntppi'
_ALL8 = (_DC, _EC, _PO, _EQ, _TPP, _NTPP, _TPPI, _NTPPI)

_RCC8_CONVERSE = {
    _DC: _DC, _EC: _EC, _PO: _PO, _EQ: _EQ,
    _TPP: _TPPI, _NTPP: _NTPPI, _TPPI: _TPP, _NTPPI: _NTPP,
}

# Row: relation of (x, y); column: relation of (y, z); entry: possible (x, z).
_RCC8_ROWS = {
    _DC: {
        _DC: _ALL8,
        _EC: (_DC, _EC, _PO, _TPP, _NTPP),
        _PO: (_DC, _EC, _PO, _TPP, _NTPP),
        _TPP: (_DC, _EC, _PO, _TPP, _NTPP),
        _NTPP: (_DC, _EC, _PO, _TPP, _NTPP),
        _TPPI: (_DC,),
        _NTPPI: (_DC,),
    },
    _EC: {
        _DC: (_DC, _EC, _PO, _TPPI, _NTPPI),
        _EC: (_DC, _EC, _PO, _EQ, _TPP, _TPPI),
        _PO: (_DC, _EC, _PO, _TPP, _NTPP),
        _TPP: (_EC, _PO, _TPP, _NTPP),
        _NTPP: (_PO, _TPP, _NTPP),
        _TPPI: (_DC, _EC),
        _NTPPI: (_DC,),
    },
    _PO: {
        _DC: (_DC, _EC, _PO, _TPPI, _NTPPI),
        _EC: (_DC, _EC, _PO, _TPPI, _NTPPI),
        _PO: _ALL8,
        _TPP: (_PO, _TPP, _NTPP),
        _NTPP: (_PO, _TPP, _NTPP),
        _TPPI: (_DC, _EC, _PO, _TPPI, _NTPPI),
        _NTPPI: (_DC, _EC, _PO, _TPPI, _NTPPI),
    },
    _TPP: {
        _DC: (_DC,),
        _EC: (_DC, _EC),
        _PO: (_DC, _EC, _PO, _TPP, _NTPP),
        _TPP: (_TPP, _NTPP),
        _NTPP: (_NTPP,),
        _TPPI: (_DC, _EC, _PO, _EQ, _TPP, _TPPI),
        _NTPPI: (_DC, _EC, _PO, _TPPI, _NTPPI),
    },
    _NTPP: {
        _DC: (_DC,),
        _EC: (_DC,),
        _PO: (_DC, _EC, _PO, _TPP, _NTPP),
        _TPP: (_NTPP,),
        _NTPP: (_NTPP,),
        _TPPI: (_DC, _EC, _PO, _TPP, _NTPP),
        _NTPPI: _ALL8,
    },
    _TPPI: {
        _DC: (_DC, _EC, _PO, _TPPI, _NTPPI),
        _EC: (_EC, _PO, _TPPI, _NTPPI),
        _PO: (_PO, _TPPI, _NTPPI),
        _TPP: (_PO, _EQ, _TPP, _TPPI),
        _NTPP: (_PO, _TPP, _NTPP),
        _TPPI: (_TPPI, _NTPPI),
        _NTPPI: (_NTPPI,),
    },
    _NTPPI: {
        _DC: (_DC, _EC, _PO, _TPPI, _NTPPI),
        _EC: (_PO, _TPPI, _NTPPI),
        _PO: (_PO, _TPPI, _NTPPI),
        _TPP: (_PO, _TPPI, _NTPPI),
        _NTPP: (_PO, _EQ, _TPP, _NTPP, _TPPI, _NTPPI),
        _TPPI: (_NTPPI,),
        _NTPPI: (_NTPPI,),
    },
}

_RCC8_NEIGHBOURHOOD = (
    (_DC, _EC), (_EC, _PO),
    (_PO, _TPP), (_PO, _TPPI), (_PO, _EQ),
    (_TPP, _NTPP), (_TPPI, _NTPPI),
    (_TPP, _EQ), (_TPPI, _EQ),
)


def _with_identity(rows: Mapping[str, Mapping[str, Iterable[str]]], relations: Sequence[str],
                   identity: str) -> Dict[Tuple[str, str], Tuple[str, ...]]:
    table = {}
    for r in relations:
        table[(identity, r)] = (r,)
        table[(r, identity)] = (r,)
    for r1, row in rows.items():
        for r2, entry in row.items():
            table[(r1, r2)] = tuple(entry)
    return table


RCC8 = Calculus(
    'rcc8',
    relations=[r.value for r in BaseRelation],
    converse_table=_RCC8_CONVERSE,
    composition_table=_with_identity(_RCC8_ROWS, _ALL8, _EQ),
    neighbourhood=_RCC8_NEIGHBOURHOOD,
    identity=_EQ,
)

_LT, _SEQ, _GT = 'smaller', 'equal', 'larger'

SIZE = Calculus(
    'size',
    relations=[r.value for r in SizeRelation],
    converse_table={_LT: _GT, _SEQ: _SEQ, _GT: _LT},
    composition_table={
        (_LT, _LT): (_LT,), (_LT, _SEQ): (_LT,), (_LT, _GT): (_LT, _SEQ, _GT),
        (_SEQ, _LT): (_LT,), (_SEQ, _SEQ): (_SEQ,), (_SEQ, _GT): (_GT,),
        (_GT, _LT): (_LT, _SEQ, _GT), (_GT, _SEQ): (_GT,), (_GT, _GT): (_GT,),
    },
    neighbourhood=((_LT, _SEQ), (_SEQ, _GT)),
    identity=_SEQ,
)

# Proper parts are strictly smaller in area; connection alone says nothing.
TOPOLOGY_SIZE_INTERACTION: Dict[str, RelationSet] = {
    _DC: SIZE.universal,
    _EC: SIZE.universal,
    _PO: SIZE.universal,
    _EQ: frozenset({_SEQ}),
    _TPP: frozenset({_LT}),
    _NTPP: frozenset({_LT}),
    _TPPI: frozenset({_GT}),
    _NTPPI: frozenset({_GT}),
}


def converse(rs: Iterable) -> RelationSet:
    """RCC-8 converse of a label."""
    return RCC8.converse(rs)


def compose(rs1: Iterable, rs2: Iterable) -> RelationSet:
    """RCC-8 weak composition of two labels."""
    return RCC8.compose(frozenset(_tag(r) for r in rs1), frozenset(_tag(r) for r in rs2))


def cnd_distance(a, b) -> int:
    """RCC-8 conceptual neighbourhood distance."""
    return RCC8.cnd_distance(a, b)


def neighbors(a) -> RelationSet:
    """RCC-8 conceptual neighbours of a base relation."""
    return RCC8.neighbors(a)


def size_entailed(topo: Iterable) -> RelationSet:
    """Size atoms compatible with at least one member of a topology label."""
    result = set()
    for r in topo:
        result |= TOPOLOGY_SIZE_INTERACTION[_tag(r)]
    return frozenset(result)


def topology_compatible(size: Iterable) -> RelationSet:
    """Topology relations whose size entailment meets the given size label."""
    size = frozenset(_tag(s) for s in size)
    return frozenset(r for r, allowed in TOPOLOGY_SIZE_INTERACTION.items() if allowed & size)


def rels(*tags) -> RelationSet:
    """Shorthand for an RCC-8 label, e.g. ``rels('dc', 'ec')``."""
    return RCC8.relation_set(tags)


class CalculusLoader:
    """Load alternative binary calculi from line-oriented text files."""

    DIRECTIVE_PATTERN = re.compile(r'^@(name|relations|identity|converse|neighbors)\s+(.+)$')
    ENTRY_PATTERN = re.compile(r'^(\w+)\s*;\s*(\w+)\s*;\s*\{([\w\s,]*)\}$')

    @staticmethod
    def load(filename: str) -> Calculus:
        """
        Parse a calculus file.

        Format::

            @name size
            @relations smaller equal larger
            @identity equal
            @converse smaller larger
            @neighbors smaller equal
            smaller ; smaller ; {smaller}

        Raises:
            ParseError: If a line does not match the format
            CalculusDefinitionError: If the tables are incomplete
        """
        try:
            with open(filename, 'r', encoding='utf-8') as f:
                lines = f.readlines()
        except OSError as e:
            raise ParseError(f"Cannot read calculus file {filename}: {e}")

        name, identity = filename, None
        relations: List[str] = []
        converse_table: Dict[str, str] = {}
        edges: List[Tuple[str, str]] = []
        composition: Dict[Tuple[str, str], List[str]] = {}

        for line_num, raw in enumerate(lines, start=1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            directive = CalculusLoader.DIRECTIVE_PATTERN.match(line)
            if directive:
                key, value = directive.group(1), directive.group(2).split()
                if key == 'name':
                    name = value[0]
                elif key == 'relations':
                    relations = value
                elif key == 'identity':
                    identity = value[0]
                elif key == 'converse' and len(value) == 2:
                    converse_table[value[0]] = value[1]
                    converse_table[value[1]] = value[0]
                elif key == 'neighbors' and len(value) == 2:
                    edges.append((value[0], value[1]))
                else:
                    raise ParseError(f"{filename}:{line_num}: malformed directive '{line}'")
                continue
            entry = CalculusLoader.ENTRY_PATTERN.match(line)
            if not entry:
                raise ParseError(f"{filename}:{line_num}: expected 'r1 ; r2 ; {{r,...}}', got '{line}'")
            members = [m.strip() for m in entry.group(3).split(',') if m.strip()]
            composition[(entry.group(1), entry.group(2))] = members

        if identity is None:
            raise CalculusDefinitionError(f"{filename}: missing @identity")
        logger.info(f"Loaded calculus '{name}' from {filename}")
        return Calculus(name, relations, converse_table, composition, edges, identity)

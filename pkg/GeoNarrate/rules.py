"""
Process recognition over narratives.

A process rule binds typed variables and lists event atoms that must all
occur in the narrative, optionally ordered in time. Example rule file::

    object_types: [MangroveZone, RuralZone, Park]
    rules:
      - name: rural_expansion
        bindings:
          - {var: rz, type: RuralZone}
          - {var: rz_new, type: RuralZone}
        pattern:
          - {kind: merge, vars: ["*rz", rz_new]}

A variable written ``*name`` binds the list of merge parts or split
children. Transition atoms match either orientation of the pair.
"""

import logging
from dataclasses import dataclass, field
from itertools import chain
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .calculus import RCC8, RelationSet
from .events import EventKind, EventOccurrence, Narrative
from .exceptions import ConfigurationError, GeoNarrateError, UnknownObjectTypeError, ValidationError
from .file_handler import FileHandler

logger = logging.getLogger(__name__)

RELATION_ALIASES = {
    'overlap': frozenset({'po'}),
    'inside': frozenset({'tpp', 'ntpp'}),
    'contains': frozenset({'tppi', 'ntppi'}),
    'disjoint': frozenset({'dc', 'ec'}),
    'touch': frozenset({'ec'}),
    'equal': frozenset({'eq'}),
}

TEMPORAL_OPERATORS = ('during', 'before', 'after', 'not_same_step')
INTERVAL_POLICIES = ('span', 'first', 'last')

Binding = Dict[str, Union[str, Tuple[str, ...]]]


def eval_temporal(op: str, event_time: int, interval: Union[int, Sequence[int]]) -> bool:
    """
    Evaluate a temporal operator.

    ``during`` takes an inclusive ``(start, end)`` interval; the other
    operators compare against the time of another event.
    """
    if op == 'during':
        start, end = interval
        if start > end:
            raise ValidationError(f"Interval [{start}, {end}] is not ordered")
        return start <= event_time <= end
    other = interval if isinstance(interval, int) else interval[0]
    if op == 'before':
        return event_time < other
    if op == 'after':
        return event_time > other
    if op == 'not_same_step':
        return event_time != other
    raise ValidationError(f"Unknown temporal operator '{op}'. Available: {list(TEMPORAL_OPERATORS)}")


def parse_relations(values: Union[str, Iterable[str]]) -> RelationSet:
    """RCC-8 tags or vocabulary words such as ``overlap`` and ``inside``."""
    if isinstance(values, str):
        values = [v.strip() for v in values.strip('{}[]').split(',') if v.strip()]
    result = set()
    for value in values:
        value = value.strip().lower()
        result |= RELATION_ALIASES.get(value, None) or RCC8.relation_set([value])
    return frozenset(result)


@dataclass(frozen=True)
class TemporalConstraint:
    """This atom's event stands in ``op`` to the event of atom ``atom``."""

    op: str
    atom: int


@dataclass(frozen=True)
class EventAtom:
    kinds: FrozenSet = frozenset()
    variables: Tuple[str, ...] = ()
    target: Optional[RelationSet] = None
    temporal: Tuple[TemporalConstraint, ...] = ()

    def accepts(self, event: EventOccurrence) -> bool:
        return event.kind in self.kinds


@dataclass
class ProcessRule:
    """
    A named pattern of events over typed variables.

    Args:
        name: Process name reported for matches
        bindings: Variable name to object type; ``*`` accepts any type
        pattern: Conjunction of event atoms
        interval_policy: ``span`` (first to last supporting event), ``first`` or ``last``
        window: Optional inclusive time window all events must fall into
    """

    name: str
    bindings: Dict[str, str]
    pattern: List[EventAtom]
    interval_policy: str = 'span'
    window: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        if not self.pattern:
            raise ConfigurationError(f"Rule '{self.name}' has an empty pattern")
        for atom in self.pattern:
            for var in atom.variables:
                if var.lstrip('*') not in self.bindings:
                    raise ConfigurationError(f"Rule '{self.name}' uses undeclared variable '{var}'")
            for constraint in atom.temporal:
                if not 0 <= constraint.atom < len(self.pattern):
                    raise ConfigurationError(f"Rule '{self.name}' orders against missing atom {constraint.atom}")
        if self.interval_policy not in INTERVAL_POLICIES:
            raise ConfigurationError(f"Rule '{self.name}': unknown interval policy '{self.interval_policy}'")

    @classmethod
    def from_dict(cls, entry: Mapping[str, Any]) -> 'ProcessRule':
        try:
            name = entry['name']
            bindings = {b['var']: b.get('type', '*') for b in entry.get('bindings', [])}
            pattern = []
            for atom in entry['pattern']:
                kinds = atom['kind'] if isinstance(atom['kind'], list) else [atom['kind']]
                target = atom.get('target_relations')
                temporal = tuple(TemporalConstraint(t['op'], int(t['atom'])) for t in atom.get('temporal', []))
                for t in temporal:
                    if t.op not in TEMPORAL_OPERATORS or t.op == 'during':
                        raise ConfigurationError(f"Rule '{name}': unsupported ordering '{t.op}'")
                pattern.append(EventAtom(
                    frozenset(EventKind.parse(k) for k in kinds),
                    tuple(atom.get('vars', [])),
                    parse_relations(target) if target is not None else None,
                    temporal,
                ))
            window = entry.get('window')
            return cls(name, bindings, pattern, entry.get('interval', 'span'),
                       tuple(int(t) for t in window) if window else None)
        except (KeyError, TypeError) as e:
            raise ConfigurationError(f"Malformed rule entry {entry!r}: {e}")
        except ConfigurationError:
            raise
        except GeoNarrateError as e:
            raise ConfigurationError(f"Rule '{entry.get('name')}': {e}")

    def types(self) -> List[str]:
        return sorted({t for t in self.bindings.values() if t != '*'})


@dataclass
class ProcessInstance:
    rule: str
    binding: Binding
    interval: Tuple[int, int]
    events: List[EventOccurrence] = field(default_factory=list)

    def to_record(self) -> Dict[str, Any]:
        return {
            'record': 'process',
            'rule': self.rule,
            'binding': {k: list(v) if isinstance(v, tuple) else v for k, v in self.binding.items()},
            'interval': list(self.interval),
            'events': [e.encoding() for e in self.events],
            'event_times': [e.time_index for e in self.events],
        }


@dataclass
class RuleSet:
    rules: List[ProcessRule]
    object_types: List[str] = field(default_factory=list)


def load_rules(source: Union[str, Sequence, Mapping, None]) -> RuleSet:
    """
    Load rules from a YAML/JSON file or parsed content.

    Accepts a list of rule entries or a mapping with ``rules`` and an optional
    ``object_types`` vocabulary.
    """
    if source is None:
        return RuleSet([])
    content = FileHandler.load_structured(source) if isinstance(source, str) else source
    object_types: List[str] = []
    if isinstance(content, Mapping):
        object_types = list(content.get('object_types', []))
        content = content.get('rules', [])
    if not isinstance(content, list):
        raise ConfigurationError("Rules must be a list of entries")
    rules = [r if isinstance(r, ProcessRule) else ProcessRule.from_dict(r) for r in content]
    logger.info(f"Loaded {len(rules)} process rules")
    return RuleSet(rules, object_types)


def _unify(atom: EventAtom, event: EventOccurrence, binding: Binding) -> List[Binding]:
    """Every extension of ``binding`` under which ``atom`` describes ``event``."""
    if not atom.accepts(event):
        return []

    if event.kind == EventKind.TRANSITION:
        orientations = [event, event.converse_oriented()]
    else:
        orientations = [event]

    extensions = []
    for candidate in orientations:
        if atom.target is not None and not (candidate.target and candidate.target <= atom.target):
            continue
        values = _split_participants(atom.variables, candidate)
        if values is None:
            continue
        extended = dict(binding)
        for var, value in values:
            name = var.lstrip('*')
            if name in extended and extended[name] != value:
                break
            extended[name] = value
        else:
            if extended not in extensions:
                extensions.append(extended)
    return extensions


def _split_participants(variables: Tuple[str, ...], event: EventOccurrence):
    participants = event.participants
    star = [i for i, v in enumerate(variables) if v.startswith('*')]
    if not star:
        if len(variables) != len(participants):
            return None
        return list(zip(variables, participants))
    if len(star) > 1:
        return None
    i = star[0]
    tail = len(variables) - i - 1
    middle = participants[i:len(participants) - tail]
    if not middle:
        return None
    values = list(zip(variables[:i], participants[:i]))
    values.append((variables[i], tuple(middle)))
    values.extend(zip(variables[i + 1:], participants[len(participants) - tail:]))
    return values


def _types_ok(rule: ProcessRule, binding: Binding, type_map: Mapping[str, str]) -> bool:
    for var, value in binding.items():
        wanted = rule.bindings.get(var, '*')
        if wanted == '*':
            continue
        ids = value if isinstance(value, tuple) else (value,)
        if any(type_map.get(i) != wanted for i in ids):
            return False
    return True


def _temporal_ok(rule: ProcessRule, chosen: Sequence[EventOccurrence]) -> bool:
    for index, atom in enumerate(rule.pattern):
        for constraint in atom.temporal:
            if not eval_temporal(constraint.op, chosen[index].time_index, chosen[constraint.atom].time_index):
                return False
    return True


def _binding_key(rule: ProcessRule, binding: Binding) -> Tuple:
    return tuple(
        ','.join(binding[v]) if isinstance(binding.get(v), tuple) else binding.get(v, '')
        for v in rule.bindings
    )


def _interval(policy: str, events: Sequence[EventOccurrence]) -> Tuple[int, int]:
    times = [e.time_index for e in events]
    if policy == 'first':
        return (min(times), min(times))
    if policy == 'last':
        return (max(times), max(times))
    return (min(times), max(times))


def match_rule(narrative: Narrative, rule: ProcessRule, type_map: Mapping[str, str],
               window: Optional[Tuple[int, int]] = None) -> List[ProcessInstance]:
    """
    Every binding of ``rule`` satisfied by the narrative.

    One instance is reported per binding; its supporting events are all the
    events that take part in some satisfying assignment of the pattern.
    """
    windows = [w for w in (rule.window, window) if w is not None]
    events = [e for e in narrative.events if all(eval_temporal('during', e.time_index, w) for w in windows)]
    supports: Dict[Tuple, Tuple[Binding, Dict[str, EventOccurrence]]] = {}

    def search(index: int, binding: Binding, chosen: List[EventOccurrence]):
        if index == len(rule.pattern):
            if not _types_ok(rule, binding, type_map) or not _temporal_ok(rule, chosen):
                return
            key = _binding_key(rule, binding)
            _, found = supports.setdefault(key, (binding, {}))
            for event in chosen:
                found[f"{event.time_index}:{event.encoding()}"] = event
            return
        for event in events:
            for extended in _unify(rule.pattern[index], event, binding):
                if _types_ok(rule, extended, type_map):
                    search(index + 1, extended, chosen + [event])

    search(0, {}, [])

    instances = []
    for key in sorted(supports):
        binding, found = supports[key]
        supporting = sorted(found.values(), key=EventOccurrence.sort_key)
        instances.append(ProcessInstance(rule.name, binding, _interval(rule.interval_policy, supporting), supporting))
    return instances


def match_rules(narrative: Narrative, rules: Union[RuleSet, Sequence[ProcessRule]],
                type_map: Optional[Mapping[str, str]] = None,
                window: Optional[Tuple[int, int]] = None) -> List[ProcessInstance]:
    """
    Match all rules against a narrative, in rule order then binding order.

    Raises:
        UnknownObjectTypeError: If a rule names a type the narrative and the
            rule file vocabulary do not know
    """
    rule_set = rules if isinstance(rules, RuleSet) else RuleSet(list(rules))
    types = dict(narrative.type_map())
    types.update(type_map or {})

    if narrative.events or narrative.states:
        known = set(types.values()) | set(rule_set.object_types)
        for rule in rule_set.rules:
            unknown = [t for t in rule.types() if t not in known]
            if unknown:
                raise UnknownObjectTypeError(f"Rule '{rule.name}' references unknown object types {unknown}")

    instances = list(chain.from_iterable(match_rule(narrative, r, types, window) for r in rule_set.rules))
    logger.info(f"Matched {len(instances)} process instances from {len(rule_set.rules)} rules")
    return instances


def format_report(instances: Sequence[ProcessInstance]) -> str:
    """Summary table: one line per instance, grouped in match order."""
    if not instances:
        return "no processes recognised\n"
    width = max(len(i.rule) for i in instances)
    lines = []
    for instance in instances:
        binding = ', '.join(
            f"{k}={'[' + ','.join(v) + ']' if isinstance(v, tuple) else v}" for k, v in instance.binding.items()
        )
        start, end = instance.interval
        lines.append(f"{instance.rule:<{width}}  t{start}-t{end}  {binding}")
    return '\n'.join(lines) + '\n'

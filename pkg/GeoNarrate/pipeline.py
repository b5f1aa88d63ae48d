"""
End-to-end processing: features to snapshots, qualitative networks, merged
networks, a narrative completed by abduction, and recognised processes. Each
stage writes its artifact into the output directory before the next one starts.
"""

import json
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Any, Dict, FrozenSet, List, Mapping, Optional, Tuple

from .abduce import ABDUCIBLE_KINDS, DEFAULT_ABDUCIBLES, DEFAULT_BUDGET, Observation, explain, interpolate
from .decorators import stage_timer, timing_decorator
from .events import DetectionConfig, EventKind, EventOccurrence, Narrative, SnapshotState, build_narrative
from .exceptions import (
    ConfigurationError, EmptyDataError, GeoNarrateError, InconsistentNetworkError, InterpolationError,
    NoExplanationError, PipelineStageError, UnresolvableConflictError, SearchBudgetExceeded, ValidationError
)
from .feature import TimedFeature
from .file_handler import FileHandler
from .integrate import IntegrityConstraint, SnapshotMerge, load_constraints, qualify_and_merge
from .parser import NetworkParser
from .qcn import ConstraintNetwork
from .qualify import PartitionPolicy, Timeline, partition, qualify_snapshot, size_network
from .validator import FeatureValidator
from .rules import RuleSet, format_report, load_rules, match_rules

logger = logging.getLogger(__name__)

ARTIFACTS = {
    'rejected': 'rejected.ndjson',
    'raw_networks': 'raw_networks.txt',
    'merged_networks': 'merged_networks.txt',
    'size_networks': 'size_networks.txt',
    'merge_report': 'merge_report.txt',
    'narrative': 'narrative.ndjson',
    'explanations': 'explanations.ndjson',
    'processes': 'processes.ndjson',
    'process_report': 'processes.txt',
    'manifest': 'manifest.json',
}


@dataclass(frozen=True)
class Budgets:
    """
    Search limits.

    Args:
        merge: Maximum repair distance for conflict resolution; None for the exhaustive bound
        abduction: Maximum number of expanded situations per gap
        interpolation_steps: Longest neighbourhood chain used to bridge a discontinuous change
    """

    merge: Optional[int] = None
    abduction: int = DEFAULT_BUDGET
    interpolation_steps: int = 4

    @classmethod
    def from_dict(cls, values: Optional[Mapping[str, Any]]) -> 'Budgets':
        values = dict(values or {})
        unknown = set(values) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"Unknown budget settings {sorted(unknown)}")
        budgets = cls(**values)
        for name in ('abduction', 'interpolation_steps'):
            if not isinstance(getattr(budgets, name), int) or getattr(budgets, name) < 0:
                raise ConfigurationError(f"Budget {name} must be a non-negative integer")
        if budgets.merge is not None and (not isinstance(budgets.merge, int) or budgets.merge < 0):
            raise ConfigurationError("Budget merge must be a non-negative integer")
        return budgets


@dataclass
class PipelineConfig:
    """All settings of one run; referenced files are read when the config is built."""

    input: str
    output_dir: str = 'output'
    eps: Optional[float] = None
    partition: PartitionPolicy = field(default_factory=PartitionPolicy)
    constraints: List[IntegrityConstraint] = field(default_factory=list)
    rules: RuleSet = field(default_factory=lambda: RuleSet([]))
    abducibles: FrozenSet[EventKind] = DEFAULT_ABDUCIBLES
    budgets: Budgets = field(default_factory=Budgets)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    error_radii: Dict[str, float] = field(default_factory=dict)
    sources: Dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, values: Mapping[str, Any], base_dir: str = '.') -> 'PipelineConfig':
        """
        Build a config from parsed YAML/JSON content.

        Raises:
            ConfigurationError: On unknown keys, missing files or invalid values
        """
        known = {'input', 'output_dir', 'eps', 'partition', 'constraints', 'rules',
                 'abducibles', 'budgets', 'detection', 'error_radii'}
        unknown = set(values) - known
        if unknown:
            raise ConfigurationError(f"Unknown configuration keys {sorted(unknown)}")
        if 'input' not in values:
            raise ConfigurationError("Configuration needs an 'input' feature file")

        def resolve_path(path: str) -> str:
            return path if os.path.isabs(path) else os.path.normpath(os.path.join(base_dir, path))

        sources = {'input': resolve_path(values['input'])}
        if not os.path.isfile(sources['input']):
            raise ConfigurationError(f"Input file not found: {sources['input']}")

        constraints = values.get('constraints')
        if isinstance(constraints, str):
            sources['constraints'] = constraints = resolve_path(constraints)
        rules = values.get('rules')
        if isinstance(rules, str):
            sources['rules'] = rules = resolve_path(rules)

        eps = values.get('eps')
        if eps is not None and (not isinstance(eps, (int, float)) or eps <= 0):
            raise ConfigurationError(f"eps must be a positive number, got {eps!r}")
        try:
            radii = {str(k): FeatureValidator.validate_error_radius(v)
                     for k, v in (values.get('error_radii') or {}).items()}
            abducibles = values.get('abducibles')
            kinds = DEFAULT_ABDUCIBLES if abducibles is None else frozenset(EventKind.parse(k) for k in abducibles)
            if kinds - ABDUCIBLE_KINDS:
                raise ConfigurationError(f"Event kinds {sorted(k.value for k in kinds - ABDUCIBLE_KINDS)} cannot be abduced")
            return cls(
                input=sources['input'],
                output_dir=resolve_path(values.get('output_dir', 'output')),
                eps=float(eps) if eps is not None else None,
                partition=PartitionPolicy.parse(values.get('partition')),
                constraints=load_constraints(constraints),
                rules=load_rules(rules),
                abducibles=kinds,
                budgets=Budgets.from_dict(values.get('budgets')),
                detection=DetectionConfig.from_dict(values.get('detection')),
                error_radii=radii,
                sources=sources,
            )
        except ConfigurationError:
            raise
        except (GeoNarrateError, AttributeError, TypeError, ValueError) as e:
            raise ConfigurationError(f"Invalid configuration: {e}")

    @classmethod
    def load(cls, path: str) -> 'PipelineConfig':
        """Read a YAML (or ``.json``) config; relative paths resolve against its directory."""
        values = FileHandler.load_structured(path)
        if not isinstance(values, Mapping):
            raise ConfigurationError(f"Configuration {path} must be a mapping")
        return cls.from_dict(values, os.path.dirname(os.path.abspath(path)))

    def snapshot(self) -> Dict[str, Any]:
        """JSON-friendly view of the effective settings."""
        return {
            'input': self.input,
            'output_dir': self.output_dir,
            'eps': self.eps,
            'partition': str(self.partition),
            'constraints': [
                {'name': c.name, 'left_type': c.left_type, 'right_type': c.right_type,
                 'allowed': sorted(c.allowed)} for c in self.constraints
            ],
            'rules': [r.name for r in self.rules.rules],
            'abducibles': sorted(k.value for k in self.abducibles),
            'budgets': {'merge': self.budgets.merge, 'abduction': self.budgets.abduction,
                        'interpolation_steps': self.budgets.interpolation_steps},
            'detection': {'tau': self.detection.tau, 'delta': self.detection.delta_ratio,
                          'growth_threshold': self.detection.growth_threshold,
                          'deformation_threshold': self.detection.deformation_threshold,
                          'detectors': list(self.detection.detectors)},
            'error_radii': dict(sorted(self.error_radii.items())),
        }


@dataclass
class RunManifest:
    input_digests: Dict[str, str] = field(default_factory=dict)
    config_snapshot: Dict[str, Any] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    artifacts: Dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'input_digests': self.input_digests,
            'config_snapshot': self.config_snapshot,
            'timings': self.timings,
            'artifacts': self.artifacts,
        }


def snapshot_label(timeline: Timeline, index: int) -> str:
    snap = timeline.snapshots[index - 1]
    return f"{snap.time_index} {snap.representative_instant.isoformat()}"


def ingest(path: str, rejected_path: Optional[str] = None) -> List[TimedFeature]:
    """
    Read features; any invalid record aborts the run.

    Raises:
        PipelineStageError: Listing the line numbers of rejected records
    """
    features, rejected = FileHandler.read_features(path)
    if rejected:
        if rejected_path:
            FileHandler.write_rejected(rejected_path, rejected)
        first = ValidationError(f"line {rejected[0]['line_number']}: {rejected[0]['error']}")
        raise PipelineStageError('ingest', f"{len(rejected)} invalid feature records",
                                 [f"line {r['line_number']}" for r in rejected]) from first
    if not features:
        raise EmptyDataError("no features")
    return features


def qualify_timeline(timeline: Timeline, eps: Optional[float] = None,
                     error_radii: Optional[Mapping[str, float]] = None) -> List[ConstraintNetwork]:
    networks = []
    for snap in timeline:
        try:
            networks.append(qualify_snapshot(snap, eps, error_radii))
        except GeoNarrateError as e:
            raise PipelineStageError('qualify', f"snapshot {snap.time_index}: {e}", snap.object_ids()) from e
    return networks


def merge_timeline(timeline: Timeline, config: PipelineConfig) -> List[SnapshotMerge]:
    """
    ``qualify_and_merge`` over every snapshot.

    Raises:
        PipelineStageError: Stage ``integrate`` when a conflict cannot be
            repaired, ``qualify`` for any other failure
    """
    merges = []
    for snap in timeline:
        try:
            merges.append(qualify_and_merge(snap, config.constraints, config.eps, config.budgets.merge,
                                            config.error_radii, details=True))
        except (UnresolvableConflictError, SearchBudgetExceeded) as e:
            raise PipelineStageError('integrate', f"snapshot {snap.time_index}: {e}", snap.object_ids()) from e
        except GeoNarrateError as e:
            raise PipelineStageError('qualify', f"snapshot {snap.time_index}: {e}", snap.object_ids()) from e
    return merges


def interpolated_chain(event: EventOccurrence, max_steps: int) -> Optional[List[EventOccurrence]]:
    """Neighbourhood steps bridging one change between single relations, or None."""
    if len(event.target) != 1 or len(event.prior or ()) != 1:
        return None
    a, b = event.participants
    start = ConstraintNetwork([a, b], {(a, b): event.prior})
    end = ConstraintNetwork([a, b], {(a, b): event.target})
    try:
        chain = interpolate(start, end, max_steps)[0]
    except InterpolationError:
        logger.warning(f"No chain within {max_steps} steps for {event.encoding()}")
        return None
    steps = len(chain) - 1
    logger.info(f"Bridged {event.encoding()} with {steps} neighbourhood steps")
    return [
        EventOccurrence(EventKind.TRANSITION, (a, b), event.time_index,
                        target=after.label(a, b), prior=before.label(a, b),
                        evidence=f"interpolated step {step} of {steps}", abduced=True)
        for step, (before, after) in enumerate(zip(chain, chain[1:]), start=1)
    ]


def narrate_timeline(timeline: Timeline, merged: List[ConstraintNetwork], config: PipelineConfig) -> Narrative:
    states = [SnapshotState(snap.time_index, network, snap.geometries(), snap.representative_instant)
              for snap, network in zip(timeline, merged)]
    return build_narrative(states, config.detection)


def pair_observation(state: SnapshotState, pair: Tuple[str, str], ratio_tol: float) -> Observation:
    """Topology and, when geometry is known, size of one pair at one snapshot."""
    a, b = pair
    sizes = size_network(state.network.restrict(pair), state.geometries, ratio_tol)
    types = {o: t for o, t in state.types.items() if o in pair and t}
    return Observation(f"t{state.time_index}", frozenset(pair), frozenset(),
                       {(a, b): state.network.label(a, b)}, types, sizes.asserted())


def abduce_discontinuities(narrative: Narrative, config: PipelineConfig) -> Tuple[Narrative, List[Dict[str, Any]]]:
    """
    Explain the transitions flagged discontinuous by abduction.

    Each flagged transition is explained from the topology and sizes of its
    pair in the snapshot before and the snapshot at the change. The cheapest
    explanation replaces the flagged event; a change without one stays flagged.
    Without both snapshots the change is bridged by neighbourhood steps within
    ``interpolation_steps`` when transitions are abducible.
    Returns the completed narrative and one record per explained change.
    """
    states = {s.time_index: s for s in narrative.states}
    events: List[EventOccurrence] = []
    records: List[Dict[str, Any]] = []
    for event in narrative.events:
        if event.kind != EventKind.TRANSITION or event.continuous:
            events.append(event)
            continue
        before, at = states.get(event.time_index - 1), states.get(event.time_index)
        if before is None or at is None:
            chain = None
            if EventKind.TRANSITION in config.abducibles:
                chain = interpolated_chain(event, config.budgets.interpolation_steps)
            events.extend(chain or [event])
            continue
        ratio_tol = config.detection.growth_threshold
        observations = [pair_observation(before, event.participants, ratio_tol),
                        pair_observation(at, event.participants, ratio_tol)]
        try:
            explanations = explain(observations, config.abducibles, config.budgets.abduction)
        except (NoExplanationError, SearchBudgetExceeded, InconsistentNetworkError) as e:
            logger.warning(f"Kept {event.encoding()} at t{event.time_index} flagged: {e}")
            events.append(event)
            continue
        best = explanations[0]
        primary = best.primary()
        for step, abduced in enumerate(primary, start=1):
            events.append(replace(abduced, time_index=event.time_index,
                                  evidence=f"abduced step {step} of {len(primary)} after t{before.time_index}"))
        records.append({
            'record': 'explanation',
            'time_index': event.time_index,
            'replaces': event.encoding(),
            'cost': best.cost,
            'events': [e.encoding() for e in primary],
            'alternatives': len(explanations),
        })
        logger.info(f"Explained {event.encoding()} at t{event.time_index} with {best.cost} events")
    return Narrative(events, narrative.states), records


def timeline_table(narrative: Narrative) -> str:
    """Human-readable timeline: one line per event."""
    lines = []
    for event in narrative.events:
        marker = ' (abduced)' if event.abduced else ''
        flag = '' if event.continuous else ' [discontinuous]'
        lines.append(f"t{event.time_index:<3} {event.encoding()}{flag}{marker}")
    return '\n'.join(lines) + ('\n' if lines else '')


@timing_decorator
def run_pipeline(config: PipelineConfig) -> RunManifest:
    """
    Run every stage and write the artifacts into ``config.output_dir``.

    Raises:
        PipelineStageError: With the failing stage and offending ids;
            artifacts of earlier stages are kept
    """
    FileHandler.ensure_dir(config.output_dir)
    manifest = RunManifest(config_snapshot=config.snapshot())
    manifest.input_digests = {name: FileHandler.sha256(path) for name, path in sorted(config.sources.items())}

    def artifact(name: str) -> str:
        path = os.path.join(config.output_dir, ARTIFACTS[name])
        manifest.artifacts[name] = path
        return path

    try:
        with stage_timer(manifest.timings, 'ingest'):
            features = ingest(config.input, os.path.join(config.output_dir, ARTIFACTS['rejected']))

        with stage_timer(manifest.timings, 'partition'):
            timeline = partition(features, config.partition)

        with stage_timer(manifest.timings, 'merge'):
            merges = merge_timeline(timeline, config)
            labels = [snapshot_label(timeline, s.time_index) for s in timeline]
            merged = [m.merged for m in merges]
            sizes = [size_network(m.merged, snap.geometries(), config.detection.growth_threshold)
                     for snap, m in zip(timeline, merges)]
            FileHandler.write_text(artifact('raw_networks'),
                                   NetworkParser.format_blocks(zip(labels, [m.raw for m in merges])))
            FileHandler.write_text(artifact('merged_networks'), NetworkParser.format_blocks(zip(labels, merged)))
            FileHandler.write_text(artifact('size_networks'), NetworkParser.format_blocks(zip(labels, sizes)))
            report = [f"[snapshot {s.time_index}] {m.result.report() if m.result else 'consistent'}"
                      for s, m in zip(timeline, merges)]
            FileHandler.write_text(artifact('merge_report'), '\n'.join(report) + '\n')

        with stage_timer(manifest.timings, 'narrate'):
            narrative = narrate_timeline(timeline, merged, config)

        with stage_timer(manifest.timings, 'abduce'):
            narrative, explanations = abduce_discontinuities(narrative, config)
            FileHandler.write_records(artifact('explanations'), explanations)
            FileHandler.write_narrative(artifact('narrative'), narrative)

        with stage_timer(manifest.timings, 'query'):
            instances = match_rules(narrative, config.rules)
            FileHandler.write_records(artifact('processes'), [i.to_record() for i in instances])
            FileHandler.write_text(artifact('process_report'), format_report(instances))

    except EmptyDataError as e:
        raise PipelineStageError('ingest', str(e)) from e
    finally:
        manifest_path = os.path.join(config.output_dir, ARTIFACTS['manifest'])
        manifest.artifacts['manifest'] = manifest_path
        FileHandler.write_text(manifest_path, json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + '\n')

    logger.info(f"Pipeline finished: {len(narrative.events)} events, {len(instances)} processes")
    return manifest


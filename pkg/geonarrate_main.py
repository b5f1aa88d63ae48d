"""
Main CLI interface for GeoNarrate.
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

from GeoNarrate.abduce import DEFAULT_BUDGET, DEFAULT_MAX_EXPLANATIONS, explain, observations_from_blocks
from GeoNarrate.exceptions import (
    ConfigurationError, EmptyDataError, GeoNarrateError, ParseError, PipelineStageError,
    SearchBudgetExceeded, ValidationError
)
from GeoNarrate.file_handler import FileHandler
from GeoNarrate.integrate import collapse_coreferents, load_constraints, resolve
from GeoNarrate.parser import NetworkParser
from GeoNarrate.pipeline import (
    PipelineConfig, abduce_discontinuities, ingest, merge_timeline, narrate_timeline, qualify_timeline,
    run_pipeline, snapshot_label, timeline_table
)
from GeoNarrate.qcn import algebraic_closure, minimal_conflict
from GeoNarrate.qualify import PartitionPolicy, partition
from GeoNarrate.rules import format_report, load_rules, match_rules

EXIT_OK = 0
EXIT_FINDING = 1
EXIT_USAGE = 2
EXIT_BUDGET = 3

logger = logging.getLogger(__name__)


def setup_logging(log_file: str = 'geonarrate.log', verbose: bool = False):
    """Configure logging to a file and to stderr; stdout carries results only."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_file),
            logging.StreamHandler(sys.stderr)
        ],
        force=True
    )


def exit_code(error: BaseException) -> int:
    """Map an error to the process exit code."""
    if isinstance(error, PipelineStageError) and error.__cause__ is not None:
        return exit_code(error.__cause__)
    if isinstance(error, SearchBudgetExceeded):
        return EXIT_BUDGET
    if isinstance(error, (ConfigurationError, ValidationError, ParseError, EmptyDataError)):
        return EXIT_USAGE
    return EXIT_FINDING


def emit(text: str, output: Optional[str] = None):
    if output:
        FileHandler.write_text(output, text)
    else:
        sys.stdout.write(text)


def parse_window(text: Optional[str]):
    if not text:
        return None
    try:
        start, end = (int(t) for t in text.split(','))
    except ValueError:
        raise ValidationError(f"Window must look like 't,t2', got '{text}'")
    if start > end:
        raise ValidationError(f"Window [{start}, {end}] is not ordered")
    return (start, end)


def cmd_qualify(args) -> int:
    features = ingest(args.input)
    timeline = partition(features, PartitionPolicy.parse(args.partition))
    networks = qualify_timeline(timeline, args.eps)
    labels = [snapshot_label(timeline, s.time_index) for s in timeline]
    emit(NetworkParser.format_blocks(zip(labels, networks)), args.output)
    return EXIT_OK


def cmd_check(args) -> int:
    """Print a verdict per network; inconsistent networks get their conflict."""
    code = EXIT_OK
    for block in FileHandler.read_blocks(args.network):
        network = block.to_network()
        result = algebraic_closure(network)
        if result.consistent:
            print(f"[{block.label}] consistent")
            continue
        code = EXIT_FINDING
        print(f"[{block.label}] inconsistent")
        print(f"conflict: {' '.join(result.conflict)}")
        for a, b, rs in minimal_conflict(network):
            print(f"violation: {a} ; {b} ; {network.calculus.format_set(rs)}")
    return code


def cmd_merge(args) -> int:
    constraints = load_constraints(args.constraints)
    parts = []
    for block in FileHandler.read_blocks(args.network):
        result = resolve(block.to_network(), constraints, args.budget)
        print(f"[{block.label}] {result.report()}")
        parts.append((block.label, collapse_coreferents(result.resolved)))
    if args.output:
        FileHandler.write_text(args.output, NetworkParser.format_blocks(parts, kind='network'))
    else:
        sys.stdout.write(NetworkParser.format_blocks(parts, kind='network'))
    return EXIT_OK


def _config_for(args) -> PipelineConfig:
    if args.config:
        config = PipelineConfig.load(args.config)
        if args.input:
            config.input = args.input
        return config
    if not args.input:
        raise ConfigurationError("narrate needs --input or --config")
    return PipelineConfig.from_dict({'input': args.input})


def cmd_narrate(args) -> int:
    config = _config_for(args)
    timeline = partition(ingest(config.input), config.partition)
    merged = [m.merged for m in merge_timeline(timeline, config)]
    narrative, _ = abduce_discontinuities(narrate_timeline(timeline, merged, config), config)
    if args.output:
        FileHandler.write_narrative(args.output, narrative)
    else:
        for record in narrative.to_records():
            print(json.dumps(record, sort_keys=True))
    sys.stdout.write(timeline_table(narrative))
    return EXIT_OK


def cmd_explain(args) -> int:
    observations = observations_from_blocks(FileHandler.read_blocks(args.observations))
    abducibles = [k.strip() for k in args.abducibles.split(',')] if args.abducibles else None
    explanations = explain(observations, abducibles, args.budget, args.max_explanations)
    lines = []
    for number, explanation in enumerate(explanations, start=1):
        lines.append(json.dumps({'record': 'explanation', 'index': number, 'cost': explanation.cost}, sort_keys=True))
        lines.extend(json.dumps(r, sort_keys=True) for r in explanation.to_records())
    emit('\n'.join(lines) + '\n', args.output)
    return EXIT_OK


def cmd_query(args) -> int:
    rules = load_rules(args.rules)
    narrative = FileHandler.read_narrative(args.narrative)
    instances = match_rules(narrative, rules, window=parse_window(args.window))
    if args.output:
        FileHandler.write_records(args.output, [i.to_record() for i in instances])
    else:
        for instance in instances:
            print(json.dumps(instance.to_record(), sort_keys=True))
    sys.stdout.write(format_report(instances))
    return EXIT_OK


def cmd_run(args) -> int:
    manifest = run_pipeline(PipelineConfig.load(args.config))
    for name, path in sorted(manifest.artifacts.items()):
        print(f"{name}: {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='geonarrate', description='Qualitative spatio-temporal narratives')
    parser.add_argument('--log-file', default='geonarrate.log', help='log file path')
    parser.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('qualify', help='qualify features into one network per snapshot')
    p.add_argument('--input', required=True)
    p.add_argument('--eps', type=float)
    p.add_argument('--partition', help="'gap', 'gap:<dur>' or 'window:<dur>'")
    p.add_argument('--output')
    p.set_defaults(handler=cmd_qualify)

    p = sub.add_parser('check', help='check network consistency')
    p.add_argument('--network', required=True)
    p.set_defaults(handler=cmd_check)

    p = sub.add_parser('merge', help='resolve conflicts under integrity constraints')
    p.add_argument('--network', required=True)
    p.add_argument('--constraints')
    p.add_argument('--budget', type=int)
    p.add_argument('--output')
    p.set_defaults(handler=cmd_merge)

    p = sub.add_parser('narrate', help='detect events between snapshots')
    p.add_argument('--input')
    p.add_argument('--config')
    p.add_argument('--output')
    p.set_defaults(handler=cmd_narrate)

    p = sub.add_parser('explain', help='abduce events between partial observations')
    p.add_argument('--observations', required=True)
    p.add_argument('--abducibles', help='comma-separated event kinds')
    p.add_argument('--budget', type=int, default=DEFAULT_BUDGET)
    p.add_argument('--max-explanations', type=int, default=DEFAULT_MAX_EXPLANATIONS)
    p.add_argument('--output')
    p.set_defaults(handler=cmd_explain)

    p = sub.add_parser('query', help='match process rules against a narrative')
    p.add_argument('--rules', required=True)
    p.add_argument('--narrative', required=True)
    p.add_argument('--window', help="inclusive time indices 't,t2'")
    p.add_argument('--output')
    p.set_defaults(handler=cmd_query)

    p = sub.add_parser('run', help='run the whole pipeline from a config file')
    p.add_argument('--config', required=True)
    p.set_defaults(handler=cmd_run)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the GeoNarrate CLI; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    setup_logging(args.log_file, args.verbose)
    try:
        code = args.handler(args)
        logger.info(f"Command {args.command} finished with exit code {code}")
        return code

    except (GeoNarrateError, FileNotFoundError) as e:
        if isinstance(e, FileNotFoundError):
            e = ConfigurationError(str(e))
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return exit_code(e)

    except KeyboardInterrupt:
        logger.info("Operation cancelled by user")
        return EXIT_FINDING


if __name__ == "__main__":
    sys.exit(main())

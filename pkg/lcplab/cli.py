"""Command-line surface: run scenarios, the property suite, benches and reports."""
import argparse
import logging
import sys
from typing import List, Optional, Sequence

import pandas as pd

from . import config
from .analysis_pipeline import (load_latest_results, run_accounting, run_analysis_pipeline,
                                run_bench, run_property_suite)
from .bench import SUITES
from .errors import LcpLabError
from .properties import PropertyTrials
from .simulation import execute_scenario, save_trace

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_ERROR = 2


def _sweep(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='lcplab',
                                     description="Location-centric profile protocol lab")
    parser.add_argument('--log-level', default='WARNING',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    commands = parser.add_subparsers(dest='command', required=True)

    run = commands.add_parser('run', help="run a scenario file and write its trace")
    run.add_argument('scenario', help="JSON file, absolute or under data/scenarios")
    run.add_argument('--seed', type=int, default=config.RANDOM_STATE)
    run.add_argument('--strict', action='store_true', help="treat a stalled run as an error")
    run.add_argument('--no-trace', action='store_true', help="do not write the trace file")

    suite = commands.add_parser('test-suite', help="run the acceptance properties")
    suite.add_argument('--quick', action='store_true', help="reduced trial counts")
    suite.add_argument('--only', nargs='+', metavar='PROPERTY')
    suite.add_argument('--seed', type=int, default=config.RANDOM_STATE)

    bench = commands.add_parser('bench', help="timing sweeps or the accounting table")
    bench.add_argument('suite', choices=list(SUITES) + ['accounting'])
    bench.add_argument('--sweep', type=_sweep, help="modulus sizes, e.g. 64,128,256")
    bench.add_argument('--repeats', type=int, default=config.BENCH_REPEATS)
    bench.add_argument('--workers', type=int, default=1)
    bench.add_argument('--seed', type=int, default=config.RANDOM_STATE)

    lab = commands.add_parser('lab', help="run everything and capture a lab report")
    lab.add_argument('--quick', action='store_true', help="reduced trial counts")
    lab.add_argument('--sweep', type=_sweep, help="bench modulus sizes")
    lab.add_argument('--workers', type=int, default=1)
    lab.add_argument('--seed', type=int, default=config.RANDOM_STATE)

    report = commands.add_parser('report', help="render the most recent saved results")
    report.add_argument('--format', choices=['text', 'csv'], default='text')
    return parser


def cmd_run(args) -> int:
    run = execute_scenario(args.scenario, args.seed, strict=args.strict)
    if not args.no_trace:
        path = save_trace(run.trace, run.plan.name, args.seed)
        print(f"Trace written to: {path}")
    print(f"\nScenario {run.plan.name} (seed {args.seed}, {run.plan.mode} mode)")
    print("=" * 50)
    for row in run.oracle:
        status = 'match' if row['match'] else 'MISMATCH'
        print(f"{row['venue']} cycle {row['cycle']} {row['dimension']}: "
              f"{row['published']} vs {row['expected']} {status}")
    for row in run.safety:
        print(f"{row['venue']} cycle {row['cycle']} safety index: {row['score']:.3f}")
    if not run.oracle:
        print("No histogram was published")
    if run.deadlock is not None:
        print(f"Stalled actors: {', '.join(run.deadlock['pending'])}")
    return EXIT_OK if run.passed else EXIT_FAILED


def cmd_test_suite(args) -> int:
    trials = PropertyTrials.quick() if args.quick else PropertyTrials()
    table = run_property_suite(trials, args.seed, args.only)
    return EXIT_OK if table['passed'].all() else EXIT_FAILED


def cmd_bench(args) -> int:
    if args.suite == 'accounting':
        table = run_accounting(args.seed)
        return EXIT_OK if (table['comm_error_pct'] <= 2.0).all() else EXIT_FAILED
    report = run_bench(args.suite, args.sweep, args.repeats, args.seed, args.workers)
    return EXIT_OK if report.annotations.get('strictly_increasing', True) else EXIT_FAILED


def cmd_lab(args) -> int:
    results = run_analysis_pipeline(args.quick, args.seed, args.sweep, args.workers)
    return EXIT_OK if results['properties']['passed'].all() else EXIT_FAILED


def cmd_report(args) -> int:
    results = load_latest_results()
    if not results:
        print("No saved results; run test-suite or bench first")
        return EXIT_FAILED
    for name, table in results.items():
        if args.format == 'csv':
            print(f"# {name}")
            sys.stdout.write(table.to_csv(index=False))
            continue
        print(f"\n{name}")
        print("=" * 50)
        with pd.option_context('display.max_columns', None, 'display.width', 120):
            print(table.to_string(index=False))
    return EXIT_OK


COMMANDS = {
    'run': cmd_run,
    'test-suite': cmd_test_suite,
    'bench': cmd_bench,
    'report': cmd_report,
    'lab': cmd_lab,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format='%(asctime)s %(name)s %(levelname)s %(message)s')
    config.verify_directory_structure()
    try:
        return COMMANDS[args.command](args)
    except LcpLabError as e:
        logger.error(f"{args.command} failed: {type(e).__name__}: {e}")
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())

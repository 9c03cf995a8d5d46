"""Lab pipeline: property suite, accounting and timing sweeps, captured into a report."""
import logging
import sys
from datetime import datetime
from io import StringIO
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import pandas as pd

from . import config, utils
from .bench import BenchReport, accounting_table, bench, print_accounting_summary, \
    print_bench_summary
from .properties import PropertySuite, PropertyTrials, print_property_summary, soundness_trials
from .statistical_analysis import StatisticalAnalyzer

logger = logging.getLogger(__name__)

SUMMARY_DIR = config.REPORTS_DIR / 'summaries'


class OutputCapture:
    """Tee stdout into a lab report while active; the report is written on exit."""

    def __init__(self, path: Path):
        self.terminal = sys.stdout
        self.path = Path(path)
        self.output = StringIO()

    def write(self, text: str):
        self.terminal.write(text)
        self.output.write(text)

    def flush(self):
        self.terminal.flush()

    def __enter__(self) -> 'OutputCapture':
        self.terminal = sys.stdout
        sys.stdout = self
        return self

    def __exit__(self, *exc_info) -> bool:
        sys.stdout = self.terminal
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(self.output.getvalue(), encoding='utf-8')
        return False


def run_property_suite(trials: Optional[PropertyTrials] = None, seed: int = config.RANDOM_STATE,
                       names: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """Run the property suite, print its summary and save the table."""
    table = PropertySuite(trials, seed).run(names)
    print_property_summary(table)
    utils.save_analysis_results({'results': table}, 'properties')
    return table


def run_bench(suite: str, sweep: Optional[Sequence[int]] = None,
              repeats: int = config.BENCH_REPEATS, seed: int = config.RANDOM_STATE,
              workers: int = 1) -> BenchReport:
    report = bench(suite, sweep, repeats, seed, workers=workers)
    print_bench_summary(report)
    annotations = pd.DataFrame([{'key': k, 'value': v} for k, v in report.annotations.items()])
    utils.save_analysis_results({'table': report.table, 'annotations': annotations},
                                f"bench_{suite}")
    return report


def run_accounting(seed: int = config.RANDOM_STATE) -> pd.DataFrame:
    table = accounting_table(seed=seed)
    print_accounting_summary(table)
    utils.save_analysis_results({'table': table}, 'bench_accounting')
    return table


def load_latest_results(directory: Path = SUMMARY_DIR) -> Dict[str, pd.DataFrame]:
    """Most recently saved result tables, keyed by file stem."""
    if not directory.exists():
        return {}
    files = sorted(directory.glob('*.csv'), key=lambda p: p.stat().st_mtime)
    return {path.stem: pd.read_csv(path) for path in files}


def run_analysis_pipeline(quick: bool = False, seed: int = config.RANDOM_STATE,
                          sweep: Optional[Sequence[int]] = None,
                          workers: int = 1) -> Dict[str, Any]:
    """Run the complete lab: properties, soundness statistics, accounting and benches.

    Everything printed is also written to output/reports/lab_report_<timestamp>.txt,
    whose path is returned under 'report'.
    """
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    config.verify_directory_structure()
    output_file = config.REPORTS_DIR / f'lab_report_{timestamp}.txt'
    trials = PropertyTrials.quick() if quick else PropertyTrials()

    with OutputCapture(output_file):
        print("Starting LCP lab run...")

        print("\nRunning property suite...")
        properties = run_property_suite(trials, seed)

        print("\nRunning soundness statistics...")
        soundness = StatisticalAnalyzer(
            soundness_trials(trials.soundness, trials.soundness_rounds, seed)
        ).run_statistical_analysis(save=True)

        print("\nRunning accounting...")
        accounting = run_accounting(seed)

        print("\nRunning benches...")
        moduli = sweep or trials.bench_moduli
        benches = {suite: run_bench(suite, moduli, trials.bench_repeats, seed, workers)
                   for suite in ('setup', 'zkctr')}

        print("\nLab run completed.")
        print(f"Results saved in: {SUMMARY_DIR}")
        print(f"Lab report saved to: {output_file}")

    return {
        'properties': properties,
        'soundness': soundness,
        'accounting': accounting,
        'bench': benches,
        'report': output_file,
    }

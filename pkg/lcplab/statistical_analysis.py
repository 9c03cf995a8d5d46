"""Statistical checks over repeated protocol trials."""
import logging
from typing import Dict, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from . import config, utils

logger = logging.getLogger(__name__)


def binomial_check(successes: int, trials: int, p: float,
                   sigmas: float = config.CONFIDENCE_SIGMAS) -> Dict[str, float]:
    """Is an observed success count within `sigmas` binomial standard deviations of n*p?"""
    expected = trials * p
    sigma = float(stats.binom.std(trials, p))
    deviation = abs(successes - expected)
    return {
        'trials': trials,
        'successes': successes,
        'rate': successes / trials if trials else 0.0,
        'expected_rate': p,
        'sigma': sigma,
        'z': deviation / sigma if sigma else (0.0 if deviation == 0 else np.inf),
        'passed': bool(deviation <= sigmas * sigma) if sigma else deviation == 0,
    }


def uniformity_check(counts: Sequence[int],
                     alpha: float = config.SIGNIFICANCE_LEVEL) -> Dict[str, float]:
    """Chi-square goodness of fit against the uniform distribution."""
    statistic, p_value = stats.chisquare(np.asarray(counts, dtype=float))
    return {'chi2': float(statistic), 'p_value': float(p_value),
            'passed': bool(p_value >= alpha)}


class StatisticalAnalyzer:
    """Acceptance rates of cheating provers and challenge-bit balance.

    The trials frame has one row per proof run with columns strategy, s,
    accepted and, optionally, ones (number of a=1 challenges) and rounds.
    """

    def __init__(self, trials: pd.DataFrame):
        self.df = trials.copy()

    def analyze_detection_rates(self) -> pd.DataFrame:
        """Observed acceptance per (strategy, s) against the 2^-s guessing rate."""
        rows = []
        for (strategy, s), group in self.df.groupby(['strategy', 's'], sort=True):
            check = binomial_check(int(group['accepted'].sum()), len(group), 2.0 ** -s)
            rows.append({'strategy': strategy, 's': s, **check})
        return pd.DataFrame(rows)

    def analyze_challenge_balance(self) -> Dict[str, float]:
        if 'ones' not in self.df or 'rounds' not in self.df:
            return {}
        ones = int(self.df['ones'].sum())
        zeros = int(self.df['rounds'].sum()) - ones
        return uniformity_check([zeros, ones])

    def print_statistical_summary(self, results: dict):
        """Print detection-rate and balance results."""
        print("\nZK-CTR Soundness Summary")
        print("=" * 50)
        rates = results['detection_rates']
        for _, row in rates.iterrows():
            status = 'ok' if row['passed'] else 'OUT OF BAND'
            print(f"{row['strategy']} s={row['s']}: accepted {row['successes']}/{row['trials']}"
                  f" (rate {row['rate']:.4f}, expected {row['expected_rate']:.4f},"
                  f" z = {row['z']:.2f}) {status}")
        balance = results['challenge_balance']
        if balance:
            print("\nChallenge Bit Balance:")
            print(f"chi2 = {balance['chi2']:.3f}, p = {balance['p_value']:.3f}")

    def run_statistical_analysis(self, save: bool = False) -> dict:
        """Main entry point for the statistical analysis."""
        logger.info(f"Analyzing {len(self.df)} proof trials")
        results = {
            'detection_rates': self.analyze_detection_rates(),
            'challenge_balance': self.analyze_challenge_balance(),
        }
        self.print_statistical_summary(results)
        if save:
            utils.save_analysis_results({'detection_rates': results['detection_rates']},
                                        'soundness')
        return results

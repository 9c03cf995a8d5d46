import pandas as pd
import pytest

from lcplab import config
from lcplab.properties import soundness_trials
from lcplab.statistical_analysis import StatisticalAnalyzer, binomial_check, uniformity_check


def test_binomial_check():
    assert binomial_check(50, 100, 0.5)['passed']
    assert binomial_check(50, 100, 0.5)['z'] == 0
    assert not binomial_check(90, 100, 0.5)['passed']
    assert binomial_check(0, 100, 2.0 ** -20)['passed']
    assert binomial_check(0, 10, 0.0)['passed']
    assert not binomial_check(1, 10, 0.0)['passed']


def test_uniformity_check():
    assert uniformity_check([50, 50])['passed']
    assert not uniformity_check([90, 10])['passed']


def test_detection_rates_per_strategy_and_rounds():
    frame = pd.DataFrame({
        'strategy': ['zero_increment'] * 8,
        's': [1, 1, 1, 1, 2, 2, 2, 2],
        'accepted': [True, False, True, False, False, True, False, False],
    })
    rates = StatisticalAnalyzer(frame).analyze_detection_rates()
    assert list(rates['s']) == [1, 2]
    assert list(rates['rate']) == [0.5, 0.25]
    assert list(rates['expected_rate']) == [0.5, 0.25]
    assert rates['passed'].all()


def test_no_balance_without_round_counts():
    frame = pd.DataFrame({'strategy': ['x'], 's': [1], 'accepted': [False]})
    assert StatisticalAnalyzer(frame).analyze_challenge_balance() == {}


def test_soundness_trials_follow_guessing_rate(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(config, 'REPORTS_DIR', tmp_path)
    trials = soundness_trials(120, rounds=(1, 2), seed=5, strategies=('double_increment',))
    assert len(trials) == 240
    results = StatisticalAnalyzer(trials).run_statistical_analysis(save=True)
    assert results['detection_rates']['passed'].all()
    assert 0.0 <= results['challenge_balance']['p_value'] <= 1.0
    assert (tmp_path / 'summaries' / 'soundness_detection_rates.csv').exists()
    assert 'ZK-CTR Soundness Summary' in capsys.readouterr().out


@pytest.mark.slow
def test_soundness_over_every_strategy():
    trials = soundness_trials(1000, rounds=(1, 2, 3, 4), seed=9)
    rates = StatisticalAnalyzer(trials).analyze_detection_rates()
    assert rates['passed'].all()

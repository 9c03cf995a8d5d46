import json

import pytest

from lcplab.analysis_pipeline import OutputCapture
from lcplab.cli import EXIT_ERROR, EXIT_FAILED, EXIT_OK, build_parser, main


@pytest.fixture(autouse=True)
def workspace(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def write_scenario(path, document):
    path.write_text(json.dumps(document), encoding='utf-8')
    return str(path)


def test_run_writes_trace(workspace, make_scenario, capsys):
    users = [{'id': 'alice', 'profile': {'age': 24}}, {'id': 'bob', 'profile': {'age': 50}}]
    scenario = write_scenario(workspace / 'pair.json', make_scenario(users, k=2, name='pair'))
    assert main(['run', scenario, '--seed', '4']) == EXIT_OK
    assert (workspace / 'output' / 'traces' / 'pair_seed4.jsonl').exists()
    assert 'match' in capsys.readouterr().out


def test_run_without_publication(workspace, make_scenario, capsys):
    users = [{'id': 'alice', 'profile': {'age': 24}}]
    scenario = write_scenario(workspace / 'short.json', make_scenario(users, k=2))
    assert main(['run', scenario, '--no-trace']) == EXIT_OK
    assert 'No histogram was published' in capsys.readouterr().out
    assert not list((workspace / 'output' / 'traces').glob('*.jsonl'))


def test_invalid_scenario_is_an_error(workspace, make_scenario):
    document = make_scenario([{'id': 'alice', 'profile': {'age': 24}}])
    document['mode'] = 'broadcast'
    assert main(['run', write_scenario(workspace / 'bad.json', document)]) == EXIT_ERROR


def test_test_suite_subset(workspace, capsys):
    assert main(['test-suite', '--quick', '--only', 'threshold_escrow']) == EXIT_OK
    assert 'threshold_escrow' in capsys.readouterr().out
    assert (workspace / 'output' / 'reports' / 'summaries' / 'properties_results.csv').exists()


def test_unknown_property_is_an_error():
    assert main(['test-suite', '--quick', '--only', 'teleportation']) == EXIT_ERROR


def test_report_needs_saved_results(capsys):
    assert main(['report']) == EXIT_FAILED
    assert 'No saved results' in capsys.readouterr().out


def test_accounting_then_report(capsys):
    assert main(['bench', 'accounting', '--seed', '3']) == EXIT_OK
    capsys.readouterr()
    assert main(['report', '--format', 'csv']) == EXIT_OK
    out = capsys.readouterr().out
    assert '# bench_accounting_table' in out
    assert 'comm_formula_bytes' in out


def test_sweep_parsing():
    args = build_parser().parse_args(['bench', 'setup', '--sweep', '64,128'])
    assert args.sweep == [64, 128]
    with pytest.raises(SystemExit):
        build_parser().parse_args(['bench', 'setup', '--sweep', '64,big'])
    with pytest.raises(SystemExit):
        build_parser().parse_args(['bench', 'warp'])


def test_too_few_repeats_is_an_error():
    assert main(['bench', 'setup', '--sweep', '64', '--repeats', '2']) == EXIT_ERROR


def test_output_capture_tees_into_report(workspace, capsys):
    path = workspace / 'output' / 'reports' / 'lab_report_test.txt'
    with OutputCapture(path):
        print("Running property suite...")
    assert 'Running property suite' in capsys.readouterr().out
    assert path.read_text(encoding='utf-8') == "Running property suite...\n"


def test_lab_parser_defaults():
    args = build_parser().parse_args(['lab', '--quick', '--sweep', '64,128'])
    assert args.quick and args.sweep == [64, 128] and args.workers == 1


@pytest.mark.slow
def test_lab_writes_a_report(workspace, capsys):
    # timing shape may legitimately fail on a loaded machine; the report must still exist
    assert main(['lab', '--quick', '--sweep', '64,128']) in (EXIT_OK, EXIT_FAILED)
    (report,) = (workspace / 'output' / 'reports').glob('lab_report_*.txt')
    text = report.read_text(encoding='utf-8')
    assert 'Running property suite' in text
    assert 'Lab run completed.' in text
    summaries = workspace / 'output' / 'reports' / 'summaries'
    assert (summaries / 'properties_results.csv').exists()
    assert (summaries / 'bench_accounting_table.csv').exists()
    capsys.readouterr()
    assert main(['report']) == EXIT_OK

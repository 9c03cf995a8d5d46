import json
import random
from pathlib import Path

import pytest

from lcplab import config, lcp_model
from lcplab.errors import ScenarioError
from lcplab.simulation import execute_scenario, inject_adversary, parse_scenario, \
    random_profile, run_scenario, save_trace

SCENARIOS = Path(__file__).resolve().parents[1] / 'data' / 'scenarios'

USERS = [{'id': 'alice', 'profile': {'age': 24}},
         {'id': 'bob', 'profile': {'age': 37}},
         {'id': 'carol', 'profile': {'age': 70}}]

SAFETY = {'name': 'safety', 'type': 'interval', 'boundaries': [0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
          'closed_upper': True}


def checkins_by_owner(run):
    owners = run.net.aliases
    return [(owners.get(r['alias'], r['alias']), r['accepted'], r['reason'])
            for r in run.trace.of_kind('checkin')]


def rejected_by_owner(run, kind):
    owners = run.net.aliases
    return {(owners.get(r['alias'], r['alias']), r['reason']) for r in run.trace.of_kind(kind)}


def test_honest_cycle_publishes_matching_histogram(make_scenario):
    run = execute_scenario(make_scenario(USERS), seed=3)
    assert run.passed
    assert len(run.trace.of_kind('publish')) == 1
    (row,) = run.oracle
    assert row['published'] == [0, 1, 1, 0, 1]
    assert row['match']
    assert all(accepted for _, accepted, _ in checkins_by_owner(run))


def test_same_seed_same_trace(make_scenario):
    document = make_scenario(USERS)
    assert run_scenario(document, 11).to_bytes() == run_scenario(document, 11).to_bytes()


def test_trace_lines_are_json(make_scenario):
    trace = run_scenario(make_scenario(USERS[:1], k=1), 2)
    kinds = [json.loads(line)['kind'] for line in trace.to_lines().splitlines()]
    assert kinds[0] == 'scenario'
    assert kinds[-1] == 'final'
    assert 'oracle' in kinds


def test_short_cycle_is_not_published():
    run = execute_scenario(SCENARIOS / 'short_cycle.json', seed=1)
    assert run.trace.of_kind('publish') == []
    abort = run.trace.of_kind('pubstats_abort')[0]
    assert abort['shares'] == 4
    assert abort['reason'] == 'ProtocolAbort'
    assert run.passed


@pytest.mark.parametrize('name', ['double_increment', 'zero_increment', 'corrupt_counter'])
def test_cheating_prover_never_changes_counters(name):
    run = execute_scenario(SCENARIOS / f"adversary_{name}.json", seed=5)
    assert ('mallory', False, 'ProtocolAbort') in checkins_by_owner(run)
    assert not any(owner == 'mallory' and accepted
                   for owner, accepted, _ in checkins_by_owner(run))
    assert run.oracle and run.passed


def test_forged_share_is_rejected():
    run = execute_scenario(SCENARIOS / 'adversary_forge_share.json', seed=5)
    assert ('mallory', False, 'CredentialError') in checkins_by_owner(run)
    assert run.passed


def test_replayed_token_is_refused():
    run = execute_scenario(SCENARIOS / 'adversary_replay_token.json', seed=5)
    assert ('mallory', 'DuplicateTokenError') in {
        (run.net.aliases.get(r['alias'], r['alias']), r['reason'])
        for r in run.trace.of_kind('redeem_rejected')}
    assert run.deadlock is None


def test_sybil_gets_one_checkin_per_epoch():
    run = execute_scenario(SCENARIOS / 'adversary_sybil_checkin.json', seed=5)
    accepted = [owner for owner, ok, _ in checkins_by_owner(run) if ok]
    assert accepted.count('mallory') <= 1
    assert run.passed


def test_wormhole_user_fails_spoter():
    run = execute_scenario(SCENARIOS / 'wormhole.json', seed=2)
    assert ('mallory', 'TimingViolation') in rejected_by_owner(run, 'spoter_rejected')
    timings = run.venues['cafe'].spoter_timings
    owners = run.net.aliases
    by_owner = {owners[t['alias']]: t['elapsed_ms'] for t in timings}
    assert by_owner['alice'] == pytest.approx(3.6)
    assert by_owner['mallory'] == pytest.approx(43.0)
    assert run.relays['relay-mallory'].relayed > 0


def test_two_venues_publish_independently():
    run = execute_scenario(SCENARIOS / 'two_venues.json', seed=4)
    venues = {r['venue'] for r in run.trace.of_kind('publish')}
    assert venues == {'cafe', 'gym'}
    assert run.passed


def test_snapshot_scenario():
    run = execute_scenario(SCENARIOS / 'snapshot_safety.json', seed=6)
    assert run.oracle[0]['match']
    assert run.oracle[0]['published'] == [1, 0, 1, 1, 2]
    assert run.safety[0]['score'] == pytest.approx(0.62)
    assert run.passed


def test_snapshot_dropout_aborts():
    run = execute_scenario(SCENARIOS / 'snapshot_dropout.json', seed=6)
    assert run.trace.of_kind('snapshot_abort')
    assert run.trace.of_kind('publish') == []


@pytest.mark.parametrize('change', [
    {'mode': 'broadcast'},
    {'dimensions': []},
    {'params': {'k': 0}},
    {'params': {'colour': 'red'}},
    {'actors': {'venues': [], 'users': USERS}},
    {'actors': {'venues': [{'id': 'cafe'}], 'users': [USERS[0], USERS[0]]}},
    {'actors': {'venues': [{'id': 'cafe'}], 'users': [dict(USERS[0], venue='bar')]}},
    {'adversaries': [{'actor': 'nobody', 'behavior': 'forge_share'}]},
    {'adversaries': [{'actor': 'alice', 'behavior': 'teleport'}]},
    {'adversaries': [{'actor': 'alice', 'behavior': 'dropout'}]},
])
def test_invalid_scenarios(make_scenario, change):
    document = make_scenario(USERS)
    document.update(change)
    with pytest.raises(ScenarioError):
        parse_scenario(document, random.Random(0))


def test_missing_scenario_file():
    with pytest.raises(ScenarioError):
        execute_scenario(SCENARIOS / 'no_such_scenario.json', seed=1)


def test_generated_users(make_scenario):
    document = make_scenario(USERS[:1])
    document['actors']['generate_users'] = {'count': 4, 'prefix': 'g', 'start_ms': 200}
    plan = parse_scenario(document, random.Random(1))
    assert [u.actor_id for u in plan.users] == ['alice', 'g2', 'g3', 'g4', 'g5']
    assert plan.users[1].start_ms == 210.0
    assert all(u.venue == 'cafe' for u in plan.users)


def test_random_profile_covers_every_dimension(age, gender):
    rng = random.Random(4)
    for _ in range(50):
        profile = random_profile([age, gender], rng)
        assert 1 <= lcp_model.classify(profile.value('age'), age) <= age.b
        assert 1 <= lcp_model.classify(profile.value('gender'), gender) <= gender.b


def test_inject_adversary_adds_a_user(make_scenario):
    document = make_scenario(USERS)
    injected = inject_adversary(document, {'actor': 'mallory', 'behavior': 'double_increment',
                                           'params': {'start_ms': 300}})
    assert len(document['actors']['users']) == 3
    mallory = injected['actors']['users'][-1]
    assert mallory == {'id': 'mallory', 'profile': {'age': 24}, 'venue': 'cafe',
                       'start_ms': 300}
    plan = parse_scenario(injected, random.Random(0))
    assert plan.users[-1].behavior == 'double_increment'


def test_inject_adversary_replaces_existing_entry(make_scenario):
    document = make_scenario(USERS, adversaries=[{'actor': 'bob', 'behavior': 'forge_share'}])
    injected = inject_adversary(document, {'actor': 'bob', 'behavior': 'replay_token'})
    assert injected['adversaries'] == [{'actor': 'bob', 'behavior': 'replay_token',
                                        'params': {}}]


def test_save_trace(make_scenario, tmp_path, monkeypatch):
    monkeypatch.setattr(config, 'TRACES_DIR', tmp_path / 'traces')
    trace = run_scenario(make_scenario(USERS[:1], k=1), 9)
    path = save_trace(trace, 'single', 9)
    assert path.name == 'single_seed9.jsonl'
    assert path.read_bytes() == trace.to_bytes()


def test_block_profiles_become_safety_labels(make_scenario):
    users = [{'id': 'alice', 'profile': {'safety': {'blocks': [0.9, 0.7],
                                                    'frequencies': [3, 1]}}},
             {'id': 'bob', 'profile': {'safety': 0.3}}]
    plan = parse_scenario(make_scenario(users, dimensions=[SAFETY]), random.Random(0))
    assert plan.users[0].profile.value('safety') == pytest.approx(0.85)
    assert plan.users[1].profile.value('safety') == 0.3


def test_venue_safety_through_the_protocol():
    run = execute_scenario(SCENARIOS / 'venue_safety.json', seed=3)
    assert run.passed
    (published,) = run.trace.of_kind('publish')
    assert published['tally']['safety'] == [1, 0, 1, 1, 1]
    assert run.safety == [{'venue': 'park', 'cycle': 1, 'score': pytest.approx(0.55)}]
    assert run.trace.of_kind('safety')[0]['score'] == pytest.approx(0.55)


@pytest.mark.parametrize('profile', [
    {'safety': {'blocks': []}},
    {'safety': {'blocks': [1.4]}},
    {'safety': {'blocks': [0.2, 0.4], 'frequencies': [1]}},
    {'safety': {'frequencies': [1]}},
])
def test_invalid_block_profiles(make_scenario, profile):
    document = make_scenario([{'id': 'alice', 'profile': profile}], dimensions=[SAFETY])
    with pytest.raises(ScenarioError):
        parse_scenario(document, random.Random(0))


def test_safety_dimension_must_cover_unit_interval(make_scenario):
    dimension = dict(SAFETY, boundaries=[0.0, 0.5, 2.0])
    with pytest.raises(ScenarioError):
        parse_scenario(make_scenario(USERS, dimensions=[dimension]), random.Random(0))


def test_snapshot_takes_a_single_dimension(make_scenario):
    dimensions = [SAFETY, {'name': 'age', 'type': 'interval', 'boundaries': [0, 18, 120]}]
    document = make_scenario(USERS, mode='snapshot', dimensions=dimensions)
    with pytest.raises(ScenarioError):
        parse_scenario(document, random.Random(0))

"""Property suite: every acceptance property of the laboratory as a runnable check."""
import itertools
import logging
import random
import time
from dataclasses import dataclass, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from . import benaloh, config, lcp_model, threshold, wire, zk_ctr
from .bench import accounting_table, bench
from .config import ProtocolParams
from .errors import DecryptionError, LcpLabError, ParameterError, ProtocolAbort
from .lcp_model import INTERVAL, DimensionSpec, Profile
from .network import MixActor, Network
from .simulation import (REPLAY_TOKEN, SYBIL_CHECKIN, WORMHOLE_RELAY, execute_scenario,
                         random_profile)
from .snapshot_protocol import run_snapshot, snapshot_pub_stats
from .statistical_analysis import StatisticalAnalyzer
from .venue_protocol import (PROVIDER_ID, KeyShare, ProviderActor, UserActor, VenueActor,
                             VenueState, check_in, pub_stats, setup, spoter, standard_topology)

logger = logging.getLogger(__name__)

# Frames a user exchanges during Spoter and CheckIn; pseudonym issuance names the user.
SESSION_TAGS = frozenset({
    wire.Tag.HELLO, wire.Tag.SPOTER_CHALLENGE, wire.Tag.SPOTER_RESPONSE, wire.Tag.TOKEN,
    wire.Tag.MIX_ENVELOPE, wire.Tag.SHARE, wire.Tag.CHECKIN_REQUEST, wire.Tag.COUNTERS,
    wire.Tag.COUNTERS_NEXT, wire.Tag.COMMIT, wire.Tag.CHALLENGE, wire.Tag.REVEAL,
    wire.Tag.CHECKIN_RESULT,
})

AGE = DimensionSpec(name='age', kind=INTERVAL, boundaries=(0, 18, 30, 45, 65, 120))


@dataclass(frozen=True)
class PropertyTrials:
    """Trial counts per property."""

    histogram: int = 200
    histogram_rounds: int = 3
    completeness: int = 1000
    soundness: int = 2000
    soundness_rounds: Tuple[int, ...] = (1, 2, 3, 4, 5, 6)
    escrow_sizes: Tuple[int, ...] = (1, 2, 5, 10)
    snapshot: int = 100
    snapshot_rounds: int = 10
    bench_repeats: int = config.BENCH_REPEATS
    bench_moduli: Tuple[int, ...] = (64, 128, 256, 512, 1024)

    @classmethod
    def quick(cls) -> 'PropertyTrials':
        return cls(histogram=8, completeness=24, soundness=200, soundness_rounds=(1, 2, 3),
                   escrow_sizes=(1, 2, 5), snapshot=4, snapshot_rounds=4,
                   bench_moduli=(64, 128, 256))


@dataclass
class PropertyResult:
    criterion: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _scenario(users: List[Dict[str, Any]], k: int, s: int = 10,
              adversaries: Sequence[Dict[str, Any]] = (), name: str = 'property') -> Dict:
    return {
        'name': name,
        'params': {'k': k, 's': s, 'modulus_bits': 256},
        'dimensions': [{'name': AGE.name, 'type': AGE.kind, 'boundaries': list(AGE.boundaries)}],
        'actors': {'venues': [{'id': 'v1', 'venue_id': 1}], 'users': users},
        'adversaries': list(adversaries),
    }


def soundness_trials(trials: int, rounds: Sequence[int], seed: int,
                     strategies: Sequence[str] = zk_ctr.CHEATING_STRATEGIES,
                     b: int = 3, modulus_bits: int = 128) -> pd.DataFrame:
    """One row per cheating proof run: strategy, s, accepted, a=1 challenges, rounds."""
    rng = random.Random(seed)
    pk, _ = benaloh.keygen(benaloh.default_block_size(b), modulus_bits, rng)
    spec = DimensionSpec(name='x', kind=INTERVAL, boundaries=tuple(range(b + 1)))
    c_prev = lcp_model.init_counters(pk, spec, rng)
    rows = []
    for strategy in strategies:
        for s in rounds:
            for _ in range(trials):
                c_next = zk_ctr.forge_counter_set(pk, c_prev, rng.randint(1, b), strategy, rng)
                transcript = zk_ctr.run_protocol(
                    zk_ctr.CheatingProver(pk, c_prev, c_next, rng),
                    zk_ctr.CounterVerifier(pk, c_prev, c_next, rng), s)
                rows.append({'strategy': strategy, 's': s, 'accepted': transcript.verdict,
                             'ones': sum(r.challenge for r in transcript.rounds),
                             'rounds': len(transcript.rounds)})
    return pd.DataFrame(rows)


def session_transcript(net: Network, actor_id: str) -> List[Tuple[str, bytes]]:
    return [(direction, data) for direction, data in net.transcripts[actor_id]
            if wire.decode(data).tag in SESSION_TAGS]


def run_single_checkin(user_id: str, seed: int, profile: Profile,
                       params: Optional[ProtocolParams] = None) -> Network:
    """One user's Spoter and CheckIn against a fresh venue; all randomness from seed."""
    params = params or ProtocolParams(k=2, s=5, modulus_bits=256)
    rng = random.Random(seed)
    net = Network(random.Random(rng.getrandbits(64)))
    provider = net.add(ProviderActor(params, random.Random(rng.getrandbits(64))))
    net.add(MixActor(random.Random(rng.getrandbits(64))))
    venue = net.add(VenueActor('v1', 1, [AGE], params, provider.public_key,
                               random.Random(rng.getrandbits(64))))
    user = net.add(UserActor(user_id, profile, [AGE], params, provider.public_key,
                             random.Random(rng.getrandbits(64))))
    standard_topology(net, PROVIDER_ID, [venue.actor_id], [user.actor_id])
    setup(net, venue, provider)
    spoter(net, user, venue)
    check_in(net, user, venue)
    return net


class PropertySuite:
    """Runs each acceptance property and tabulates the outcome."""

    def __init__(self, trials: Optional[PropertyTrials] = None, seed: int = config.RANDOM_STATE):
        self.trials = trials or PropertyTrials()
        self.seed = seed
        self.checks: Dict[str, Callable[[], Tuple[bool, str]]] = {
            'histogram_oracle': self.check_histogram_oracle,
            'zk_completeness': self.check_zk_completeness,
            'zk_soundness_rate': self.check_zk_soundness,
            'communication_accounting': self.check_accounting,
            'threshold_escrow': self.check_threshold_escrow,
            'wormhole_detection': self.check_wormhole,
            'snapshot_end_to_end': self.check_snapshot,
            'pseudonym_discipline': self.check_pseudonym_discipline,
            'ci_ind_transcripts': self.check_ci_ind,
            'bench_shape': self.check_bench_shape,
        }

    def check_histogram_oracle(self) -> Tuple[bool, str]:
        """Every seeded scenario publishes the plaintext histogram of its k check-ins."""
        rng = random.Random(self.seed)
        mismatches = published = 0
        for trial in range(self.trials.histogram):
            b, k = rng.randint(1, 8), rng.randint(1, 6)
            seed = rng.getrandbits(32)
            document = {
                'name': f"histogram_{trial}",
                'params': {'k': k, 's': self.trials.histogram_rounds, 'modulus_bits': 128},
                'dimensions': [{'name': 'd', 'type': INTERVAL,
                                'boundaries': list(range(b + 1))}],
                'actors': {'venues': [{'id': 'v1', 'venue_id': 1}],
                           'generate_users': {'count': k, 'venue': 'v1'}},
            }
            run = execute_scenario(document, seed)
            published += len(run.oracle)
            if len(run.oracle) != 1 or not run.passed:
                mismatches += 1
                logger.error(f"Histogram oracle failed in trial {trial} "
                             f"(b={b}, k={k}, seed={seed}): {run.oracle}")
        return mismatches == 0, (
            f"{mismatches} mismatches over {self.trials.histogram} scenarios "
            f"({published} published tallies)")

    def check_zk_completeness(self) -> Tuple[bool, str]:
        rng = random.Random(self.seed + 1)
        grid = list(itertools.product((1, 2, 5, 8), (1, 10, 30)))
        keys = {}
        rejected = 0
        for run in range(self.trials.completeness):
            b, s = grid[run % len(grid)]
            if b not in keys:
                pk, _ = benaloh.keygen(benaloh.default_block_size(8), 256, rng)
                spec = DimensionSpec(name='d', kind=INTERVAL, boundaries=tuple(range(b + 1)))
                keys[b] = (pk, lcp_model.init_counters(pk, spec, rng))
            pk, c_prev = keys[b]
            c_next, witness = lcp_model.reencrypt_and_increment(pk, c_prev, rng.randint(1, b), rng)
            transcript = zk_ctr.run_protocol(zk_ctr.HonestProver(pk, c_prev, c_next, witness, rng),
                                             zk_ctr.CounterVerifier(pk, c_prev, c_next, rng), s,
                                             pk=pk, b=b)
            rejected += not transcript.verdict
        return rejected == 0, f"{rejected} rejections over {self.trials.completeness} honest runs"

    def check_zk_soundness(self) -> Tuple[bool, str]:
        trials = soundness_trials(self.trials.soundness, self.trials.soundness_rounds,
                                  self.seed + 2)
        rates = StatisticalAnalyzer(trials).analyze_detection_rates()
        failed = rates[~rates['passed']]
        worst = rates['z'].max()
        return failed.empty, (f"{len(rates) - len(failed)}/{len(rates)} (strategy, s) points "
                              f"within {config.CONFIDENCE_SIGMAS:g} sigma; max z = {worst:.2f}")

    def check_accounting(self) -> Tuple[bool, str]:
        table = accounting_table(seed=self.seed + 3)
        comm_ok = bool((table['comm_error_pct'] <= 2.0).all())
        storage_ok = bool((table['storage_measured_bytes']
                           == table['storage_formula_bytes']).all())
        point = table[(table['B'] == 20) & (table['N'] == 1024)]
        headline = ''
        if not point.empty:
            row = point.iloc[0]
            comm_ok &= abs(row['comm_measured_bytes'] - 17_920) <= 0.02 * 17_920
            storage_ok &= row['storage_measured_bytes'] == 5_120
            headline = (f"B=20 N=1024: {row['comm_measured_bytes']:.0f} B/round, "
                        f"{row['storage_measured_bytes']:.0f} B storage; ")
        return comm_ok and storage_ok, headline + f"max error {table['comm_error_pct'].max():.3f}%"

    def check_threshold_escrow(self) -> Tuple[bool, str]:
        rng = random.Random(self.seed + 4)
        failures = []
        for k in self.trials.escrow_sizes:
            spec = DimensionSpec(name='d', kind=INTERVAL, boundaries=(0, 1, 2))
            pk, sk = benaloh.keygen(benaloh.default_block_size(max(k, spec.b)), 256, rng)
            share_params = threshold.cycle_share_params(k, 256)
            shares = [KeyShare(venue_id=1, cycle=1, share=share)
                      for share in threshold.split(sk.p, share_params, rng)]
            counters = lcp_model.init_counters(pk, spec, rng)
            state = VenueState(venue_id=1, cycle=1, pk=pk, counters={'d': counters},
                               shares=shares)
            try:
                pub_stats(state, {'d': spec}, k, share_params)
            except LcpLabError as e:
                failures.append(f"k={k}: {k} shares failed ({e})")
            short = replace(state, shares=shares[:k - 1])
            try:
                pub_stats(short, {'d': spec}, k, share_params)
                failures.append(f"k={k}: {k - 1} shares did not abort")
            except ProtocolAbort:
                pass
            wide = threshold.ShareParams(threshold=k, total=k + 2,
                                         field_prime=share_params.field_prime)
            all_shares = threshold.split(sk.p, wide, rng)
            for subset in itertools.combinations(all_shares, k):
                p = threshold.reconstruct(subset, wide)
                if p != sk.p or p * (pk.n // p) != pk.n:
                    failures.append(f"k={k}: subset {[s.index for s in subset]} disagrees")
                    break
        return not failures, '; '.join(failures) or f"k in {list(self.trials.escrow_sizes)} ok"

    def check_wormhole(self) -> Tuple[bool, str]:
        users = [{'id': 'near', 'profile': {'age': 30}},
                 {'id': 'far', 'profile': {'age': 40}, 'start_ms': 400}]
        document = _scenario(users, k=2, s=5, name='wormhole', adversaries=[
            {'actor': 'far', 'behavior': WORMHOLE_RELAY}])
        run = execute_scenario(document, self.seed + 5)
        owners = run.net.aliases
        venue = run.venues['v1']
        timings = {owners.get(t['alias']): t['elapsed_ms'] for t in venue.spoter_timings}
        honest, relayed = timings.get('near'), timings.get('far')
        if honest is None or relayed is None:
            return False, f"missing Spoter timings: {timings}"
        verdicts = {owners.get(r['alias']): r['reason']
                    for r in run.trace.of_kind('spoter_rejected')}
        accepted = {owners.get(r['alias']) for r in run.trace.of_kind('spoter_accepted')}
        ratio = relayed / honest
        passed = ('near' in accepted and verdicts.get('far') == 'TimingViolation'
                  and abs(honest - 3.6) < 0.05 and abs(relayed - 43.0) < 0.05
                  and abs(ratio - 12.0) <= 1.2)
        return passed, (f"honest {honest:.3f} ms, relayed {relayed:.3f} ms "
                        f"(ratio {ratio:.2f}), delta {run.plan.params.delta_ms:g} ms")

    def check_snapshot(self) -> Tuple[bool, str]:
        rng = random.Random(self.seed + 6)
        exact = premature_failures = 0
        for _ in range(self.trials.snapshot):
            k = rng.randint(1, 8)
            b = rng.randint(1, 6)
            spec = DimensionSpec(name='d', kind=INTERVAL, boundaries=tuple(range(b + 1)))
            values = [random_profile([spec], rng).value('d') for _ in range(k)]
            params = ProtocolParams(k=max(k, 1), s=self.trials.snapshot_rounds, modulus_bits=256)
            state, net = run_snapshot(values, spec, params, random.Random(rng.getrandbits(64)))
            expected = lcp_model.plaintext_histogram([lcp_model.classify(v, spec)
                                                      for v in values], b)
            if snapshot_pub_stats(state) == expected:
                exact += 1
            # leave one participant's share in place
            leftover = random.Random(rng.getrandbits(64)).randrange(2, state.pk.n)
            partial = replace(state, unblinding=state.unblinding * leftover % state.pk.n)
            try:
                premature_failures += snapshot_pub_stats(partial) != expected
            except (DecryptionError, ValueError):
                premature_failures += 1
        total = self.trials.snapshot
        passed = exact == total and premature_failures >= 0.99 * total
        return passed, (f"{exact}/{total} exact histograms; premature decryption failed "
                        f"or mismatched in {premature_failures}/{total}")

    def check_pseudonym_discipline(self) -> Tuple[bool, str]:
        users = [{'id': 'alice', 'profile': {'age': 25}},
                 {'id': 'sybil', 'profile': {'age': 50}},
                 {'id': 'replayer', 'profile': {'age': 70}}]
        document = _scenario(users, k=3, s=5, name='pseudonyms', adversaries=[
            {'actor': 'sybil', 'behavior': SYBIL_CHECKIN, 'params': {'attempts': 3}},
            {'actor': 'replayer', 'behavior': REPLAY_TOKEN}])
        run = execute_scenario(document, self.seed + 7)
        accepted: Dict[Tuple[str, str], int] = {}
        for record in run.trace.of_kind('checkin'):
            if record['accepted']:
                key = (record['venue'], record['alias'])
                accepted[key] = accepted.get(key, 0) + 1
        double = [key for key, count in accepted.items() if count > 1]
        reuse = [r for r in run.trace.of_kind('spoter_rejected')
                 if r['reason'] == 'PseudonymReuseError']
        replays = [r for r in run.trace.of_kind('redeem_rejected')
                   if r['reason'] == 'DuplicateTokenError']
        issued = {}
        for record in run.trace.of_kind('share_issued'):
            issued[record['alias']] = issued.get(record['alias'], 0) + 1
        replay_alias = run.users['replayer'].alias
        passed = (not double and len(reuse) >= 1 and len(replays) >= 1
                  and issued.get(replay_alias, 0) == 1)
        return passed, (f"{len(double)} pseudonyms with two accepted check-ins; "
                        f"{len(reuse)} reuse rejections; {len(replays)} replayed tokens refused")

    def check_ci_ind(self) -> Tuple[bool, str]:
        profile = Profile({'age': 33})
        first = run_single_checkin('alice', self.seed + 8, profile)
        second = run_single_checkin('bob', self.seed + 8, profile)
        a, b = session_transcript(first, 'alice'), session_transcript(second, 'bob')
        return bool(a) and a == b, f"{len(a)} vs {len(b)} session frames, identical={a == b}"

    def check_bench_shape(self) -> Tuple[bool, str]:
        setup_report = bench('setup', self.trials.bench_moduli, self.trials.bench_repeats,
                             seed=self.seed + 9)
        zk_report = bench('zkctr', self.trials.bench_moduli, self.trials.bench_repeats,
                          seed=self.seed + 10)
        setup_ok = setup_report.annotations['strictly_increasing']
        zk_ok = zk_report.annotations['strictly_increasing']
        r_squared = zk_report.annotations['r_squared']
        passed = setup_ok and zk_ok and r_squared >= 0.99
        return passed, (f"setup increasing={setup_ok}, zk round increasing={zk_ok}, "
                        f"rounds fit R^2={r_squared:.4f}")

    def run(self, names: Optional[Sequence[str]] = None) -> pd.DataFrame:
        """Run the selected properties (all by default); returns criterion, passed, detail."""
        results: List[PropertyResult] = []
        for name in names or list(self.checks):
            if name not in self.checks:
                raise ParameterError(f"unknown property {name!r}")
            started = time.perf_counter()
            try:
                passed, detail = self.checks[name]()
            except LcpLabError as e:
                logger.error(f"Property {name} raised {type(e).__name__}: {e}")
                passed, detail = False, f"{type(e).__name__}: {e}"
            elapsed = time.perf_counter() - started
            logger.info(f"Property {name}: {'pass' if passed else 'FAIL'} ({elapsed:.1f} s)")
            results.append(PropertyResult(name, bool(passed), detail, round(elapsed, 3)))
        return pd.DataFrame([vars(r) for r in results])


def print_property_summary(table: pd.DataFrame):
    print("\nProperty Suite Summary")
    print("=" * 50)
    for _, row in table.iterrows():
        print(f"[{'PASS' if row['passed'] else 'FAIL'}] {row['criterion']}: {row['detail']}")
    print(f"\n{int(np.sum(table['passed']))}/{len(table)} properties passed")

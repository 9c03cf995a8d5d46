"""Overhead accounting and timing benches.

Byte counts always come from serialized frames; the 7BN and 2BN formulas are
only used as the reference they are compared against. Timings are wall-clock
medians and are hardware-bound.
"""
import logging
import platform
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from . import benaloh, config, credentials, lcp_model, threshold, wire, zk_ctr
from .config import ProtocolParams
from .errors import ParameterError
from .lcp_model import DimensionSpec, INTERVAL, Profile
from .network import MixActor, Network
from .venue_protocol import (PROVIDER_ID, ProviderActor, UserActor, VenueActor, check_in,
                             setup, spoter, standard_topology)

logger = logging.getLogger(__name__)

SUITES = ('setup', 'zkctr', 'end2end')
ROUNDS_SWEEP_MODULUS = 256


@dataclass
class BenchReport:
    suite: str
    table: pd.DataFrame
    environment: Dict[str, str] = field(default_factory=dict)
    annotations: Dict[str, Any] = field(default_factory=dict)


# Accounting

def _check_point(subranges: int, modulus_bits: int):
    if subranges < 1:
        raise ParameterError(f"sub-range count must be >= 1, got {subranges}")
    if modulus_bits < config.MIN_MODULUS_BITS:
        raise ParameterError(f"modulus must be >= {config.MIN_MODULUS_BITS} bits")


def comm_bits(subranges: int, modulus_bits: int) -> int:
    """Expected ZK-CTR bits per round: 4BN commitment plus on average 3BN opening."""
    _check_point(subranges, modulus_bits)
    return 7 * subranges * modulus_bits


def storage_bits(subranges: int, modulus_bits: int) -> int:
    """Venue storage per dimension: b records of two N-bit ciphertexts."""
    _check_point(subranges, modulus_bits)
    return 2 * subranges * modulus_bits


def measured_storage_bits(pk: benaloh.BenalohPublicKey,
                          counter_set: lcp_model.CounterSet) -> int:
    return 8 * len(lcp_model.counter_set_to_bytes(pk, counter_set))


def measured_round_bits(pk: benaloh.BenalohPublicKey, c_prev: lcp_model.CounterSet,
                        c_next: lcp_model.CounterSet, witness: lcp_model.Witness,
                        rng: random.Random) -> float:
    """Payload bits of one round averaged over both challenge values."""
    reveal_bits = []
    commit_bits = 0
    for a in (0, 1):
        commitment, state = zk_ctr.prove_round(pk, c_prev, c_next, witness, rng)
        commit_bits = wire.payload_bits(zk_ctr.commit_frame(pk, commitment))
        reveal = zk_ctr.respond(pk, state, a)
        reveal_bits.append(wire.payload_bits(zk_ctr.reveal_frame(pk, reveal)))
    return commit_bits + float(np.mean(reveal_bits))


def sampled_round_bits(pk: benaloh.BenalohPublicKey, c_prev: lcp_model.CounterSet,
                       c_next: lcp_model.CounterSet, witness: lcp_model.Witness,
                       rounds: int, rng: random.Random) -> float:
    """Mean payload bits per round over a run of random challenges."""
    prover = zk_ctr.HonestProver(pk, c_prev, c_next, witness,
                                 random.Random(rng.getrandbits(64)))
    verifier = zk_ctr.CounterVerifier(pk, c_prev, c_next, random.Random(rng.getrandbits(64)))
    transcript = zk_ctr.run_protocol(prover, verifier, rounds, pk=pk, b=c_prev.b)
    return transcript.payload_bits / max(1, len(transcript.rounds))


def bench_dimension(subranges: int) -> DimensionSpec:
    return DimensionSpec(name='bench', kind=INTERVAL, boundaries=tuple(range(subranges + 1)))


def _counter_pair(pk, spec: DimensionSpec, rng: random.Random):
    c_prev = lcp_model.init_counters(pk, spec, rng)
    c_next, witness = lcp_model.reencrypt_and_increment(pk, c_prev, 1, rng)
    return c_prev, c_next, witness


def accounting_table(subranges: Sequence[int] = config.ACCOUNTING_SUBRANGES,
                     moduli: Sequence[int] = config.ACCOUNTING_MODULI,
                     seed: int = config.RANDOM_STATE) -> pd.DataFrame:
    """Measured against formula bytes for communication and storage overhead."""
    rng = random.Random(seed)
    r = benaloh.default_block_size(max(subranges))
    rows = []
    for modulus_bits in moduli:
        pk, _ = benaloh.keygen(r, modulus_bits, rng)
        for b in subranges:
            c_prev, c_next, witness = _counter_pair(pk, bench_dimension(b), rng)
            comm = measured_round_bits(pk, c_prev, c_next, witness, rng)
            storage = measured_storage_bits(pk, c_prev)
            rows.append({
                'B': b,
                'N': modulus_bits,
                'comm_formula_bytes': comm_bits(b, modulus_bits) / 8,
                'comm_measured_bytes': comm / 8,
                'comm_error_pct': 100 * abs(comm - comm_bits(b, modulus_bits))
                / comm_bits(b, modulus_bits),
                'storage_formula_bytes': storage_bits(b, modulus_bits) / 8,
                'storage_measured_bytes': storage / 8,
            })
    return pd.DataFrame(rows)


# Timing

def _timed(fn: Callable[[], Any]) -> float:
    started = time.perf_counter()
    fn()
    return time.perf_counter() - started


def environment_fingerprint() -> Dict[str, str]:
    return {
        'platform': platform.platform(),
        'python': platform.python_version(),
        'machine': platform.machine(),
        'numpy': np.__version__,
        'pandas': pd.__version__,
    }


def _setup_point(modulus_bits: int, repeats: int, seed: int) -> Dict[str, Any]:
    rng = random.Random(seed)
    k, b = config.DEFAULT_CYCLE_SIZE, config.BENCH_SUBRANGES
    r = benaloh.default_block_size(max(k, b))
    spec = bench_dimension(b)
    share_params = threshold.cycle_share_params(k, modulus_bits)

    def run_setup():
        pk, sk = benaloh.keygen(r, modulus_bits, rng)
        threshold.split(sk.p, share_params, rng)
        lcp_model.init_counters(pk, spec, rng)

    times = [_timed(run_setup) for _ in range(repeats)]
    return {'sweep': 'modulus', 'modulus_bits': modulus_bits, 'b': b, 'repeats': repeats,
            'median_s': float(np.median(times))}


def _zk_modulus_point(modulus_bits: int, repeats: int, seed: int) -> Dict[str, Any]:
    rng = random.Random(seed)
    b = config.BENCH_SUBRANGES
    pk, _ = benaloh.keygen(benaloh.default_block_size(b), modulus_bits, rng)
    c_prev, c_next, witness = _counter_pair(pk, bench_dimension(b), rng)
    verifier = zk_ctr.CounterVerifier(pk, c_prev, c_next, rng)
    prover_times, verifier_times, bits = [], [], []
    for _ in range(repeats):
        started = time.perf_counter()
        commitment, state = zk_ctr.prove_round(pk, c_prev, c_next, witness, rng)
        a = verifier.challenge()
        reveal = zk_ctr.respond(pk, state, a)
        prover_times.append(time.perf_counter() - started)
        verifier_times.append(_timed(lambda: verifier.verify(commitment, a, reveal)))
        bits.append(wire.payload_bits(zk_ctr.commit_frame(pk, commitment))
                    + wire.payload_bits(zk_ctr.reveal_frame(pk, reveal)))
    prover_s, verifier_s = float(np.median(prover_times)), float(np.median(verifier_times))
    return {'sweep': 'modulus', 'modulus_bits': modulus_bits, 'rounds': 1, 'b': b,
            'repeats': repeats, 'prover_s': prover_s, 'verifier_s': verifier_s,
            'median_s': prover_s + verifier_s, 'comm_bits': float(np.mean(bits)),
            'comm_formula_bits': comm_bits(b, modulus_bits)}


def _zk_rounds_point(rounds: int, repeats: int, seed: int) -> Dict[str, Any]:
    rng = random.Random(seed)
    b = config.BENCH_SUBRANGES
    pk, _ = benaloh.keygen(benaloh.default_block_size(b), ROUNDS_SWEEP_MODULUS, rng)
    c_prev, c_next, witness = _counter_pair(pk, bench_dimension(b), rng)

    def run_proof():
        transcript = zk_ctr.run_protocol(zk_ctr.HonestProver(pk, c_prev, c_next, witness, rng),
                                         zk_ctr.CounterVerifier(pk, c_prev, c_next, rng), rounds)
        if not transcript.verdict:
            raise ParameterError(f"honest proof rejected: {transcript.abort_reason}")

    times = [_timed(run_proof) for _ in range(repeats)]
    return {'sweep': 'rounds', 'modulus_bits': ROUNDS_SWEEP_MODULUS, 'rounds': rounds,
            'b': b, 'repeats': repeats, 'median_s': float(np.median(times))}


def _end2end_point(modulus_bits: int, repeats: int, seed: int) -> Dict[str, Any]:
    """One k=5 cycle per repeat through the synchronous protocol API."""
    rng = random.Random(seed)
    params = ProtocolParams(modulus_bits=modulus_bits)
    spec = bench_dimension(config.BENCH_SUBRANGES)
    provider_keys = credentials.generate_signature_keys(params.rsa_bits, rng)
    venue_keys = credentials.generate_signature_keys(params.rsa_bits, rng)
    phases: Dict[str, List[float]] = {'setup_s': [], 'spoter_s': [], 'checkin_s': [],
                                      'pubstats_s': [], 'simulated_ms': [], 'wire_bytes': []}
    for _ in range(repeats):
        net = Network(random.Random(rng.getrandbits(64)))
        provider = net.add(ProviderActor(params, random.Random(rng.getrandbits(64)),
                                         keys=provider_keys))
        net.add(MixActor(random.Random(rng.getrandbits(64))))
        venue = net.add(VenueActor('venue', 1, [spec], params, provider.public_key,
                                   random.Random(rng.getrandbits(64)), keys=venue_keys))
        users = [net.add(UserActor(f"u{i}", Profile({'bench': i % spec.b}), [spec], params,
                                   provider.public_key, random.Random(rng.getrandbits(64))))
                 for i in range(params.k)]
        standard_topology(net, PROVIDER_ID, [venue.actor_id], [u.actor_id for u in users])
        phases['setup_s'].append(_timed(lambda: setup(net, venue, provider)))
        spoter_s = checkin_s = 0.0
        for user in users:
            spoter_s += _timed(lambda: spoter(net, user, venue))
            checkin_s += _timed(lambda: check_in(net, user, venue))
        pubstats_s = venue.state.published[-1]['elapsed_s'] if venue.state.published else 0.0
        phases['spoter_s'].append(spoter_s)
        phases['checkin_s'].append(checkin_s - pubstats_s)
        phases['pubstats_s'].append(pubstats_s)
        phases['simulated_ms'].append(net.clock)
        phases['wire_bytes'].append(float(sum(net.bytes_by_tag.values())))
    row = {'sweep': 'modulus', 'modulus_bits': modulus_bits, 'k': params.k,
           'b': spec.b, 'repeats': repeats}
    row.update({name: float(np.median(values)) for name, values in phases.items()})
    row['median_s'] = row['setup_s'] + row['spoter_s'] + row['checkin_s'] + row['pubstats_s']
    return row


_POINTS = {
    ('setup', 'modulus'): _setup_point,
    ('zkctr', 'modulus'): _zk_modulus_point,
    ('zkctr', 'rounds'): _zk_rounds_point,
    ('end2end', 'modulus'): _end2end_point,
}


def _measure(task: Tuple[str, str, int, int, int]) -> Dict[str, Any]:
    suite, sweep, value, repeats, seed = task
    row = _POINTS[(suite, sweep)](value, repeats, seed)
    logger.info(f"{suite} {sweep}={value}: median {row['median_s'] * 1000:.2f} ms")
    return row


def strictly_increasing(values: Sequence[float]) -> bool:
    return bool(np.all(np.diff(np.asarray(values, dtype=float)) > 0))


def linear_fit(x: Sequence[float], y: Sequence[float]) -> Dict[str, float]:
    fit = stats.linregress(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return {'slope': float(fit.slope), 'intercept': float(fit.intercept),
            'r_squared': float(fit.rvalue ** 2)}


def bench(suite: str, sweep: Optional[Sequence[int]] = None,
          repeats: int = config.BENCH_REPEATS, seed: int = config.RANDOM_STATE,
          rounds_sweep: Optional[Sequence[int]] = None, workers: int = 1) -> BenchReport:
    """Run a timing suite over a modulus sweep.

    Parameters:
    -----------
    suite : str
        'setup', 'zkctr' or 'end2end'
    sweep : sequence of int
        Modulus sizes in bits (defaults to the configured sweep)
    repeats : int
        Runs per parameter point; medians are reported (at least 10)
    rounds_sweep : sequence of int
        Round counts for the zkctr linearity sweep
    workers : int
        Parameter points measured in parallel processes when > 1

    Returns:
    --------
    BenchReport
        One row per parameter point, plus monotonicity and linear-fit annotations
    """
    if suite not in SUITES:
        raise ParameterError(f"unknown bench suite {suite!r}; expected one of {SUITES}")
    if repeats < config.BENCH_REPEATS:
        raise ParameterError(f"at least {config.BENCH_REPEATS} repeats per point are required")
    moduli = list(sweep or config.BENCH_MODULUS_SWEEP)
    tasks = [(suite, 'modulus', n, repeats, seed + i) for i, n in enumerate(moduli)]
    if suite == 'zkctr':
        rounds = list(rounds_sweep or config.BENCH_ROUNDS_SWEEP)
        tasks += [(suite, 'rounds', s, repeats, seed + len(moduli) + i)
                  for i, s in enumerate(rounds)]

    logger.info(f"Bench {suite}: {len(tasks)} points x {repeats} repeats")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_measure, tasks))
    else:
        rows = [_measure(task) for task in tasks]

    table = pd.DataFrame(rows)
    table.insert(0, 'suite', suite)
    report = BenchReport(suite=suite, table=table, environment=environment_fingerprint())
    by_modulus = table[table['sweep'] == 'modulus'].sort_values('modulus_bits')
    report.annotations['strictly_increasing'] = strictly_increasing(by_modulus['median_s'])
    if suite == 'zkctr':
        report.annotations['prover_increasing'] = strictly_increasing(by_modulus['prover_s'])
        report.annotations['verifier_increasing'] = strictly_increasing(by_modulus['verifier_s'])
        by_rounds = table[table['sweep'] == 'rounds'].sort_values('rounds')
        report.annotations.update(linear_fit(by_rounds['rounds'], by_rounds['median_s']))
    return report


def print_bench_summary(report: BenchReport):
    """Print bench medians and annotations."""
    print(f"\nBench: {report.suite}")
    print("=" * 50)
    with pd.option_context('display.max_columns', None, 'display.width', 120):
        print(report.table.to_string(index=False))
    print("\nAnnotations:")
    for key, value in report.annotations.items():
        print(f"{key}: {value:.4f}" if isinstance(value, float) else f"{key}: {value}")
    print("\nEnvironment:")
    for key, value in report.environment.items():
        print(f"{key}: {value}")


def print_accounting_summary(table: pd.DataFrame):
    print("\nCommunication and Storage Accounting")
    print("=" * 50)
    print(table.to_string(index=False))

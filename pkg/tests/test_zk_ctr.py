import random
from collections import Counter
from dataclasses import replace

import pytest

from lcplab import benaloh, lcp_model, wire, zk_ctr
from lcplab.errors import DomainError, ParameterError, ReplayError
from lcplab.statistical_analysis import uniformity_check


@pytest.fixture
def counter_pair(keys, age, rng):
    pk, _ = keys
    c_prev = lcp_model.init_counters(pk, age, rng)
    c_next, witness = lcp_model.reencrypt_and_increment(pk, c_prev, 3, rng)
    return pk, c_prev, c_next, witness


@pytest.mark.parametrize('s', [1, 10, 30])
def test_honest_prover_always_accepted(counter_pair, s):
    pk, c_prev, c_next, witness = counter_pair
    rng = random.Random(s)
    transcript = zk_ctr.run_protocol(zk_ctr.HonestProver(pk, c_prev, c_next, witness, rng),
                                     zk_ctr.CounterVerifier(pk, c_prev, c_next, rng), s,
                                     pk=pk, b=c_prev.b)
    assert transcript.verdict
    assert len(transcript.rounds) == s
    assert all(r.verified for r in transcript.rounds)


def test_both_challenges_verify(counter_pair, rng):
    pk, c_prev, c_next, witness = counter_pair
    for a in (0, 1):
        commitment, state = zk_ctr.prove_round(pk, c_prev, c_next, witness, rng)
        reveal = zk_ctr.respond(pk, state, a)
        assert zk_ctr.verify_round(pk, c_prev, c_next, commitment, a, reveal)
        assert not zk_ctr.verify_round(pk, c_prev, c_next, commitment, 1 - a, reveal)


def test_round_opens_only_once(counter_pair, rng):
    pk, c_prev, c_next, witness = counter_pair
    _, state = zk_ctr.prove_round(pk, c_prev, c_next, witness, rng)
    zk_ctr.respond(pk, state, 0)
    with pytest.raises(ReplayError):
        zk_ctr.respond(pk, state, 1)


def test_a1_position_is_uniform(counter_pair):
    pk, c_prev, c_next, witness = counter_pair
    rng = random.Random(3)
    positions = Counter()
    for _ in range(1000):
        _, state = zk_ctr.prove_round(pk, c_prev, c_next, witness, rng)
        positions[zk_ctr.respond(pk, state, 1).position] += 1
    # the revealed position follows the fresh permutation, not j = 3
    result = uniformity_check([positions[p] for p in range(1, c_prev.b + 1)], alpha=0.05)
    assert result['p_value'] > 0.05, result


def test_wrong_witness_is_refused(counter_pair, rng):
    pk, c_prev, c_next, witness = counter_pair
    wrong = lcp_model.Witness(j=1, randoms=witness.randoms)
    with pytest.raises(ParameterError):
        zk_ctr.prove_round(pk, c_prev, c_next, wrong, rng)


@pytest.mark.parametrize('a', [0, 1])
@pytest.mark.parametrize('snapshot', [False, True])
def test_simulated_rounds_verify(counter_pair, rng, a, snapshot):
    pk, c_prev, c_next, _ = counter_pair
    commitment, reveal = zk_ctr.simulate_round(pk, c_prev, c_next, a, rng, snapshot)
    assert zk_ctr.verify_round(pk, c_prev, c_next, commitment, a, reveal, snapshot)


@pytest.mark.parametrize('strategy', zk_ctr.CHEATING_STRATEGIES)
def test_forged_counter_sets_are_caught(counter_pair, strategy):
    pk, c_prev, _, _ = counter_pair
    rng = random.Random(17)
    caught = 0
    for _ in range(20):
        c_next = zk_ctr.forge_counter_set(pk, c_prev, 2, strategy, rng)
        transcript = zk_ctr.run_protocol(zk_ctr.CheatingProver(pk, c_prev, c_next, rng),
                                         zk_ctr.CounterVerifier(pk, c_prev, c_next, rng), 20)
        caught += not transcript.verdict
    # acceptance needs 20 correct guesses
    assert caught == 20


def test_forge_rejects_unknown_strategy(counter_pair, rng):
    pk, c_prev, _, _ = counter_pair
    with pytest.raises(ParameterError):
        zk_ctr.forge_counter_set(pk, c_prev, 1, 'nothing', rng)


def test_snapshot_mode_with_blinding(keys, age, rng):
    pk, _ = keys
    c_prev = lcp_model.init_counters(pk, age, rng)
    c_next, witness = lcp_model.reencrypt_and_increment(pk, c_prev, 4, rng, blinding=987654321)
    transcript = zk_ctr.run_protocol(
        zk_ctr.HonestProver(pk, c_prev, c_next, witness, rng, snapshot=True),
        zk_ctr.CounterVerifier(pk, c_prev, c_next, rng, snapshot=True), 12,
        pk=pk, b=c_prev.b, snapshot=True)
    assert transcript.verdict


def test_round_payload_sizes(counter_pair, rng):
    pk, c_prev, c_next, witness = counter_pair
    b, bits = c_prev.b, pk.modulus_bits
    commitment, state = zk_ctr.prove_round(pk, c_prev, c_next, witness, rng)
    assert wire.payload_bits(zk_ctr.commit_frame(pk, commitment)) == 4 * b * bits
    reveal = zk_ctr.respond(pk, state, 0)
    assert wire.payload_bits(zk_ctr.reveal_frame(pk, reveal)) == 4 * b * bits
    _, state = zk_ctr.prove_round(pk, c_prev, c_next, witness, rng)
    reveal = zk_ctr.respond(pk, state, 1)
    assert wire.payload_bits(zk_ctr.reveal_frame(pk, reveal)) == 2 * b * bits


def test_zero_rounds_refused(counter_pair, rng):
    pk, c_prev, c_next, witness = counter_pair
    with pytest.raises(ParameterError):
        zk_ctr.run_protocol(zk_ctr.HonestProver(pk, c_prev, c_next, witness, rng),
                            zk_ctr.CounterVerifier(pk, c_prev, c_next, rng), 0)


def test_next_set_outside_z_n_refused(counter_pair, rng):
    pk, c_prev, c_next, witness = counter_pair
    commitment, state = zk_ctr.prove_round(pk, c_prev, c_next, witness, rng)
    reveal = zk_ctr.respond(pk, state, 0)
    first = c_next[0]
    lifted = replace(c_next, counters=(lcp_model.EncryptedCounter(
        benaloh.Ciphertext(first.count_part.value + pk.n), first.index_part),)
        + c_next.counters[1:])
    assert zk_ctr.verify_round(pk, c_prev, c_next, commitment, 0, reveal)
    assert not zk_ctr.verify_round(pk, c_prev, lifted, commitment, 0, reveal)


def test_commit_outside_z_n_refused(counter_pair, rng):
    pk, c_prev, c_next, witness = counter_pair
    commitment, _ = zk_ctr.prove_round(pk, c_prev, c_next, witness, rng)
    frame = zk_ctr.commit_frame(pk, commitment)
    fields = list(frame.fields)
    fields[0] = wire.material(int.from_bytes(fields[0].data, 'big') + pk.n, pk.width + 1)
    lifted = replace(frame, fields=tuple(fields))
    assert zk_ctr.parse_commit(lifted).p_prev[0].count_part.value > pk.n
    with pytest.raises(DomainError):
        zk_ctr.parse_commit(lifted, pk)

"""Interactive proof that a counter set re-encrypts its predecessor with one increment.

Each round the prover commits to two proof sets, P_prev and P_next, holding
re-encryptions of C_prev and C_next under one secret permutation. On challenge
a=0 it opens all re-encryption randoms and the verifier checks both sets as
multisets; on a=1 it opens the quotient factors and the permuted position of
the incremented counter, and the verifier checks P_next against P_prev record by
record. A prover that cheats passes a round with probability 1/2.

In snapshot mode every record of C_next also carries the prover's blinding
share. Commitments then carry per-round multipliers mu_prev and mu_next, and the
a=1 opening reveals rho = R_i * mu_next / mu_prev, which the verifier multiplies
into every per-record check without learning R_i.
"""
import logging
import random
from dataclasses import dataclass, field
from typing import List, Optional, Protocol, Tuple

from Crypto.Util.number import inverse

from . import benaloh, wire
from .benaloh import BenalohPublicKey
from .errors import DomainError, ParameterError, ReplayError
from .lcp_model import CounterSet, EncryptedCounter, Witness, rerandomize
from .utils import random_unit, require_unit

logger = logging.getLogger(__name__)

DOUBLE_INCREMENT = 'double_increment'
ZERO_INCREMENT = 'zero_increment'
CORRUPT_COUNTER = 'corrupt_counter'
CHEATING_STRATEGIES = (DOUBLE_INCREMENT, ZERO_INCREMENT, CORRUPT_COUNTER)

Pair = Tuple[int, int]


@dataclass(frozen=True)
class Commitment:
    p_prev: Tuple[EncryptedCounter, ...]
    p_next: Tuple[EncryptedCounter, ...]


@dataclass(frozen=True)
class Reveal:
    a: int
    t: Tuple[Pair, ...] = ()
    w: Tuple[Pair, ...] = ()
    mu: Optional[Pair] = None
    o: Tuple[Pair, ...] = ()
    position: int = 0
    rho: Optional[int] = None


@dataclass
class RoundState:
    """Prover-private state of one round."""

    permutation: Tuple[int, ...]
    t: Tuple[Pair, ...]
    w: Tuple[Pair, ...]
    mu: Optional[Pair]
    witness: Witness
    responded: bool = False


@dataclass
class ProofRound:
    commitment: Commitment
    challenge: int
    reveal: Optional[Reveal]
    verified: bool
    payload_bits: int = 0


@dataclass
class ZkTranscript:
    rounds: List[ProofRound] = field(default_factory=list)
    verdict: bool = False
    abort_reason: Optional[str] = None

    @property
    def payload_bits(self) -> int:
        return sum(r.payload_bits for r in self.rounds)


class ProverEndpoint(Protocol):
    def commit(self) -> Commitment: ...

    def respond(self, a: int) -> Reveal: ...


class VerifierEndpoint(Protocol):
    def challenge(self) -> int: ...

    def verify(self, commitment: Commitment, a: int, reveal: Reveal) -> bool: ...


def _random_pairs(pk: BenalohPublicKey, b: int, rng: random.Random) -> Tuple[Pair, ...]:
    return tuple((random_unit(rng, pk.n), random_unit(rng, pk.n)) for _ in range(b))


def _random_permutation(b: int, rng: random.Random) -> Tuple[int, ...]:
    order = list(range(b))
    rng.shuffle(order)
    return tuple(order)


def _blind_set(pk, records, pairs, permutation, multiplier, increment_at=None):
    return tuple(
        rerandomize(pk, records[l], *pairs[l], blinding=multiplier,
                    increment=1 if increment_at == l else 0)
        for l in permutation
    )


def _check_witness(pk: BenalohPublicKey, c_prev: CounterSet, c_next: CounterSet,
                   witness: Witness):
    if c_prev.b != c_next.b or len(witness.randoms) != c_prev.b:
        raise ParameterError("witness does not match the counter sets")
    for l, (record, pair) in enumerate(zip(c_prev.counters, witness.randoms)):
        expected = rerandomize(pk, record, *pair, increment=1 if l == witness.j - 1 else 0,
                               blinding=witness.blinding)
        if expected != c_next[l]:
            raise ParameterError("witness does not relate C_prev to C_next")


def prove_round(pk: BenalohPublicKey, c_prev: CounterSet, c_next: CounterSet,
                witness: Witness, rng: random.Random,
                snapshot: bool = False) -> Tuple[Commitment, RoundState]:
    """Commit to P_prev and P_next under one fresh permutation and fresh randoms."""
    _check_witness(pk, c_prev, c_next, witness)
    b = c_prev.b
    permutation = _random_permutation(b, rng)
    t = _random_pairs(pk, b, rng)
    w = _random_pairs(pk, b, rng)
    mu = (random_unit(rng, pk.n), random_unit(rng, pk.n)) if snapshot else None
    commitment = Commitment(
        p_prev=_blind_set(pk, c_prev.counters, t, permutation, mu[0] if mu else None),
        p_next=_blind_set(pk, c_next.counters, w, permutation, mu[1] if mu else None),
    )
    return commitment, RoundState(permutation=permutation, t=t, w=w, mu=mu, witness=witness)


def respond(pk: BenalohPublicKey, state: RoundState, a: int) -> Reveal:
    """Open the commitments for challenge a; a round can be opened once."""
    if state.responded:
        raise ReplayError("round already answered")
    if a not in (0, 1):
        raise DomainError(f"challenge must be a bit, got {a}")
    state.responded = True
    if a == 0:
        return Reveal(a=0, t=state.t, w=state.w, mu=state.mu)

    n = pk.n
    o = []
    for l in state.permutation:
        v, v_prime = state.witness.randoms[l]
        (t, t_prime), (w, w_prime) = state.t[l], state.w[l]
        o.append((v * w * inverse(t, n) % n, v_prime * w_prime * inverse(t_prime, n) % n))
    position = state.permutation.index(state.witness.j - 1) + 1
    rho = None
    if state.mu is not None:
        mu_prev, mu_next = state.mu
        rho = state.witness.blinding * mu_next * inverse(mu_prev, n) % n
    return Reveal(a=1, o=tuple(o), position=position, rho=rho)


def _canonical(records) -> List[Pair]:
    return sorted((r.count_part.value, r.index_part.value) for r in records)


def verify_round(pk: BenalohPublicKey, c_prev: CounterSet, c_next: CounterSet,
                 commitment: Commitment, a: int, reveal: Reveal,
                 snapshot: bool = False) -> bool:
    """Check one opened round; any mismatch returns False."""
    b = c_prev.b
    if len(commitment.p_prev) != b or len(commitment.p_next) != b or reveal.a != a:
        return False
    try:
        for record in c_next.counters:
            require_unit(record.count_part.value, pk.n)
            require_unit(record.index_part.value, pk.n)
        if a == 0:
            if len(reveal.t) != b or len(reveal.w) != b:
                return False
            if snapshot != (reveal.mu is not None):
                return False
            mu_prev, mu_next = reveal.mu if reveal.mu else (None, None)
            identity = tuple(range(b))
            rebuilt_prev = _blind_set(pk, c_prev.counters, reveal.t, identity, mu_prev)
            rebuilt_next = _blind_set(pk, c_next.counters, reveal.w, identity, mu_next)
            return (_canonical(rebuilt_prev) == _canonical(commitment.p_prev)
                    and _canonical(rebuilt_next) == _canonical(commitment.p_next))

        if a != 1 or len(reveal.o) != b or not 1 <= reveal.position <= b:
            return False
        if snapshot != (reveal.rho is not None):
            return False
        for m in range(b):
            o, o_prime = reveal.o[m]
            expected = rerandomize(pk, commitment.p_prev[m], o, o_prime,
                                   increment=1 if m == reveal.position - 1 else 0,
                                   blinding=reveal.rho)
            if expected != commitment.p_next[m]:
                return False
        return True
    except DomainError:
        return False


def simulate_round(pk: BenalohPublicKey, c_prev: CounterSet, c_next: CounterSet, a: int,
                   rng: random.Random, snapshot: bool = False) -> Tuple[Commitment, Reveal]:
    """Produce a verifying round without any witness, given the challenge in advance."""
    b = c_prev.b
    permutation = _random_permutation(b, rng)
    t = _random_pairs(pk, b, rng)
    mu = (random_unit(rng, pk.n), random_unit(rng, pk.n)) if snapshot else None
    p_prev = _blind_set(pk, c_prev.counters, t, permutation, mu[0] if mu else None)
    if a == 0:
        w = _random_pairs(pk, b, rng)
        p_next = _blind_set(pk, c_next.counters, w, permutation, mu[1] if mu else None)
        return Commitment(p_prev=p_prev, p_next=p_next), Reveal(a=0, t=t, w=w, mu=mu)

    o = _random_pairs(pk, b, rng)
    position = rng.randrange(1, b + 1)
    rho = random_unit(rng, pk.n) if snapshot else None
    p_next = tuple(
        rerandomize(pk, p_prev[m], *o[m], increment=1 if m == position - 1 else 0,
                    blinding=rho)
        for m in range(b)
    )
    return (Commitment(p_prev=p_prev, p_next=p_next),
            Reveal(a=1, o=o, position=position, rho=rho))


class HonestProver:
    """Prover endpoint holding the witness for C_prev -> C_next."""

    def __init__(self, pk: BenalohPublicKey, c_prev: CounterSet, c_next: CounterSet,
                 witness: Witness, rng: random.Random, snapshot: bool = False):
        self.pk = pk
        self.c_prev = c_prev
        self.c_next = c_next
        self.witness = witness
        self.rng = rng
        self.snapshot = snapshot
        self._state: Optional[RoundState] = None

    def commit(self) -> Commitment:
        commitment, self._state = prove_round(self.pk, self.c_prev, self.c_next,
                                              self.witness, self.rng, self.snapshot)
        return commitment

    def respond(self, a: int) -> Reveal:
        if self._state is None:
            raise ReplayError("respond called before commit")
        return respond(self.pk, self._state, a)


class CheatingProver:
    """Prover for a forged C_next: guesses each challenge and prepares only that branch."""

    def __init__(self, pk: BenalohPublicKey, c_prev: CounterSet, c_next: CounterSet,
                 rng: random.Random, snapshot: bool = False):
        self.pk = pk
        self.c_prev = c_prev
        self.c_next = c_next
        self.rng = rng
        self.snapshot = snapshot
        self._prepared: Optional[Reveal] = None

    def commit(self) -> Commitment:
        guess = self.rng.randrange(2)
        commitment, self._prepared = simulate_round(self.pk, self.c_prev, self.c_next, guess,
                                                    self.rng, self.snapshot)
        return commitment

    def respond(self, a: int) -> Reveal:
        if self._prepared is None:
            raise ReplayError("respond called before commit")
        prepared, self._prepared = self._prepared, None
        if prepared.a == a:
            return prepared
        b = self.c_prev.b
        pairs = _random_pairs(self.pk, b, self.rng)
        if a == 0:
            mu = (random_unit(self.rng, self.pk.n),) * 2 if self.snapshot else None
            return Reveal(a=0, t=pairs, w=pairs, mu=mu)
        rho = random_unit(self.rng, self.pk.n) if self.snapshot else None
        return Reveal(a=1, o=pairs, position=1, rho=rho)


class CounterVerifier:
    """Verifier endpoint: draws challenge bits from its own seeded generator."""

    def __init__(self, pk: BenalohPublicKey, c_prev: CounterSet, c_next: CounterSet,
                 rng: random.Random, snapshot: bool = False):
        self.pk = pk
        self.c_prev = c_prev
        self.c_next = c_next
        self.rng = rng
        self.snapshot = snapshot

    def challenge(self) -> int:
        return self.rng.randrange(2)

    def verify(self, commitment: Commitment, a: int, reveal: Reveal) -> bool:
        return verify_round(self.pk, self.c_prev, self.c_next, commitment, a, reveal,
                            self.snapshot)


def forge_counter_set(pk: BenalohPublicKey, c_prev: CounterSet, j: int, strategy: str,
                      rng: random.Random, blinding: Optional[int] = None) -> CounterSet:
    """A C_next that is NOT a single-increment re-encryption of c_prev."""
    b = c_prev.b
    increments = [0] * b
    if strategy == DOUBLE_INCREMENT:
        increments[j - 1] += 1
        other = rng.choice([l for l in range(b) if l != j - 1]) if b > 1 else j - 1
        increments[other] += 1
    elif strategy == ZERO_INCREMENT:
        pass
    elif strategy == CORRUPT_COUNTER:
        increments[j - 1] = 1
    else:
        raise ParameterError(f"unknown cheating strategy {strategy!r}")

    counters = [
        rerandomize(pk, record, random_unit(rng, pk.n), random_unit(rng, pk.n),
                    increment=increments[l], blinding=blinding)
        for l, record in enumerate(c_prev.counters)
    ]
    if strategy == CORRUPT_COUNTER:
        victim = rng.randrange(b)
        shift = rng.randrange(1, pk.r)
        record = counters[victim]
        counters[victim] = EncryptedCounter(
            count_part=record.count_part,
            index_part=benaloh.increment(pk, record.index_part, shift),
        )
    return CounterSet(dimension=c_prev.dimension, counters=tuple(counters),
                      checkins=c_prev.checkins + 1)


# Frames

def commit_frame(pk: BenalohPublicKey, commitment: Commitment,
                 snapshot: bool = False) -> wire.Frame:
    values = []
    for record in commitment.p_prev + commitment.p_next:
        values.extend((record.count_part.value, record.index_part.value))
    return wire.frame(wire.Tag.COMMIT, wire.materials(values, pk.width), snapshot=snapshot)


def parse_commit(f: wire.Frame, pk: Optional[BenalohPublicKey] = None) -> Commitment:
    values = f.materials()
    if len(values) % 4:
        raise DomainError("COMMIT frame must carry 4b ciphertexts")
    if pk is not None:
        for value in values:
            require_unit(value, pk.n, "committed ciphertext")
    records = [
        EncryptedCounter(benaloh.Ciphertext(values[i]), benaloh.Ciphertext(values[i + 1]))
        for i in range(0, len(values), 2)
    ]
    half = len(records) // 2
    return Commitment(p_prev=tuple(records[:half]), p_next=tuple(records[half:]))


def challenge_frame(a: int) -> wire.Frame:
    return wire.frame(wire.Tag.CHALLENGE, [wire.integer(a)])


def reveal_frame(pk: BenalohPublicKey, reveal: Reveal, snapshot: bool = False) -> wire.Frame:
    fields = [wire.integer(reveal.a)]
    if reveal.a == 0:
        flat = [x for pair in reveal.t + reveal.w for x in pair]
        fields += wire.materials(flat, pk.width)
        if reveal.mu is not None:
            fields += wire.materials(reveal.mu, pk.width)
    else:
        fields.append(wire.integer(reveal.position))
        fields += wire.materials([x for pair in reveal.o for x in pair], pk.width)
        if reveal.rho is not None:
            fields.append(wire.material(reveal.rho, pk.width))
    return wire.frame(wire.Tag.REVEAL, fields, snapshot=snapshot)


def parse_reveal(f: wire.Frame, b: int) -> Reveal:
    a = f.integer(0)
    if a == 0:
        values = f.materials(1)
        pairs = [tuple(values[i:i + 2]) for i in range(0, 4 * b, 2)]
        mu = tuple(values[4 * b:4 * b + 2]) if f.snapshot else None
        return Reveal(a=0, t=tuple(pairs[:b]), w=tuple(pairs[b:]), mu=mu)
    position = f.integer(1)
    values = f.materials(2)
    o = tuple(tuple(values[i:i + 2]) for i in range(0, 2 * b, 2))
    rho = values[2 * b] if f.snapshot else None
    return Reveal(a=1, o=o, position=position, rho=rho)


def run_protocol(prover: ProverEndpoint, verifier: VerifierEndpoint, s: int,
                 pk: Optional[BenalohPublicKey] = None, b: int = 0,
                 snapshot: bool = False) -> ZkTranscript:
    """Run s rounds; when pk is given every message goes through the wire codec."""
    if s < 1:
        raise ParameterError(f"ZK-CTR needs at least one round, got s={s}")
    transcript = ZkTranscript()
    for round_number in range(s):
        try:
            commitment = prover.commit()
            a = verifier.challenge()
            reveal = prover.respond(a)
            bits = 0
            if pk is not None:
                commit_msg = wire.decode(wire.encode(commit_frame(pk, commitment, snapshot)))
                reveal_msg = wire.decode(wire.encode(reveal_frame(pk, reveal, snapshot)))
                commitment = parse_commit(commit_msg, pk)
                reveal = parse_reveal(reveal_msg, b or len(commitment.p_prev))
                bits = wire.payload_bits(commit_msg) + wire.payload_bits(reveal_msg)
            ok = verifier.verify(commitment, a, reveal)
        except (DomainError, ReplayError, ValueError) as e:
            logger.info(f"ZK-CTR transport failure in round {round_number}: {e}")
            transcript.abort_reason = f"transport: {e}"
            return transcript
        transcript.rounds.append(ProofRound(commitment=commitment, challenge=a, reveal=reveal,
                                            verified=ok, payload_bits=bits))
        logger.debug(f"ZK-CTR round {round_number}: a={a} ok={ok}")
        if not ok:
            transcript.abort_reason = f"round {round_number} failed (a={a})"
            return transcript
    transcript.verdict = True
    return transcript

"""Infrastructure-free snapshot LCP over a group of co-located users.

An aggregator generates a Benaloh key pair and collects one blinded counter
update from each participant. Participant i multiplies every record it produces
by its private share R_i; the shares are set up with a ring-masked product so
that the aggregator learns only R = R_1 * ... * R_k mod n. Once all k updates
are in, multiplying every record by K = R^-1 cancels the blinding and the
counters can be decrypted.
"""
import logging
import random
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

from Crypto.Util.number import inverse

from . import benaloh, config, lcp_model, wire, zk_ctr
from .benaloh import BenalohPublicKey, BenalohSecretKey
from .config import ProtocolParams
from .errors import DecryptionError, DomainError, LcpLabError, ProtocolAbort
from .lcp_model import CounterSet, DimensionSpec, EncryptedCounter
from .network import DIRECT, Actor, ChannelSpec, Network
from .utils import random_unit
from .venue_protocol import counters_frame, parse_counters

logger = logging.getLogger(__name__)

AGGREGATOR_ID = 'aggregator'
SETUP_TIMEOUT_MS = 1000.0


@dataclass(frozen=True)
class BlindingShare:
    holder: str
    value: int


@dataclass
class SnapshotState:
    pk: BenalohPublicKey
    sk: BenalohSecretKey
    dimension: DimensionSpec
    labels: Dict[str, int]
    counters: Optional[CounterSet] = None
    blinding: Optional[int] = None
    unblinding: Optional[int] = None
    contributions: List[str] = field(default_factory=list)
    flagged: List[str] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.labels)

    @property
    def complete(self) -> bool:
        return len(self.contributions) + len(self.flagged) == self.k


def snapshot_block_size(k: int, b: int) -> int:
    """Smallest prime above max(k, b, 1000)."""
    return benaloh.next_prime(max(k, b, config.SNAPSHOT_MIN_BLOCK))


def ring_product(shares: Sequence[int], mask: int, n: int) -> int:
    """Masked product as it returns to the first ring member."""
    value = mask
    for share in shares:
        value = value * share % n
    return value


def unblind(pk: BenalohPublicKey, counter_set: CounterSet, factor: int) -> CounterSet:
    counters = tuple(
        EncryptedCounter(count_part=benaloh.scale(pk, record.count_part, factor),
                         index_part=benaloh.scale(pk, record.index_part, factor))
        for record in counter_set.counters
    )
    return CounterSet(dimension=counter_set.dimension, counters=counters,
                      checkins=counter_set.checkins)


def snapshot_pub_stats(state: SnapshotState) -> List[int]:
    """Multiply every record by K = R^-1, decrypt, and return the histogram.

    Raises DecryptionError when blinding is not fully cancelled: index parts that
    are not 1..b or counts that do not sum to k.
    """
    if state.unblinding is None or state.counters is None:
        raise ProtocolAbort('snapshot_pubstats', "blinding product was never established")
    unblinded = unblind(state.pk, state.counters, state.unblinding)
    counts = lcp_model.histogram(lcp_model.decrypt_counters(state.pk, state.sk, unblinded))
    if sum(counts) != state.k:
        raise DecryptionError(f"snapshot counts sum to {sum(counts)}, expected {state.k}")
    logger.info(f"Snapshot histogram over {state.k} participants: {counts}")
    return counts


class SnapshotAggregator(Actor):
    """The user U collecting the snapshot; verifies every update with snapshot-mode ZK-CTR."""

    def __init__(self, dimension: DimensionSpec, params: ProtocolParams, rng: random.Random,
                 actor_id: str = AGGREGATOR_ID, setup_timeout_ms: float = SETUP_TIMEOUT_MS):
        super().__init__(actor_id)
        self.dimension = dimension
        self.params = params
        self.rng = rng
        self.setup_timeout_ms = setup_timeout_ms
        self.state: Optional[SnapshotState] = None
        self.error: Optional[LcpLabError] = None
        self.auto_collect = True
        self.queue: List[str] = []
        self.current: Optional[str] = None
        self.c_next: Optional[CounterSet] = None
        self.verifier: Optional[zk_ctr.CounterVerifier] = None
        self.commitment: Optional[zk_ctr.Commitment] = None
        self.challenge = 0
        self.rounds = 0

    def start(self, net: Network, participants: Sequence[str], auto_collect: bool = True):
        if not participants:
            raise ProtocolAbort('snapshot_setup', "no participants")
        self.auto_collect = auto_collect
        k = len(participants)
        r = self.params.r or snapshot_block_size(k, self.dimension.b)
        self.dimension.validate_for(r)
        pk, sk = benaloh.keygen(r, self.params.modulus_bits, self.rng)
        labels = {pid: label for label, pid in enumerate(participants, start=1)}
        self.state = SnapshotState(pk=pk, sk=sk, dimension=self.dimension, labels=labels)
        key_bytes = benaloh.public_key_to_bytes(pk)
        for pid, label in labels.items():
            next_hop = participants[label % k]
            net.send(self.actor_id, pid, wire.frame(wire.Tag.SNAPSHOT_KEY, [
                wire.blob(key_bytes), wire.integer(label), wire.integer(k),
                wire.text(next_hop), wire.text(self.actor_id)]))
        net.timer(self.actor_id, self.setup_timeout_ms, wire.frame(wire.Tag.TIMER))
        net.trace.record('snapshot_setup', net.clock, k=k, r=r)

    def on_frame(self, net: Network, src: str, dst: str, frame: wire.Frame):
        handler = {
            wire.Tag.TIMER: self._on_timer,
            wire.Tag.BLINDING_PUBLISH: self._on_blinding,
            wire.Tag.COUNTERS_NEXT: self._on_counters_next,
            wire.Tag.COMMIT: self._on_commit,
            wire.Tag.REVEAL: self._on_reveal,
        }.get(frame.tag)
        if handler is not None:
            handler(net, src, frame)

    def _on_timer(self, net: Network, src: str, frame: wire.Frame):
        if self.state is not None and self.state.blinding is None and self.error is None:
            self.error = ProtocolAbort('snapshot_setup', "participant dropout")
            logger.info("Snapshot setup aborted: blinding product never returned")
            net.trace.record('snapshot_abort', net.clock, reason='dropout')

    def _on_blinding(self, net: Network, src: str, frame: wire.Frame):
        if self.error is not None or self.state.labels.get(src) != 1:
            return
        state = self.state
        state.blinding = frame.material(0)
        state.unblinding = inverse(state.blinding, state.pk.n)
        state.counters = lcp_model.init_counters(state.pk, self.dimension, self.rng)
        net.trace.record('snapshot_blinding', net.clock, k=state.k)
        if self.auto_collect:
            self.queue = sorted(state.labels, key=state.labels.get)
            self._next(net)

    def request_contribution(self, net: Network, participant: str):
        if self.state is None or self.state.counters is None:
            raise ProtocolAbort('lcp_gen', "snapshot setup has not completed")
        self.current = participant
        self.rounds = 0
        net.send(self.actor_id, participant,
                 counters_frame(wire.Tag.COUNTERS, self.state.pk, [self.state.counters],
                                with_key=True))

    def _next(self, net: Network):
        if self.queue:
            self.request_contribution(net, self.queue.pop(0))
        elif self.state.complete:
            net.trace.record('snapshot_ready', net.clock,
                             accepted=len(self.state.contributions),
                             flagged=len(self.state.flagged))

    def _on_counters_next(self, net: Network, src: str, frame: wire.Frame):
        if src != self.current:
            return
        try:
            (c_next,) = parse_counters(frame, pk=self.state.pk)
            if c_next.b != self.dimension.b:
                raise DomainError("counter set has the wrong length")
        except (LcpLabError, ValueError):
            self._finish(net, src, accepted=False)
            return
        self.c_next = c_next
        self.verifier = zk_ctr.CounterVerifier(self.state.pk, self.state.counters, c_next,
                                               self.rng, snapshot=True)

    def _on_commit(self, net: Network, src: str, frame: wire.Frame):
        if src != self.current or self.verifier is None:
            return
        try:
            self.commitment = zk_ctr.parse_commit(frame, self.state.pk)
        except LcpLabError:
            self._finish(net, src, accepted=False)
            return
        self.challenge = self.verifier.challenge()
        net.send(self.actor_id, src, zk_ctr.challenge_frame(self.challenge))

    def _on_reveal(self, net: Network, src: str, frame: wire.Frame):
        if src != self.current or self.commitment is None:
            return
        try:
            reveal = zk_ctr.parse_reveal(frame, self.dimension.b)
            ok = frame.snapshot and self.verifier.verify(self.commitment, self.challenge, reveal)
        except (LcpLabError, ValueError):
            ok = False
        self.commitment = None
        if not ok:
            self._finish(net, src, accepted=False)
            return
        self.rounds += 1
        if self.rounds == self.params.s:
            self._finish(net, src, accepted=True)

    def _finish(self, net: Network, participant: str, accepted: bool):
        if accepted:
            self.state.counters = self.c_next
            self.state.contributions.append(participant)
        else:
            self.state.flagged.append(participant)
            logger.info(f"Snapshot contribution from {participant} discarded")
        net.trace.record('contribution', net.clock, participant=participant, accepted=accepted)
        net.send(self.actor_id, participant, wire.frame(wire.Tag.CHECKIN_RESULT, [
            wire.integer(int(accepted)), wire.text('' if accepted else 'ProtocolAbort')]))
        self.current = None
        self.verifier = None
        self.c_next = None
        self._next(net)

    def state_view(self) -> Dict[str, Any]:
        if self.state is None:
            return {}
        return {
            'k': self.state.k,
            'blinding': self.state.blinding,
            'contributions': list(self.state.contributions),
            'flagged': list(self.state.flagged),
        }


class SnapshotParticipant(Actor):
    """Co-located user: holds a blinding share and contributes one blinded update.

    `behavior` is None, one of the ZK cheating strategies, or 'dropout'
    (never answers setup).
    """

    def __init__(self, actor_id: str, value, dimension: DimensionSpec, params: ProtocolParams,
                 rng: random.Random, behavior: Optional[str] = None):
        super().__init__(actor_id)
        self.value = value
        self.dimension = dimension
        self.params = params
        self.rng = rng
        self.behavior = behavior
        self.pk: Optional[BenalohPublicKey] = None
        self.label = 0
        self.k = 0
        self.next_hop = ''
        self.aggregator = AGGREGATOR_ID
        self.share: Optional[BlindingShare] = None
        self._mask: Optional[int] = None
        self.prover = None
        self.rounds_sent = 0
        self.accepted: Optional[bool] = None

    def on_frame(self, net: Network, src: str, dst: str, frame: wire.Frame):
        if self.behavior == 'dropout':
            return
        handler = {
            wire.Tag.SNAPSHOT_KEY: self._on_key,
            wire.Tag.RING_PRODUCT: self._on_ring,
            wire.Tag.COUNTERS: self._on_counters,
            wire.Tag.CHALLENGE: self._on_challenge,
            wire.Tag.CHECKIN_RESULT: self._on_result,
        }.get(frame.tag)
        if handler is not None:
            handler(net, src, frame)

    def _on_key(self, net: Network, src: str, frame: wire.Frame):
        self.pk = benaloh.public_key_from_bytes(frame.blob(0))
        self.label, self.k = frame.integer(1), frame.integer(2)
        self.next_hop, self.aggregator = frame.text(3), frame.text(4)
        self.share = BlindingShare(holder=self.actor_id, value=random_unit(self.rng, self.pk.n))
        if self.label != 1:
            return
        if self.k == 1:
            self._publish(net, self.share.value)
            return
        self._mask = random_unit(self.rng, self.pk.n)
        self._send_ring(net, self._mask * self.share.value % self.pk.n)

    def _on_ring(self, net: Network, src: str, frame: wire.Frame):
        value = frame.material(0)
        if self.label == 1:
            self._publish(net, value * inverse(self._mask, self.pk.n) % self.pk.n)
            self._mask = None
            return
        self._send_ring(net, value * self.share.value % self.pk.n)

    def _send_ring(self, net: Network, value: int):
        net.send(self.actor_id, self.next_hop, wire.frame(wire.Tag.RING_PRODUCT, [
            wire.material(value, self.pk.width)]))

    def _publish(self, net: Network, product: int):
        net.send(self.actor_id, self.aggregator, wire.frame(wire.Tag.BLINDING_PUBLISH, [
            wire.material(product, self.pk.width)]))

    def _on_counters(self, net: Network, src: str, frame: wire.Frame):
        pk = benaloh.public_key_from_bytes(frame.blob(0))
        (c_prev,) = parse_counters(frame, offset=1)
        j = lcp_model.classify(self.value, self.dimension)
        if self.behavior in zk_ctr.CHEATING_STRATEGIES:
            c_next = zk_ctr.forge_counter_set(pk, c_prev, j, self.behavior, self.rng,
                                              blinding=self.share.value)
            self.prover = zk_ctr.CheatingProver(pk, c_prev, c_next, self.rng, snapshot=True)
        else:
            c_next, witness = lcp_model.reencrypt_and_increment(pk, c_prev, j, self.rng,
                                                                blinding=self.share.value)
            self.prover = zk_ctr.HonestProver(pk, c_prev, c_next, witness, self.rng,
                                              snapshot=True)
        self.rounds_sent = 0
        net.send(self.actor_id, src, counters_frame(wire.Tag.COUNTERS_NEXT, pk, [c_next]))
        self._commit(net, src)

    def _commit(self, net: Network, dst: str):
        net.send(self.actor_id, dst,
                 zk_ctr.commit_frame(self.pk, self.prover.commit(), snapshot=True))

    def _on_challenge(self, net: Network, src: str, frame: wire.Frame):
        reveal = self.prover.respond(frame.integer(0))
        net.send(self.actor_id, src, zk_ctr.reveal_frame(self.pk, reveal, snapshot=True))
        self.rounds_sent += 1
        if self.rounds_sent < self.params.s:
            self._commit(net, src)

    def _on_result(self, net: Network, src: str, frame: wire.Frame):
        self.accepted = bool(frame.integer(0))

    def state_view(self) -> Dict[str, Any]:
        return {'label': self.label, 'has_share': self.share is not None}


def snapshot_network(values: Sequence, dimension: DimensionSpec, params: ProtocolParams,
                     rng: random.Random, behaviors: Optional[Dict[int, str]] = None,
                     latency_ms: float = config.LOCAL_ONE_WAY_MS,
                     net: Optional[Network] = None, ids: Optional[Sequence[str]] = None
                     ) -> Tuple[Network, SnapshotAggregator, List[SnapshotParticipant]]:
    """Aggregator and one participant per value, all on local direct links."""
    behaviors = behaviors or {}
    net = net or Network(rng)
    aggregator = net.add(SnapshotAggregator(dimension, params,
                                            random.Random(rng.getrandbits(64))))
    participants = [
        net.add(SnapshotParticipant(ids[i - 1] if ids else f"u{i}", value, dimension, params,
                                    random.Random(rng.getrandbits(64)), behaviors.get(i)))
        for i, value in enumerate(values, start=1)
    ]
    members = [aggregator.actor_id] + [p.actor_id for p in participants]
    for i, a in enumerate(members):
        for b in members[i + 1:]:
            net.connect(a, b, ChannelSpec(DIRECT, latency_ms))
    return net, aggregator, participants


def snapshot_setup(net: Network, aggregator: SnapshotAggregator,
                   participants: Sequence[SnapshotParticipant]
                   ) -> Tuple[SnapshotState, Dict[str, BlindingShare]]:
    """Generate the key pair and establish blinding shares; raises on dropout."""
    aggregator.start(net, [p.actor_id for p in participants], auto_collect=False)
    net.run()
    if aggregator.error is not None:
        raise aggregator.error
    shares = {p.actor_id: p.share for p in participants if p.share is not None}
    return aggregator.state, shares


def lcp_gen(net: Network, aggregator: SnapshotAggregator,
            participant: SnapshotParticipant) -> CounterSet:
    """One blinded contribution; raises ProtocolAbort if its proof fails."""
    aggregator.request_contribution(net, participant.actor_id)
    net.run()
    if participant.actor_id in aggregator.state.flagged:
        raise ProtocolAbort('lcp_gen', f"contribution from {participant.actor_id} rejected")
    return aggregator.state.counters


def run_snapshot(values: Sequence, dimension: DimensionSpec, params: ProtocolParams,
                 rng: random.Random, behaviors: Optional[Dict[int, str]] = None
                 ) -> Tuple[SnapshotState, Network]:
    """Setup plus every contribution in label order."""
    net, aggregator, participants = snapshot_network(values, dimension, params, rng, behaviors)
    aggregator.start(net, [p.actor_id for p in participants])
    net.run()
    if aggregator.error is not None:
        raise aggregator.error
    return aggregator.state, net

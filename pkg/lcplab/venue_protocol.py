"""Venue-centric protocol: Setup, Spoter, CheckIn and PubStats as message-driven actors.

The provider escrows each cycle's Benaloh secret prime as k Shamir shares and
hands one to every user that proves presence at the venue. The venue keeps only
ciphertexts and shares; once k check-ins have been verified it reconstructs the
key, decrypts its counters and publishes the tally.
"""
import logging
import random
import struct
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Deque, Dict, List, Optional, Sequence, Set, Tuple

from Crypto.Hash import SHA512
from Crypto.PublicKey import RSA

from . import benaloh, config, credentials, errors, lcp_model, threshold, wire, zk_ctr
from .benaloh import BenalohPublicKey, BenalohSecretKey
from .config import ProtocolParams
from .credentials import Pseudonym, PresenceToken, SignatureKeyPair
from .errors import (CredentialError, DecryptionError, DuplicateTokenError, IntegrityAlarm,
                     ParameterError, ProtocolAbort, PseudonymReuseError, TimingViolation)
from .lcp_model import CounterSet, DimensionSpec, Profile
from .network import ANONYMOUS, DIRECT, MIX_ID, Actor, ChannelSpec, Network, envelope
from .threshold import Share, ShareParams

logger = logging.getLogger(__name__)

PROVIDER_ID = 'provider'


# Domain types

@dataclass(frozen=True)
class KeyShare:
    venue_id: int
    cycle: int
    share: Share
    signature: bytes = b''

    def message(self) -> bytes:
        value = _int_bytes(self.share.value)
        return struct.pack('>QQII', self.venue_id, self.cycle, self.share.index,
                           len(value)) + value


def _int_bytes(value: int) -> bytes:
    return value.to_bytes(max(1, (value.bit_length() + 7) // 8), 'big')


@dataclass(frozen=True)
class SpoterChallenge:
    sampled_time_us: int
    expiry_ms: int
    nonce: bytes
    issued_at: float

    def deadline(self, delta_ms: float) -> float:
        return self.issued_at + delta_ms

    def expected_response(self) -> bytes:
        return spoter_digest(self.sampled_time_us, self.expiry_ms, self.nonce)


@dataclass
class CycleSecrets:
    cycle: int
    pk: BenalohPublicKey
    sk: BenalohSecretKey
    share_params: ShareParams
    shares: List[Share]
    next_ordinal: int = 1


@dataclass
class ProviderState:
    secrets: Dict[str, CycleSecrets] = field(default_factory=dict)
    spent_tokens: Set[Tuple[int, bytes]] = field(default_factory=set)
    registry: Dict[int, Tuple[str, RSA.RsaKey]] = field(default_factory=dict)
    venue_bins: Dict[str, int] = field(default_factory=dict)
    cycles: Dict[str, int] = field(default_factory=dict)
    published: List[Dict[str, Any]] = field(default_factory=list)


@dataclass
class Session:
    nonce: bytes
    pseudonym: Pseudonym


@dataclass
class CheckInRun:
    """Venue-side state of the single in-flight CheckIn."""

    alias: str
    key_share: KeyShare
    c_next: Dict[str, CounterSet] = field(default_factory=dict)
    dimension_index: int = 0
    round_index: int = 0
    verifier: Optional[zk_ctr.CounterVerifier] = None
    commitment: Optional[zk_ctr.Commitment] = None
    challenge: int = 0


@dataclass
class VenueState:
    venue_id: int
    cycle: int = 0
    pk: Optional[BenalohPublicKey] = None
    counters: Dict[str, CounterSet] = field(default_factory=dict)
    shares: List[KeyShare] = field(default_factory=list)
    checkins: int = 0
    spent: Set[Tuple[bytes, int]] = field(default_factory=set)
    published: List[Dict[str, Any]] = field(default_factory=list)
    aborted_cycles: List[Dict[str, Any]] = field(default_factory=list)


def spoter_digest(sampled_time_us: int, expiry_ms: int, nonce: bytes) -> bytes:
    return SHA512.new(struct.pack('>QQ', sampled_time_us, expiry_ms) + nonce).digest()


def block_size_for(params: ProtocolParams, max_b: int) -> int:
    """Plaintext modulus: explicit r, or the smallest odd prime above max(k, b)."""
    if params.r is not None:
        if params.r <= max(params.k, max_b):
            raise ParameterError(
                f"r={params.r} must exceed both k={params.k} and b={max_b}"
            )
        return params.r
    return benaloh.default_block_size(max(params.k, max_b))


def _reject(stage: str, error: Exception) -> wire.Frame:
    return wire.frame(wire.Tag.REJECT, [wire.text(stage), wire.text(type(error).__name__),
                                        wire.text(str(error))])


def error_from_reject(frame: wire.Frame) -> errors.LcpLabError:
    """Rebuild the exception a REJECT frame reports."""
    cls = getattr(errors, frame.text(1), errors.ProtocolAbort)
    if cls is errors.ProtocolAbort:
        return errors.ProtocolAbort(frame.text(0), frame.text(2))
    return cls(frame.text(2))


# Counter set frames

def counters_frame(tag: wire.Tag, pk: BenalohPublicKey, sets: Sequence[CounterSet],
                   with_key: bool = False) -> wire.Frame:
    """Counter sets in dimension order; COUNTERS also carries the cycle public key."""
    fields = [wire.blob(benaloh.public_key_to_bytes(pk))] if with_key else []
    fields.append(wire.integer(len(sets)))
    for counter_set in sets:
        fields += [wire.text(counter_set.dimension), wire.integer(counter_set.b),
                   wire.integer(counter_set.checkins)]
        fields += lcp_model.counter_set_fields(pk, counter_set)
    return wire.frame(tag, fields)


def parse_counters(frame: wire.Frame, offset: int = 0,
                   pk: Optional[BenalohPublicKey] = None) -> List[CounterSet]:
    count = frame.integer(offset)
    pos, sets = offset + 1, []
    for _ in range(count):
        name, b, checkins = frame.text(pos), frame.integer(pos + 1), frame.integer(pos + 2)
        pos += 3
        values = [frame.material(pos + i) for i in range(2 * b)]
        pos += 2 * b
        sets.append(lcp_model.counter_set_from_values(name, values, checkins, pk=pk))
    return sets


def share_frame(key_share: KeyShare, tag: wire.Tag = wire.Tag.SHARE,
                prefix: Sequence[wire.Field] = ()) -> wire.Frame:
    return wire.frame(tag, list(prefix) + [
        wire.integer(key_share.venue_id), wire.integer(key_share.cycle),
        wire.integer(key_share.share.index),
        wire.blob(_int_bytes(key_share.share.value)),
        wire.blob(key_share.signature),
    ])


def parse_share(frame: wire.Frame, offset: int = 0) -> KeyShare:
    share = Share(index=frame.integer(offset + 2),
                  value=int.from_bytes(frame.blob(offset + 3), 'big'))
    return KeyShare(venue_id=frame.integer(offset), cycle=frame.integer(offset + 1),
                    share=share, signature=frame.blob(offset + 4))


def token_frame(tag: wire.Tag, token: PresenceToken) -> wire.Frame:
    return wire.frame(tag, [wire.integer(token.venue_id), wire.integer(token.epoch),
                            wire.integer(token.timestamp_us), wire.blob(token.nonce),
                            wire.blob(token.signature)])


def parse_token(frame: wire.Frame) -> PresenceToken:
    return PresenceToken(venue_id=frame.integer(0), epoch=frame.integer(1),
                         timestamp_us=frame.integer(2), nonce=frame.blob(3),
                         signature=frame.blob(4))


# Provider

class ProviderActor(Actor):
    """GSN provider: key escrow, presence-token redemption and pseudonym issuance."""

    def __init__(self, params: ProtocolParams, rng: random.Random,
                 keys: Optional[SignatureKeyPair] = None, actor_id: str = PROVIDER_ID):
        super().__init__(actor_id)
        self.params = params
        self.rng = rng
        self.keys = keys or credentials.generate_signature_keys(params.rsa_bits, rng)
        self.issuer = credentials.PseudonymIssuer(self.keys)
        self.state = ProviderState()

    @property
    def public_key(self) -> RSA.RsaKey:
        return self.keys.public

    def on_frame(self, net: Network, src: str, dst: str, frame: wire.Frame):
        handler = {
            wire.Tag.SETUP_REQUEST: self._on_setup_request,
            wire.Tag.REDEEM: self._on_redeem,
            wire.Tag.PSEUDONYM_REQUEST: self._on_pseudonym_request,
            wire.Tag.PUBLISH: self._on_publish,
        }.get(frame.tag)
        if handler is not None:
            handler(net, src, frame)

    def _on_setup_request(self, net: Network, src: str, frame: wire.Frame):
        venue_id = frame.integer(0)
        self.state.registry[venue_id] = (src, RSA.import_key(frame.blob(1)))
        self.state.venue_bins[src] = frame.integer(2)
        venue_cycle = frame.integer(3)
        current = self.state.secrets.get(src)
        if current is not None and current.cycle > venue_cycle:
            # a redemption already opened the next cycle; hand out its key again
            self._send_cycle_key(net, src, current)
            return
        try:
            self.start_cycle(net, src)
        except ParameterError as e:
            logger.error(f"Setup failed for {src}: {e}")
            net.send(self.actor_id, src, _reject('setup', e))

    def start_cycle(self, net: Network, venue_actor: str) -> CycleSecrets:
        """Generate a fresh key pair and share set for the venue's next cycle."""
        r = block_size_for(self.params, self.state.venue_bins.get(venue_actor, 1))
        pk, sk = benaloh.keygen(r, self.params.modulus_bits, self.rng)
        share_params = threshold.cycle_share_params(self.params.k, self.params.modulus_bits)
        cycle = self.state.cycles.get(venue_actor, 0) + 1
        self.state.cycles[venue_actor] = cycle
        secrets = CycleSecrets(cycle=cycle, pk=pk, sk=sk, share_params=share_params,
                               shares=threshold.split(sk.p, share_params, self.rng))
        self.state.secrets[venue_actor] = secrets
        net.trace.record('setup', net.clock, venue=venue_actor, cycle=cycle, r=r,
                         modulus_bits=self.params.modulus_bits)
        logger.info(f"Cycle {cycle} keys generated for {venue_actor} (r={r})")
        self._send_cycle_key(net, venue_actor, secrets)
        return secrets

    def _send_cycle_key(self, net: Network, venue_actor: str, secrets: CycleSecrets):
        net.send(self.actor_id, venue_actor, wire.frame(wire.Tag.SETUP_KEY, [
            wire.integer(secrets.cycle), wire.blob(benaloh.public_key_to_bytes(secrets.pk))]))

    def _on_redeem(self, net: Network, src: str, frame: wire.Frame):
        token = parse_token(frame)
        try:
            key_share = self.redeem(net, token)
        except (CredentialError, DuplicateTokenError) as e:
            logger.info(f"Token redemption refused: {e}")
            net.trace.record('redeem_rejected', net.clock, alias=src, reason=type(e).__name__)
            self._reply(net, src, _reject('redeem', e))
            return
        net.trace.record('share_issued', net.clock, alias=src, cycle=key_share.cycle,
                         ordinal=key_share.share.index)
        self._reply(net, src, share_frame(key_share))

    def redeem(self, net: Network, token: PresenceToken) -> KeyShare:
        entry = self.state.registry.get(token.venue_id)
        if entry is None:
            raise CredentialError(f"venue {token.venue_id} is not registered")
        venue_actor, venue_key = entry
        if not credentials.verify_presence_token(venue_key, token):
            raise CredentialError("presence token signature does not verify")
        if (token.venue_id, token.nonce) in self.state.spent_tokens:
            raise DuplicateTokenError("presence token already redeemed")
        if net.clock - token.timestamp_ms > self.params.token_ttl_ms:
            raise DuplicateTokenError("presence token expired")
        self.state.spent_tokens.add((token.venue_id, token.nonce))

        secrets = self.state.secrets[venue_actor]
        if secrets.next_ordinal > self.params.k:
            # the (k+1)-th redemption opens a new cycle and is served from it
            secrets = self.start_cycle(net, venue_actor)
        share = secrets.shares[secrets.next_ordinal - 1]
        secrets.next_ordinal += 1
        unsigned = KeyShare(venue_id=token.venue_id, cycle=secrets.cycle, share=share)
        return KeyShare(venue_id=unsigned.venue_id, cycle=unsigned.cycle, share=share,
                        signature=credentials.sign(self.keys.private, unsigned.message()))

    def _on_pseudonym_request(self, net: Network, src: str, frame: wire.Frame):
        user_id, epoch = frame.text(0), frame.integer(1)
        blinded = int.from_bytes(frame.blob(2), 'big')
        try:
            blind_signature = self.issuer.issue(user_id, epoch, blinded)
        except CredentialError as e:
            net.trace.record('pseudonym_refused', net.clock, user=src, epoch=epoch)
            net.send(self.actor_id, src, _reject('pseudonym', e))
            return
        width = self.keys.public.size_in_bytes()
        net.send(self.actor_id, src, wire.frame(wire.Tag.PSEUDONYM_GRANT, [
            wire.integer(epoch), wire.blob(blind_signature.to_bytes(width, 'big'))]))

    def _on_publish(self, net: Network, src: str, frame: wire.Frame):
        self.state.published.append({'venue': src, 'cycle': frame.integer(1),
                                     'lines': frame.text(2)})

    def _reply(self, net: Network, alias: str, frame: wire.Frame):
        net.send(self.actor_id, MIX_ID, envelope(alias, self.actor_id, frame))

    def state_view(self) -> Dict[str, Any]:
        return {
            'cycles': dict(self.state.cycles),
            'spent_tokens': len(self.state.spent_tokens),
            'issued': {v: s.next_ordinal - 1 for v, s in self.state.secrets.items()},
        }


# Venue

class VenueActor(Actor):
    """Venue device: presence challenges, ZK-verified counter updates and publication."""

    def __init__(self, actor_id: str, venue_id: int, dimensions: Sequence[DimensionSpec],
                 params: ProtocolParams, provider_pub: RSA.RsaKey, rng: random.Random,
                 keys: Optional[SignatureKeyPair] = None, provider_id: str = PROVIDER_ID,
                 hash_ms: float = config.VENUE_HASH_MS):
        super().__init__(actor_id)
        self.dimensions = {d.name: d for d in dimensions}
        self.params = params
        self.provider_pub = provider_pub
        self.provider_id = provider_id
        self.rng = rng
        self.hash_ms = hash_ms
        self.keys = keys or credentials.generate_signature_keys(params.rsa_bits, rng)
        self.state = VenueState(venue_id=venue_id)
        self.challenges: Dict[str, Tuple[SpoterChallenge, Pseudonym]] = {}
        self.sessions: Dict[str, Session] = {}
        self.current: Optional[CheckInRun] = None
        self.pending_cycle: Optional[Tuple[int, BenalohPublicKey]] = None
        self.setup_error: Optional[errors.LcpLabError] = None
        self.setup_requested = False
        self.supersede_ms = config.CYCLE_SUPERSEDE_MS
        self.deferred: List[Tuple[str, wire.Frame]] = []
        self.waiting: Deque[Tuple[str, wire.Frame]] = deque()
        self.spoter_timings: List[Dict[str, Any]] = []
        self.share_params = threshold.cycle_share_params(params.k, params.modulus_bits)

    def epoch(self, net: Network) -> int:
        return int(net.clock // self.params.epoch_ms)

    def request_setup(self, net: Network):
        self.setup_requested = True
        max_b = max(d.b for d in self.dimensions.values())
        net.send(self.actor_id, self.provider_id, wire.frame(wire.Tag.SETUP_REQUEST, [
            wire.integer(self.state.venue_id),
            wire.blob(self.keys.public.export_key(format='DER')),
            wire.integer(max_b),
            wire.integer(self.state.cycle),
        ]))

    def on_frame(self, net: Network, src: str, dst: str, frame: wire.Frame):
        handler = {
            wire.Tag.TIMER: self._on_timer,
            wire.Tag.SETUP_KEY: self._on_setup_key,
            wire.Tag.HELLO: self._on_hello,
            wire.Tag.SPOTER_RESPONSE: self._on_spoter_response,
            wire.Tag.CHECKIN_REQUEST: self._on_checkin_request,
            wire.Tag.COUNTERS_NEXT: self._on_counters_next,
            wire.Tag.COMMIT: self._on_commit,
            wire.Tag.REVEAL: self._on_reveal,
            wire.Tag.REJECT: self._on_reject,
        }.get(frame.tag)
        if handler is not None:
            handler(net, src, frame)

    # Setup

    def _on_setup_key(self, net: Network, src: str, frame: wire.Frame):
        cycle, pk = frame.integer(0), benaloh.public_key_from_bytes(frame.blob(1))
        if cycle <= self.state.cycle:
            return
        if not self.setup_requested and self.state.pk is not None:
            # opened by the provider on an over-full cycle; shares of the open
            # cycle may still be presented
            self.pending_cycle = (cycle, pk)
            return
        self.setup_requested = False
        self.install_cycle(net, cycle, pk)
        if self.deferred and self.current is None:
            self._replay_deferred(net)

    def install_cycle(self, net: Network, cycle: int, pk: BenalohPublicKey):
        if self.state.pk is not None and 0 < self.state.checkins < self.params.k:
            outcome = {'venue': self.actor_id, 'cycle': self.state.cycle,
                       'shares': len(self.state.shares), 'reason': 'cycle superseded'}
            self.state.aborted_cycles.append(outcome)
            net.trace.record('pubstats_abort', net.clock, **outcome)
            logger.info(f"{self.actor_id}: cycle {self.state.cycle} superseded "
                        f"after {self.state.checkins} check-ins")
        self.pending_cycle = None
        self.state.cycle = cycle
        self.state.pk = pk
        self.state.counters = {name: lcp_model.init_counters(pk, spec, self.rng)
                               for name, spec in self.dimensions.items()}
        self.state.shares = []
        self.state.checkins = 0
        net.trace.record('cycle_open', net.clock, venue=self.actor_id, cycle=cycle)

    def _on_reject(self, net: Network, src: str, frame: wire.Frame):
        self.setup_error = error_from_reject(frame)
        net.trace.record('setup_rejected', net.clock, venue=self.actor_id, reason=frame.text(1))

    # Spoter

    def _on_hello(self, net: Network, src: str, frame: wire.Frame):
        pseudonym = Pseudonym(epoch=frame.integer(0), token=frame.blob(1),
                              signature=frame.blob(2))
        epoch = self.epoch(net)
        try:
            if pseudonym.epoch != epoch or not credentials.verify_pseudonym(self.provider_pub,
                                                                            pseudonym):
                raise CredentialError("pseudonym not valid for this epoch")
            if (pseudonym.token, epoch) in self.state.spent:
                raise PseudonymReuseError("pseudonym already checked in this epoch")
            if self.state.pk is None:
                raise ProtocolAbort('setup', "venue has no active cycle")
        except errors.LcpLabError as e:
            net.trace.record('spoter_rejected', net.clock, venue=self.actor_id, alias=src,
                             reason=type(e).__name__)
            net.send(self.actor_id, src, _reject('hello', e))
            return
        challenge = SpoterChallenge(sampled_time_us=int(round(net.clock * 1000)),
                                    expiry_ms=int(self.params.token_ttl_ms),
                                    nonce=self.rng.randbytes(32), issued_at=net.clock)
        self.challenges[src] = (challenge, pseudonym)
        net.send(self.actor_id, src, wire.frame(wire.Tag.SPOTER_CHALLENGE, [
            wire.integer(challenge.sampled_time_us), wire.integer(challenge.expiry_ms),
            wire.blob(challenge.nonce)]))

    def _on_spoter_response(self, net: Network, src: str, frame: wire.Frame):
        pending = self.challenges.pop(src, None)
        if pending is None:
            return
        challenge, pseudonym = pending
        elapsed = net.clock - challenge.issued_at
        self.spoter_timings.append({'alias': src, 'elapsed_ms': elapsed})
        try:
            if net.clock > challenge.deadline(self.params.delta_ms):
                raise TimingViolation(
                    f"response after {elapsed:.3f} ms exceeds {self.params.delta_ms} ms"
                )
            if frame.blob(0) != challenge.expected_response():
                raise CredentialError("challenge response hash mismatch")
        except errors.LcpLabError as e:
            logger.info(f"Spoter rejected at {self.actor_id}: {e}")
            net.trace.record('spoter_rejected', net.clock, venue=self.actor_id, alias=src,
                             reason=type(e).__name__, elapsed_ms=round(elapsed, 6))
            net.send(self.actor_id, src, _reject('spoter', e), delay=self.hash_ms)
            return
        token = credentials.sign_presence_token(self.keys.private, PresenceToken(
            venue_id=self.state.venue_id, epoch=self.epoch(net),
            timestamp_us=int(round(net.clock * 1000)), nonce=self.rng.randbytes(32)))
        self.sessions[src] = Session(nonce=token.nonce, pseudonym=pseudonym)
        net.trace.record('spoter_accepted', net.clock, venue=self.actor_id, alias=src,
                         elapsed_ms=round(elapsed, 6))
        net.send(self.actor_id, src, token_frame(wire.Tag.TOKEN, token), delay=self.hash_ms)

    # CheckIn

    def _on_checkin_request(self, net: Network, src: str, frame: wire.Frame):
        if self.current is not None:
            self.waiting.append((src, frame))
            return
        key_share = parse_share(frame, offset=1)
        if key_share.cycle > self.state.cycle:
            # next-cycle share: hold it until the open cycle completes or times out
            if not self.deferred:
                net.timer(self.actor_id, self.supersede_ms, wire.frame(wire.Tag.TIMER))
            self.deferred.append((src, frame))
            return
        session = self.sessions.pop(src, None)
        try:
            if session is None or session.nonce != frame.blob(0):
                raise ProtocolAbort('session', "no Spoter session for this pseudonym")
            if not credentials.verify(self.provider_pub, key_share.message(),
                                      key_share.signature):
                raise CredentialError("share is not signed by the provider")
            if key_share.venue_id != self.state.venue_id or key_share.cycle != self.state.cycle:
                raise CredentialError("share belongs to another venue or cycle")
            if not credentials.check_pseudonym_fresh(self.state.spent, session.pseudonym,
                                                     self.epoch(net)):
                raise PseudonymReuseError("pseudonym already checked in this epoch")
        except errors.LcpLabError as e:
            self._finish(net, src, accepted=False, reason=type(e).__name__)
            return
        self.current = CheckInRun(alias=src, key_share=key_share)
        sets = [self.state.counters[name] for name in self.dimensions]
        net.send(self.actor_id, src, counters_frame(wire.Tag.COUNTERS, self.state.pk, sets,
                                                    with_key=True))

    def _on_counters_next(self, net: Network, src: str, frame: wire.Frame):
        run = self._run_for(src)
        if run is None:
            return
        try:
            sets = parse_counters(frame, pk=self.state.pk)
            if [s.dimension for s in sets] != list(self.dimensions):
                raise ProtocolAbort('counters', "dimension mismatch")
            for counter_set in sets:
                if counter_set.b != self.dimensions[counter_set.dimension].b:
                    raise ProtocolAbort('counters', "counter set has the wrong length")
        except (errors.LcpLabError, ValueError) as e:
            self._finish(net, src, accepted=False, reason=type(e).__name__)
            return
        run.c_next = {s.dimension: s for s in sets}
        self._start_dimension(run)

    def _start_dimension(self, run: CheckInRun):
        name = list(self.dimensions)[run.dimension_index]
        run.round_index = 0
        run.verifier = zk_ctr.CounterVerifier(self.state.pk, self.state.counters[name],
                                              run.c_next[name], self.rng)

    def _on_commit(self, net: Network, src: str, frame: wire.Frame):
        run = self._run_for(src)
        if run is None or run.verifier is None:
            return
        try:
            run.commitment = zk_ctr.parse_commit(frame, self.state.pk)
        except errors.LcpLabError as e:
            self._finish(net, src, accepted=False, reason=type(e).__name__)
            return
        run.challenge = run.verifier.challenge()
        net.send(self.actor_id, src, zk_ctr.challenge_frame(run.challenge))

    def _on_reveal(self, net: Network, src: str, frame: wire.Frame):
        run = self._run_for(src)
        if run is None or run.commitment is None:
            return
        try:
            reveal = zk_ctr.parse_reveal(frame, run.verifier.c_prev.b)
            ok = run.verifier.verify(run.commitment, run.challenge, reveal)
        except (errors.LcpLabError, ValueError):
            ok = False
        run.commitment = None
        if not ok:
            logger.info(f"ZK-CTR failed at {self.actor_id} in round {run.round_index}")
            self._finish(net, src, accepted=False, reason='ProtocolAbort')
            return
        run.round_index += 1
        if run.round_index < self.params.s:
            return
        run.dimension_index += 1
        if run.dimension_index < len(self.dimensions):
            self._start_dimension(run)
            return
        self._accept(net, run)

    def _accept(self, net: Network, run: CheckInRun):
        self.state.counters = dict(run.c_next)
        self.state.shares.append(run.key_share)
        self.state.checkins += 1
        self._finish(net, run.alias, accepted=True, reason='')
        if self.state.checkins == self.params.k:
            try:
                self.publish(net)
            except (ProtocolAbort, IntegrityAlarm, DecryptionError):
                pass
            if self.pending_cycle is not None:
                self._switch_to_pending(net)
            else:
                self.request_setup(net)

    def _on_timer(self, net: Network, src: str, frame: wire.Frame):
        if not self.deferred:
            return
        if self.current is not None:
            net.timer(self.actor_id, self.supersede_ms, wire.frame(wire.Tag.TIMER))
            return
        if self.pending_cycle is not None:
            self._switch_to_pending(net)
            return
        deferred, self.deferred = self.deferred, []
        for alias, _ in deferred:
            self.sessions.pop(alias, None)
            self._finish(net, alias, accepted=False, reason='CredentialError')

    def _switch_to_pending(self, net: Network):
        self.install_cycle(net, *self.pending_cycle)
        self._replay_deferred(net)

    def _replay_deferred(self, net: Network):
        deferred, self.deferred = self.deferred, []
        for src, frame in deferred:
            self._on_checkin_request(net, src, frame)

    def _finish(self, net: Network, alias: str, accepted: bool, reason: str):
        net.trace.record('checkin', net.clock, venue=self.actor_id, alias=alias,
                         accepted=accepted, reason=reason, cycle=self.state.cycle,
                         ordinal=self.state.checkins)
        net.send(self.actor_id, alias, wire.frame(wire.Tag.CHECKIN_RESULT, [
            wire.integer(int(accepted)), wire.text(reason)]))
        if self.current is not None and self.current.alias == alias:
            self.current = None
        while self.current is None and self.waiting:
            src, frame = self.waiting.popleft()
            self._on_checkin_request(net, src, frame)

    def _run_for(self, src: str) -> Optional[CheckInRun]:
        if self.current is None or self.current.alias != src:
            return None
        return self.current

    # PubStats

    def publish(self, net: Network) -> Dict[str, List[Tuple[str, int]]]:
        """Run PubStats; on success send the tally to the provider."""
        started = time.perf_counter()
        try:
            tally = pub_stats(self.state, self.dimensions, self.params.k, self.share_params)
        except (ProtocolAbort, IntegrityAlarm, DecryptionError) as e:
            outcome = {'venue': self.actor_id, 'cycle': self.state.cycle,
                       'shares': len(self.state.shares), 'reason': type(e).__name__}
            self.state.aborted_cycles.append(outcome)
            net.trace.record('pubstats_abort', net.clock, **outcome)
            raise
        record = {'venue': self.actor_id, 'cycle': self.state.cycle, 'tally': tally,
                  'elapsed_s': time.perf_counter() - started}
        self.state.published.append(record)
        lines = format_published(tally)
        net.trace.record('publish', net.clock, venue=self.actor_id, cycle=self.state.cycle,
                         tally={d: [c for _, c in rows] for d, rows in tally.items()})
        net.send(self.actor_id, self.provider_id, wire.frame(wire.Tag.PUBLISH, [
            wire.integer(self.state.venue_id), wire.integer(self.state.cycle),
            wire.text(lines)]))
        return tally

    def state_view(self) -> Dict[str, Any]:
        return {
            'cycle': self.state.cycle,
            'checkins': self.state.checkins,
            'shares': len(self.state.shares),
            'counter_digest': {
                name: [r.count_part.value % 65521 for r in cs.counters]
                for name, cs in self.state.counters.items()
            },
        }


def pub_stats(state: VenueState, dimensions: Dict[str, DimensionSpec], k: int,
              share_params: ShareParams) -> Dict[str, List[Tuple[str, int]]]:
    """Reconstruct p from k shares, factor n and decrypt every counter set."""
    if len(state.shares) < k:
        logger.info(f"PubStats abort: {len(state.shares)} of {k} shares")
        raise ProtocolAbort('pubstats', f"only {len(state.shares)} of {k} shares")
    p = threshold.reconstruct([ks.share for ks in state.shares[:k]], share_params)
    n = state.pk.n
    if p <= 1 or n % p != 0:
        logger.error(f"Integrity alarm at venue {state.venue_id}: "
                     "reconstructed p does not divide n")
        raise IntegrityAlarm("reconstructed p does not divide n")
    q = n // p
    if p * q != n:
        raise IntegrityAlarm("p * (n / p) != n")
    sk = BenalohSecretKey(p=p, q=q)
    tally = {}
    for name, spec in dimensions.items():
        counts = lcp_model.histogram(lcp_model.decrypt_counters(state.pk, sk,
                                                                state.counters[name]))
        tally[name] = list(zip(spec.labels(), counts))
    logger.info(f"Published cycle {state.cycle} of venue {state.venue_id}")
    return tally


def format_published(tally: Dict[str, List[Tuple[str, int]]]) -> str:
    """One line per (dimension, sub-range label, count)."""
    return ''.join(f"{dim}\t{label}\t{count}\n"
                   for dim, rows in tally.items() for label, count in rows)


# User

class UserActor(Actor):
    """User device: pseudonym, Spoter, share redemption over the mix and CheckIn.

    `behavior` selects a cheating variant: double_increment, zero_increment and
    corrupt_counter forge the counter set and run a guessing prover;
    forge_share presents a share with a bad signature; replay_token redeems its
    presence token twice; sybil_checkin repeats a full check-in in the same epoch.
    """

    def __init__(self, actor_id: str, profile: Profile, dimensions: Sequence[DimensionSpec],
                 params: ProtocolParams, provider_pub: RSA.RsaKey, rng: random.Random,
                 behavior: Optional[str] = None, provider_id: str = PROVIDER_ID,
                 hash_ms: float = config.DEVICE_HASH_MS, relay: Optional[str] = None,
                 attempts: int = 1):
        super().__init__(actor_id)
        self.profile = profile
        self.dimensions = list(dimensions)
        self.params = params
        self.provider_pub = provider_pub
        self.provider_id = provider_id
        self.rng = rng
        self.behavior = behavior
        self.hash_ms = hash_ms
        self.relay = relay
        self.attempts = attempts
        self.auto_checkin = True
        self.venue: Optional[str] = None
        self.pseudonym: Optional[Pseudonym] = None
        self.pending_pseudonym: Optional[Tuple[int, bytes, int]] = None
        self.token: Optional[PresenceToken] = None
        self.key_share: Optional[KeyShare] = None
        self.session_pk: Optional[BenalohPublicKey] = None
        self.provers: List[Any] = []
        self.prover_index = 0
        self.rounds_sent = 0
        self.results: List[Dict[str, Any]] = []
        self.failure: Optional[errors.LcpLabError] = None
        self.finished = False
        self.started = False

    @property
    def alias(self) -> Optional[str]:
        return self.pseudonym.alias if self.pseudonym else None

    def begin(self, net: Network, venue: str, auto_checkin: bool = True):
        """Start Spoter (and, with auto_checkin, the CheckIn that follows)."""
        self.venue = venue
        self.auto_checkin = auto_checkin
        self.started = True
        self.finished = False
        self.failure = None
        self.key_share = None
        epoch = int(net.clock // self.params.epoch_ms)
        if self.pseudonym is None or self.pseudonym.epoch != epoch:
            token, factor, blinded = credentials.request_pseudonym(self.provider_pub, epoch,
                                                                   self.rng)
            self.pending_pseudonym = (epoch, token, factor)
            width = self.provider_pub.size_in_bytes()
            net.send(self.actor_id, self.provider_id, wire.frame(wire.Tag.PSEUDONYM_REQUEST, [
                wire.text(self.actor_id), wire.integer(epoch),
                wire.blob(blinded.to_bytes(width, 'big'))]))
            return
        self._hello(net)

    def _hello(self, net: Network):
        p = self.pseudonym
        self._to_venue(net, wire.frame(wire.Tag.HELLO, [
            wire.integer(p.epoch), wire.blob(p.token), wire.blob(p.signature)]))

    def _to_venue(self, net: Network, frame: wire.Frame, delay: float = 0.0):
        net.send(self.actor_id, self.venue, frame, delay=delay, as_alias=self.alias)

    def begin_checkin(self, net: Network):
        """Present the share obtained by Spoter and start CheckIn."""
        if self.key_share is None or self.token is None:
            raise ProtocolAbort('checkin', "CheckIn requires a successful Spoter run")
        share = self.key_share
        if self.behavior == 'forge_share':
            share = KeyShare(venue_id=share.venue_id, cycle=share.cycle, share=Share(
                index=share.share.index, value=self.rng.randrange(1, 1 << 256)),
                signature=bytes(len(share.signature)))
        self._to_venue(net, share_frame(share, tag=wire.Tag.CHECKIN_REQUEST,
                                        prefix=[wire.blob(self.token.nonce)]))

    def on_frame(self, net: Network, src: str, dst: str, frame: wire.Frame):
        handler = {
            wire.Tag.TIMER: self._on_timer,
            wire.Tag.PSEUDONYM_GRANT: self._on_pseudonym_grant,
            wire.Tag.SPOTER_CHALLENGE: self._on_challenge,
            wire.Tag.TOKEN: self._on_token,
            wire.Tag.SHARE: self._on_share,
            wire.Tag.COUNTERS: self._on_counters,
            wire.Tag.CHALLENGE: self._on_zk_challenge,
            wire.Tag.CHECKIN_RESULT: self._on_result,
            wire.Tag.REJECT: self._on_reject,
        }.get(frame.tag)
        if handler is not None:
            handler(net, src, frame)

    def _on_timer(self, net: Network, src: str, frame: wire.Frame):
        self.begin(net, frame.text(0))

    def _on_pseudonym_grant(self, net: Network, src: str, frame: wire.Frame):
        epoch, token, factor = self.pending_pseudonym
        self.pending_pseudonym = None
        blinded_signature = int.from_bytes(frame.blob(1), 'big')
        self.pseudonym = credentials.finish_pseudonym(self.provider_pub, epoch, token, factor,
                                                      blinded_signature)
        net.register_alias(self.alias, self.actor_id)
        if self.relay is not None:
            net.route_alias(self.actor_id, self.venue, self.relay)
            net.route_alias(self.venue, self.alias, self.relay)
        self._hello(net)

    def _on_challenge(self, net: Network, src: str, frame: wire.Frame):
        digest = spoter_digest(frame.integer(0), frame.integer(1), frame.blob(2))
        self._to_venue(net, wire.frame(wire.Tag.SPOTER_RESPONSE, [wire.blob(digest)]),
                       delay=self.hash_ms)

    def _on_token(self, net: Network, src: str, frame: wire.Frame):
        self.token = parse_token(frame)
        redeem = token_frame(wire.Tag.REDEEM, self.token)
        net.send(self.actor_id, MIX_ID, envelope(self.provider_id, self.alias, redeem),
                 as_alias=self.alias)
        if self.behavior == 'replay_token':
            net.send(self.actor_id, MIX_ID, envelope(self.provider_id, self.alias, redeem),
                     as_alias=self.alias)

    def _on_share(self, net: Network, src: str, frame: wire.Frame):
        if self.key_share is not None:
            return
        key_share = parse_share(frame)
        if not credentials.verify(self.provider_pub, key_share.message(), key_share.signature):
            self._fail(net, CredentialError("provider share signature invalid"))
            return
        self.key_share = key_share
        net.trace.record('share_received', net.clock, user=self.actor_id, cycle=key_share.cycle)
        if self.auto_checkin:
            self.begin_checkin(net)

    def _on_counters(self, net: Network, src: str, frame: wire.Frame):
        self.session_pk = pk = benaloh.public_key_from_bytes(frame.blob(0))
        c_prev_sets = parse_counters(frame, offset=1)
        next_sets, self.provers = [], []
        for spec, c_prev in zip(self.dimensions, c_prev_sets):
            try:
                j = lcp_model.classify(self.profile.value(spec.name), spec)
            except (errors.DomainError, KeyError) as e:
                logger.warning(f"{self.actor_id}: profile has no valid {spec.name}: {e}")
                # an empty update makes the venue close the session
                self._to_venue(net, counters_frame(wire.Tag.COUNTERS_NEXT, pk, []))
                return
            if self.behavior in zk_ctr.CHEATING_STRATEGIES:
                c_next = zk_ctr.forge_counter_set(pk, c_prev, j, self.behavior, self.rng)
                prover = zk_ctr.CheatingProver(pk, c_prev, c_next, self.rng)
            else:
                c_next, witness = lcp_model.reencrypt_and_increment(pk, c_prev, j, self.rng)
                prover = zk_ctr.HonestProver(pk, c_prev, c_next, witness, self.rng)
            next_sets.append(c_next)
            self.provers.append(prover)
        self.prover_index = 0
        self.rounds_sent = 0
        self._to_venue(net, counters_frame(wire.Tag.COUNTERS_NEXT, pk, next_sets))
        self._commit(net)

    def _commit(self, net: Network):
        prover = self.provers[self.prover_index]
        self._to_venue(net, zk_ctr.commit_frame(self.session_pk, prover.commit()))

    def _on_zk_challenge(self, net: Network, src: str, frame: wire.Frame):
        prover = self.provers[self.prover_index]
        reveal = prover.respond(frame.integer(0))
        self._to_venue(net, zk_ctr.reveal_frame(self.session_pk, reveal))
        self.rounds_sent += 1
        if self.rounds_sent < self.params.s:
            self._commit(net)
        elif self.prover_index + 1 < len(self.provers):
            self.prover_index += 1
            self.rounds_sent = 0
            self._commit(net)

    def _on_result(self, net: Network, src: str, frame: wire.Frame):
        accepted = bool(frame.integer(0))
        self.results.append({'venue': self.venue, 'accepted': accepted,
                             'reason': frame.text(1), 'at': net.clock})
        if not accepted:
            self.failure = error_from_reject(wire.frame(wire.Tag.REJECT, [
                wire.text('checkin'), wire.text(frame.text(1) or 'ProtocolAbort'),
                wire.text('check-in rejected')]))
        self._done(net)

    def _on_reject(self, net: Network, src: str, frame: wire.Frame):
        if frame.text(0) == 'redeem' and self.behavior == 'replay_token':
            net.trace.record('replay_refused', net.clock, user=self.actor_id,
                             reason=frame.text(1))
            return
        self._fail(net, error_from_reject(frame))

    def _fail(self, net: Network, error: errors.LcpLabError):
        self.failure = error
        self.results.append({'venue': self.venue, 'accepted': False,
                             'reason': type(error).__name__, 'at': net.clock})
        net.trace.record('user_failed', net.clock, user=self.actor_id,
                         reason=type(error).__name__)
        self._done(net)

    def _done(self, net: Network):
        self.finished = True
        self.attempts -= 1
        if self.behavior == 'sybil_checkin' and self.attempts > 0:
            self.token = None
            self.begin(net, self.venue)

    def state_view(self) -> Dict[str, Any]:
        return {'shares_held': 1 if self.key_share else 0, 'finished': self.finished}


# Synchronous API over the same actors

def standard_topology(net: Network, provider_id: str, venue_ids: Sequence[str],
                      user_ids: Sequence[str],
                      local_ms: float = config.LOCAL_ONE_WAY_MS,
                      wired_ms: float = config.WIRED_ONE_WAY_MS):
    """Users reach venues over local anonymous links and the provider through the mix."""
    for venue_id in venue_ids:
        net.connect(venue_id, provider_id, ChannelSpec(DIRECT, wired_ms))
        for user_id in user_ids:
            net.connect(user_id, venue_id, ChannelSpec(ANONYMOUS, local_ms))
    for user_id in user_ids:
        net.connect(user_id, provider_id, ChannelSpec(DIRECT, wired_ms))
        net.connect(user_id, MIX_ID, ChannelSpec(ANONYMOUS, wired_ms / 2))
    net.connect(MIX_ID, provider_id, ChannelSpec(ANONYMOUS, wired_ms / 2))


def setup(net: Network, venue: VenueActor, provider: ProviderActor) -> VenueState:
    """Setup: fresh key pair at the provider, C_0 and an empty share set at the venue."""
    venue.setup_error = None
    venue.request_setup(net)
    net.run()
    if venue.setup_error is not None:
        raise venue.setup_error
    if venue.state.pk is None or provider.state.cycles.get(venue.actor_id) != venue.state.cycle:
        raise ProtocolAbort('setup', "venue did not receive cycle keys")
    return venue.state


def spoter(net: Network, user: UserActor, venue: VenueActor) -> KeyShare:
    """Run Spoter and share redemption; returns the signed share or raises the failure."""
    user.begin(net, venue.actor_id, auto_checkin=False)
    net.run()
    if user.key_share is None:
        raise user.failure or ProtocolAbort('spoter', "no share obtained")
    return user.key_share


def check_in(net: Network, user: UserActor, venue: VenueActor) -> bool:
    """Run CheckIn after a successful Spoter; True if the venue accepted."""
    user.begin_checkin(net)
    net.run()
    return bool(user.results) and user.results[-1]['accepted']

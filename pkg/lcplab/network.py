"""Deterministic discrete-event network: actors, latency-modeled channels, mix and traces."""
import heapq
import json
import logging
import random
from collections import defaultdict
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from Crypto.Hash import SHA256

from . import config, wire
from .errors import ParameterError

logger = logging.getLogger(__name__)

DIRECT = 'direct'
ANONYMOUS = 'anonymous'
MIX_ID = 'mix'


@dataclass(frozen=True)
class SimEvent:
    timestamp: float
    seq: int
    src: str
    dst: str
    data: bytes


@dataclass(frozen=True)
class ChannelSpec:
    kind: str = DIRECT
    latency_ms: float = config.LOCAL_ONE_WAY_MS
    jitter_ms: float = 0.0

    def __post_init__(self):
        if self.kind not in (DIRECT, ANONYMOUS):
            raise ParameterError(f"unknown channel kind {self.kind!r}")
        if self.latency_ms < 0 or self.jitter_ms < 0:
            raise ParameterError("channel latency must be >= 0")

    @classmethod
    def from_mapping(cls, values: Dict[str, Any]) -> 'ChannelSpec':
        latency = values.get('latency_ms', config.LOCAL_ONE_WAY_MS)
        jitter = 0.0
        if isinstance(latency, list):
            latency, high = latency
            jitter = high - latency
        return cls(kind=values.get('kind', DIRECT), latency_ms=float(latency),
                   jitter_ms=float(jitter))

    def sample(self, rng: random.Random) -> float:
        if self.jitter_ms:
            return self.latency_ms + rng.uniform(0.0, self.jitter_ms)
        return self.latency_ms


class Trace:
    """Line-delimited structured records of everything that happened in a run."""

    def __init__(self):
        self.records: List[Dict[str, Any]] = []

    def record(self, kind: str, at: float, **details):
        entry = {'t': round(at, 6), 'kind': kind}
        entry.update(details)
        self.records.append(entry)

    def of_kind(self, kind: str) -> List[Dict[str, Any]]:
        return [r for r in self.records if r['kind'] == kind]

    def to_lines(self) -> str:
        return ''.join(json.dumps(r, sort_keys=True, default=str) + '\n' for r in self.records)

    def to_bytes(self) -> bytes:
        return self.to_lines().encode('utf-8')


class Actor:
    """Single-owner protocol state machine; reacts to frames delivered by the network."""

    def __init__(self, actor_id: str):
        self.actor_id = actor_id

    def on_frame(self, net: 'Network', src: str, dst: str, frame: wire.Frame):
        raise NotImplementedError

    def state_view(self) -> Dict[str, Any]:
        return {}


class Network:
    """Single-threaded event loop over simulated milliseconds."""

    def __init__(self, rng: random.Random, trace: Optional[Trace] = None):
        self.rng = rng
        self.trace = trace if trace is not None else Trace()
        self.clock = 0.0
        self.actors: Dict[str, Actor] = {}
        self.channels: Dict[Tuple[str, str], ChannelSpec] = {}
        self.aliases: Dict[str, str] = {}
        self.alias_routes: Dict[Tuple[str, str], str] = {}
        self.transcripts: Dict[str, List[Tuple[str, bytes]]] = defaultdict(list)
        self.bytes_by_tag: Dict[str, int] = defaultdict(int)
        self.bits_by_tag: Dict[str, int] = defaultdict(int)
        self.state_hooks: List[Callable[['Network', SimEvent], None]] = []
        self._queue: List[Tuple[float, int, SimEvent]] = []
        self._seq = 0
        self._last_arrival: Dict[Tuple[str, str], float] = {}

    # topology

    def add(self, actor: Actor) -> Actor:
        self.actors[actor.actor_id] = actor
        return actor

    def connect(self, a: str, b: str, spec: ChannelSpec, bidirectional: bool = True):
        self.channels[(a, b)] = spec
        if bidirectional:
            self.channels[(b, a)] = spec

    def register_alias(self, alias: str, actor_id: str):
        self.aliases[alias] = actor_id

    def route_alias(self, src: str, alias: str, via: str):
        """Frames from src addressed to alias are delivered to `via` instead."""
        self.alias_routes[(src, alias)] = via

    def resolve(self, src: str, dst: str) -> str:
        if (src, dst) in self.alias_routes:
            return self.alias_routes[(src, dst)]
        return self.aliases.get(dst, dst)

    # messaging

    def send(self, src: str, dst: str, frame: wire.Frame, delay: float = 0.0,
             as_alias: Optional[str] = None):
        """Schedule delivery; on anonymous channels the receiver sees only `as_alias`."""
        target = self.resolve(src, dst)
        spec = self.channels.get((src, target))
        data = wire.encode(frame)
        if spec is None:
            self.trace.record('dropped', self.clock, src=src, dst=dst, tag=frame.tag.name,
                              reason='no channel')
            return
        visible_src = as_alias if (spec.kind == ANONYMOUS and as_alias) else src
        arrival = self.clock + delay + spec.sample(self.rng)
        arrival = max(arrival, self._last_arrival.get((src, target), 0.0))
        self._last_arrival[(src, target)] = arrival
        self._push(SimEvent(timestamp=arrival, seq=self._next_seq(), src=visible_src,
                            dst=dst, data=data), target)
        self.transcripts[src].append(('out', data))
        self.bytes_by_tag[frame.tag.name] += len(data)
        self.bits_by_tag[frame.tag.name] += wire.payload_bits(frame)

    def timer(self, actor_id: str, delay: float, frame: wire.Frame):
        self._push(SimEvent(timestamp=self.clock + delay, seq=self._next_seq(), src=actor_id,
                            dst=actor_id, data=wire.encode(frame)), actor_id)

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _push(self, event: SimEvent, target: str):
        heapq.heappush(self._queue, (event.timestamp, event.seq, (target, event)))

    def pending(self) -> int:
        return len(self._queue)

    def step(self) -> Optional[SimEvent]:
        if not self._queue:
            return None
        _, _, (target, event) = heapq.heappop(self._queue)
        self.clock = event.timestamp
        frame = wire.decode(event.data)
        if frame.tag != wire.Tag.TIMER:
            self.transcripts[target].append(('in', event.data))
            self.trace.record('deliver', self.clock, src=event.src, dst=event.dst,
                              tag=frame.tag.name, size=len(event.data),
                              digest=_digest(event.data))
        actor = self.actors.get(target)
        if actor is None:
            self.trace.record('dropped', self.clock, src=event.src, dst=event.dst,
                              tag=frame.tag.name, reason='unknown actor')
        else:
            actor.on_frame(self, event.src, event.dst, frame)
        for hook in self.state_hooks:
            hook(self, event)
        return event

    def run(self, until: Optional[float] = None, max_events: int = 1_000_000) -> int:
        processed = 0
        while self._queue and processed < max_events:
            if until is not None and self._queue[0][0] > until:
                break
            self.step()
            processed += 1
        if until is not None:
            self.clock = max(self.clock, until)
        return processed


def _digest(data: bytes) -> str:
    return SHA256.new(data).hexdigest()[:16]


@dataclass(frozen=True)
class MixMessage:
    dst: str
    alias: str
    data: bytes


def mix_forward(messages: Sequence[MixMessage], rng: random.Random) -> List[MixMessage]:
    """Seeded random permutation of a batch; entries carry no true sender."""
    batch = list(messages)
    rng.shuffle(batch)
    return batch


def envelope(dst: str, alias: str, inner: wire.Frame) -> wire.Frame:
    return wire.frame(wire.Tag.MIX_ENVELOPE,
                      [wire.text(dst), wire.text(alias), wire.blob(wire.encode(inner))])


class MixActor(Actor):
    """Anonymizer: batches envelopes for a window, then forwards them permuted."""

    def __init__(self, rng: random.Random, window_ms: float = config.MIX_WINDOW_MS,
                 actor_id: str = MIX_ID):
        super().__init__(actor_id)
        self.rng = rng
        self.window_ms = window_ms
        self.queue: List[MixMessage] = []
        self.forwarded = 0

    def on_frame(self, net: Network, src: str, dst: str, frame: wire.Frame):
        if frame.tag == wire.Tag.TIMER:
            batch, self.queue = self.queue, []
            for message in mix_forward(batch, self.rng):
                inner = wire.decode(message.data)
                net.send(self.actor_id, message.dst, inner, as_alias=message.alias)
                self.forwarded += 1
            net.trace.record('mix_flush', net.clock, size=len(batch))
            return
        if frame.tag != wire.Tag.MIX_ENVELOPE:
            return
        if not self.queue:
            net.timer(self.actor_id, self.window_ms, wire.frame(wire.Tag.TIMER))
        self.queue.append(MixMessage(dst=frame.text(0), alias=frame.text(1), data=frame.blob(2)))

    def state_view(self) -> Dict[str, Any]:
        return {'queued': len(self.queue), 'forwarded': self.forwarded}

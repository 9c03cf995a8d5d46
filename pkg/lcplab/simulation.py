"""Scenario execution over the simulated network.

A scenario file describes the protocol parameters, profile dimensions, actors
(venues and users, or the co-located group of a snapshot), channel latencies and
adversaries. `run_scenario` builds the actors, runs the event loop to
quiescence, closes any open cycle and appends the histogram oracle and final
state records to the trace.
"""
import copy
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

from . import config, lcp_model, wire, zk_ctr
from .config import ProtocolParams
from .errors import (DecryptionError, DeadlockError, IntegrityAlarm, LcpLabError,
                     ParameterError, ProtocolAbort, ScenarioError)
from .lcp_model import DISCRETE, DimensionSpec, Profile
from .network import ANONYMOUS, Actor, ChannelSpec, MixActor, Network, Trace
from .safety_index import SAFETY_DIMENSION, SafetyBuckets, user_label_from_blocks, venue_safety
from .snapshot_protocol import SnapshotAggregator, snapshot_network, snapshot_pub_stats
from .utils import load_scenario
from .venue_protocol import (PROVIDER_ID, ProviderActor, UserActor, VenueActor,
                             standard_topology)

logger = logging.getLogger(__name__)

VENUE_MODE = 'venue'
SNAPSHOT_MODE = 'snapshot'

FORGE_SHARE = 'forge_share'
REPLAY_TOKEN = 'replay_token'
WORMHOLE_RELAY = 'wormhole_relay'
SYBIL_CHECKIN = 'sybil_checkin'
DROPOUT = 'dropout'

VENUE_BEHAVIORS = zk_ctr.CHEATING_STRATEGIES + (FORGE_SHARE, REPLAY_TOKEN, WORMHOLE_RELAY,
                                                SYBIL_CHECKIN)
SNAPSHOT_BEHAVIORS = zk_ctr.CHEATING_STRATEGIES + (DROPOUT,)
ADVERSARY_BEHAVIORS = VENUE_BEHAVIORS + (DROPOUT,)

DEFAULT_START_MS = 100.0
DEFAULT_SPACING_MS = 10.0


@dataclass(frozen=True)
class AdversaryConfig:
    """A user replaced by a cheating variant."""

    actor: str
    behavior: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.behavior not in ADVERSARY_BEHAVIORS:
            raise ParameterError(f"unknown adversary behavior {self.behavior!r}")

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> 'AdversaryConfig':
        return cls(actor=values['actor'], behavior=values['behavior'],
                   params=dict(values.get('params', {})))


@dataclass(frozen=True)
class UserPlan:
    actor_id: str
    profile: Profile
    venue: str
    start_ms: float
    behavior: Optional[str] = None
    params: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class VenuePlan:
    actor_id: str
    venue_id: int


@dataclass
class ScenarioPlan:
    name: str
    mode: str
    params: ProtocolParams
    dimensions: List[DimensionSpec]
    venues: List[VenuePlan]
    users: List[UserPlan]
    channels: Dict[str, Any]


@dataclass
class ScenarioRun:
    """Everything a finished run leaves behind."""

    plan: ScenarioPlan
    seed: int
    net: Network
    provider: Optional[ProviderActor] = None
    venues: Dict[str, VenueActor] = field(default_factory=dict)
    users: Dict[str, UserActor] = field(default_factory=dict)
    relays: Dict[str, 'RelayActor'] = field(default_factory=dict)
    aggregator: Optional[SnapshotAggregator] = None
    oracle: List[Dict[str, Any]] = field(default_factory=list)
    safety: List[Dict[str, Any]] = field(default_factory=list)
    deadlock: Optional[Dict[str, Any]] = None

    @property
    def trace(self) -> Trace:
        return self.net.trace

    @property
    def oracle_ok(self) -> bool:
        return all(row['match'] for row in self.oracle if not row['cheater_accepted'])

    @property
    def passed(self) -> bool:
        return self.deadlock is None and self.oracle_ok


class RelayActor(Actor):
    """Wormhole relay placed next to a venue; forwards every frame for a remote user."""

    def __init__(self, actor_id: str, forward_ms: float = config.RELAY_FORWARD_MS):
        super().__init__(actor_id)
        self.forward_ms = forward_ms
        self.relayed = 0

    def on_frame(self, net: Network, src: str, dst: str, frame: wire.Frame):
        self.relayed += 1
        net.send(self.actor_id, dst, frame, delay=self.forward_ms, as_alias=src)

    def state_view(self) -> Dict[str, Any]:
        return {'relayed': self.relayed}


class StateRecorder:
    """Network hook tracing every change of an actor's public state."""

    def __init__(self):
        self.last: Dict[str, Dict[str, Any]] = {}

    def __call__(self, net: Network, event):
        for actor_id, actor in net.actors.items():
            view = actor.state_view()
            if self.last.get(actor_id) != view:
                self.last[actor_id] = view
                net.trace.record('state', net.clock, actor=actor_id, view=view)


# Scenario documents

def random_profile(dimensions: Sequence[DimensionSpec], rng: random.Random) -> Profile:
    """A profile whose value in every dimension falls in a uniformly chosen sub-range."""
    values = {}
    for spec in dimensions:
        j = rng.randrange(spec.b)
        if spec.kind == DISCRETE:
            group = spec.boundaries[j]
            values[spec.name] = rng.choice(group) if isinstance(group, tuple) else group
            continue
        lo, hi = spec.boundaries[j], spec.boundaries[j + 1]
        if isinstance(lo, int) and isinstance(hi, int):
            values[spec.name] = rng.randrange(lo, hi)
        else:
            values[spec.name] = lo + (hi - lo) * rng.random()
    return Profile(values=values)


def _profile(values: Mapping[str, Any]) -> Profile:
    """Profile values; a {blocks, frequencies} entry becomes the user's safety label."""
    resolved = {}
    for name, value in values.items():
        if isinstance(value, Mapping):
            value = user_label_from_blocks(value['blocks'], value.get('frequencies')).value
        resolved[name] = value
    return Profile(values=resolved)


def parse_scenario(document: Mapping[str, Any], rng: random.Random) -> ScenarioPlan:
    """Validate a scenario document; generated users draw their profiles from rng."""
    try:
        mode = document.get('mode', VENUE_MODE)
        if mode not in (VENUE_MODE, SNAPSHOT_MODE):
            raise ScenarioError(f"unknown mode {mode!r}")
        params = ProtocolParams.from_mapping(document.get('params', {}))
        dimensions = [DimensionSpec.from_mapping(d) for d in document['dimensions']]
        if not dimensions:
            raise ScenarioError("scenario declares no dimensions")
        for spec in dimensions:
            if spec.name == SAFETY_DIMENSION:
                SafetyBuckets(edges=tuple(float(e) for e in spec.boundaries))
        actors = document.get('actors', {})
        venues = [VenuePlan(actor_id=v['id'], venue_id=int(v.get('venue_id', i)))
                  for i, v in enumerate(actors.get('venues', []), start=1)]
        default_venue = venues[0].actor_id if venues else ''
        users = []
        for i, u in enumerate(actors.get('users', [])):
            users.append(UserPlan(
                actor_id=u['id'], profile=_profile(u['profile']),
                venue=u.get('venue', default_venue),
                start_ms=float(u.get('start_ms', DEFAULT_START_MS + i * DEFAULT_SPACING_MS)),
            ))
        generated = actors.get('generate_users')
        if generated:
            start = float(generated.get('start_ms', DEFAULT_START_MS))
            spacing = float(generated.get('spacing_ms', DEFAULT_SPACING_MS))
            prefix = generated.get('prefix', 'user')
            offset = len(users)
            for i in range(int(generated['count'])):
                users.append(UserPlan(
                    actor_id=f"{prefix}{offset + i + 1}",
                    profile=random_profile(dimensions, rng),
                    venue=generated.get('venue', default_venue),
                    start_ms=start + (offset + i) * spacing,
                ))
        plan = ScenarioPlan(name=document.get('name', 'scenario'), mode=mode, params=params,
                            dimensions=dimensions, venues=venues, users=users,
                            channels=dict(document.get('channels', {})))
        for entry in document.get('adversaries', []):
            _apply_adversary(plan, AdversaryConfig.from_mapping(entry))
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError, LcpLabError) as e:
        logger.error(f"Invalid scenario: {e}")
        raise ScenarioError(f"invalid scenario: {e}") from e
    _check_plan(plan)
    return plan


def _apply_adversary(plan: ScenarioPlan, adversary: AdversaryConfig):
    allowed = SNAPSHOT_BEHAVIORS if plan.mode == SNAPSHOT_MODE else VENUE_BEHAVIORS
    if adversary.behavior not in allowed:
        raise ScenarioError(f"{adversary.behavior} is not available in {plan.mode} mode")
    for i, user in enumerate(plan.users):
        if user.actor_id == adversary.actor:
            plan.users[i] = UserPlan(actor_id=user.actor_id, profile=user.profile,
                                     venue=user.venue, start_ms=user.start_ms,
                                     behavior=adversary.behavior, params=adversary.params)
            return
    raise ScenarioError(f"adversary {adversary.actor!r} is not a user of the scenario")


def _check_plan(plan: ScenarioPlan):
    ids = [v.actor_id for v in plan.venues] + [u.actor_id for u in plan.users]
    if len(ids) != len(set(ids)):
        raise ScenarioError("actor ids must be unique")
    if plan.mode == VENUE_MODE:
        if not plan.venues:
            raise ScenarioError("venue mode needs at least one venue")
        known = {v.actor_id for v in plan.venues}
        for user in plan.users:
            if user.venue not in known:
                raise ScenarioError(f"{user.actor_id} targets unknown venue {user.venue!r}")
    elif not plan.users:
        raise ScenarioError("snapshot mode needs at least one user")
    elif len(plan.dimensions) != 1:
        raise ScenarioError("snapshot mode aggregates exactly one dimension")


def inject_adversary(scenario: Mapping[str, Any],
                     adversary: Union[AdversaryConfig, Mapping[str, Any]]) -> Dict[str, Any]:
    """Return a copy of the scenario with one user replaced by a cheating variant.

    If the named actor is not a user yet, it is added with the profile and venue
    given in the adversary parameters (defaulting to the first user's).
    """
    if not isinstance(adversary, AdversaryConfig):
        adversary = AdversaryConfig.from_mapping(adversary)
    document = copy.deepcopy(dict(scenario))
    actors = document.setdefault('actors', {})
    users = actors.setdefault('users', [])
    if not any(u.get('id') == adversary.actor for u in users):
        template = users[0] if users else {}
        venues = actors.get('venues', [])
        new_user = {
            'id': adversary.actor,
            'profile': dict(adversary.params.get('profile', template.get('profile', {}))),
            'venue': adversary.params.get('venue', template.get(
                'venue', venues[0]['id'] if venues else '')),
        }
        if 'start_ms' in adversary.params:
            new_user['start_ms'] = adversary.params['start_ms']
        users.append(new_user)
    entries = [a for a in document.get('adversaries', []) if a.get('actor') != adversary.actor]
    entries.append({'actor': adversary.actor, 'behavior': adversary.behavior,
                    'params': dict(adversary.params)})
    document['adversaries'] = entries
    return document


# Execution

def execute_scenario(scenario: Union[Mapping[str, Any], str, Path], seed: int,
                     strict: bool = False) -> ScenarioRun:
    """Run a scenario to quiescence and return the actors together with the trace.

    Parameters:
    -----------
    scenario : mapping or path
        Parsed scenario document, or a JSON file (absolute or under data/scenarios)
    seed : int
        Seeds every random choice of the run
    strict : bool
        Raise DeadlockError instead of only recording the diagnostic
    """
    document = scenario if isinstance(scenario, Mapping) else load_scenario(Path(scenario))
    master = random.Random(seed)
    plan = parse_scenario(document, random.Random(master.getrandbits(64)))
    net = Network(random.Random(master.getrandbits(64)))
    net.trace.record('scenario', 0.0, name=plan.name, mode=plan.mode, seed=seed,
                     k=plan.params.k, s=plan.params.s, modulus_bits=plan.params.modulus_bits,
                     users=len(plan.users))
    run = ScenarioRun(plan=plan, seed=seed, net=net)
    logger.info(f"Running scenario {plan.name!r} ({plan.mode}, seed {seed})")
    if plan.mode == SNAPSHOT_MODE:
        _run_snapshot(run, master)
    else:
        _run_venues(run, master)
    _record_safety(run)
    net.trace.record('final', net.clock,
                     states={actor_id: actor.state_view()
                             for actor_id, actor in sorted(net.actors.items())},
                     oracle_ok=run.oracle_ok)
    if run.deadlock is not None and strict:
        raise DeadlockError(f"scenario {plan.name!r} stalled: {run.deadlock['pending']}")
    return run


def run_scenario(scenario: Union[Mapping[str, Any], str, Path], seed: int) -> Trace:
    """Deterministic trace of a scenario: identical bytes for an identical seed."""
    return execute_scenario(scenario, seed).trace


def _sub_rng(master: random.Random) -> random.Random:
    return random.Random(master.getrandbits(64))


def _run_venues(run: ScenarioRun, master: random.Random):
    plan, net = run.plan, run.net
    channels = plan.channels
    local_ms = float(channels.get('local_ms', config.LOCAL_ONE_WAY_MS))
    wired_ms = float(channels.get('wired_ms', config.WIRED_ONE_WAY_MS))

    provider = net.add(ProviderActor(plan.params, _sub_rng(master)))
    net.add(MixActor(_sub_rng(master), float(channels.get('mix_window_ms',
                                                            config.MIX_WINDOW_MS))))
    run.provider = provider
    for venue in plan.venues:
        run.venues[venue.actor_id] = net.add(VenueActor(
            venue.actor_id, venue.venue_id, plan.dimensions, plan.params, provider.public_key,
            _sub_rng(master)))
    for user in plan.users:
        relay = f"relay-{user.actor_id}" if user.behavior == WORMHOLE_RELAY else None
        behavior = None if user.behavior == WORMHOLE_RELAY else user.behavior
        attempts = int(user.params.get('attempts', 2)) if user.behavior == SYBIL_CHECKIN else 1
        run.users[user.actor_id] = net.add(UserActor(
            user.actor_id, user.profile, plan.dimensions, plan.params, provider.public_key,
            _sub_rng(master), behavior=behavior, relay=relay, attempts=attempts))

    standard_topology(net, PROVIDER_ID, list(run.venues), list(run.users), local_ms, wired_ms)
    for link in channels.get('links', []):
        net.connect(link['a'], link['b'], ChannelSpec.from_mapping(link))
    for a, b in channels.get('disconnect', []):
        net.channels.pop((a, b), None)
        net.channels.pop((b, a), None)
    for user in plan.users:
        if user.behavior == WORMHOLE_RELAY:
            _place_relay(run, user, local_ms, wired_ms)

    net.state_hooks.append(StateRecorder())
    for venue in run.venues.values():
        venue.request_setup(net)
    for user in plan.users:
        net.timer(user.actor_id, user.start_ms,
                  wire.frame(wire.Tag.TIMER, [wire.text(user.venue)]))
    net.run()

    _close_cycles(run)
    run.oracle = venue_histogram_oracle(run)
    for row in run.oracle:
        net.trace.record('oracle', net.clock, **row)
    pending = [u for u, actor in run.users.items() if actor.started and not actor.finished]
    pending += [v for v, actor in run.venues.items()
                if actor.current is not None or actor.waiting or actor.deferred]
    if pending:
        _record_deadlock(run, pending)


def _place_relay(run: ScenarioRun, user: UserPlan, local_ms: float, wired_ms: float):
    """The user is remote: it reaches its venue only through a relay next to the venue."""
    net = run.net
    relay = net.add(RelayActor(f"relay-{user.actor_id}",
                               float(user.params.get('forward_ms', config.RELAY_FORWARD_MS))))
    run.relays[relay.actor_id] = relay
    net.channels.pop((user.actor_id, user.venue), None)
    net.channels.pop((user.venue, user.actor_id), None)
    remote_ms = float(user.params.get('wired_ms', wired_ms))
    net.connect(user.actor_id, relay.actor_id, ChannelSpec(ANONYMOUS, remote_ms))
    net.connect(relay.actor_id, user.venue, ChannelSpec(ANONYMOUS, local_ms))
    logger.info(f"{user.actor_id} relays through {relay.actor_id} ({remote_ms} ms one way)")


def _record_safety(run: ScenarioRun):
    """Score every published safety histogram with the dimension's buckets."""
    spec = next((d for d in run.plan.dimensions if d.name == SAFETY_DIMENSION), None)
    if spec is None:
        return
    buckets = SafetyBuckets(edges=tuple(float(e) for e in spec.boundaries))
    for record in run.trace.of_kind('publish'):
        counts = record['tally'][SAFETY_DIMENSION]
        if not sum(counts):
            continue
        row = {'venue': record['venue'], 'cycle': record['cycle'],
               'score': venue_safety(counts, buckets)}
        run.safety.append(row)
        run.net.trace.record('safety', run.net.clock, **row)


def _close_cycles(run: ScenarioRun):
    """Attempt PubStats on every cycle left open when the run goes quiet."""
    for venue in run.venues.values():
        if venue.state.pk is None or venue.state.checkins == 0:
            continue
        try:
            venue.publish(run.net)
        except (ProtocolAbort, IntegrityAlarm, DecryptionError) as e:
            logger.info(f"{venue.actor_id}: open cycle {venue.state.cycle} not published: {e}")


def _record_deadlock(run: ScenarioRun, pending: List[str]):
    net = run.net
    run.deadlock = {
        'pending': pending,
        'states': {a: net.actors[a].state_view() for a in pending},
        'queued_events': net.pending(),
    }
    net.trace.record('deadlock', net.clock, **run.deadlock)
    logger.warning(f"Scenario {run.plan.name!r} stalled with pending actors {pending}")


def venue_histogram_oracle(run: ScenarioRun) -> List[Dict[str, Any]]:
    """Compare every published tally with the plaintext histogram of accepted check-ins."""
    owners = run.net.aliases
    cheaters = {u.actor_id for u in run.plan.users if u.behavior in zk_ctr.CHEATING_STRATEGIES}
    accepted: Dict[tuple, List[str]] = {}
    for record in run.trace.of_kind('checkin'):
        if record['accepted']:
            key = (record['venue'], record['cycle'])
            accepted.setdefault(key, []).append(owners.get(record['alias'], record['alias']))
    rows = []
    for record in run.trace.of_kind('publish'):
        members = accepted.get((record['venue'], record['cycle']), [])
        for spec in run.plan.dimensions:
            indices = [lcp_model.classify(run.users[m].profile.value(spec.name), spec)
                       for m in members]
            expected = lcp_model.plaintext_histogram(indices, spec.b)
            published = list(record['tally'][spec.name])
            rows.append({'venue': record['venue'], 'cycle': record['cycle'],
                         'dimension': spec.name, 'published': published,
                         'expected': expected, 'match': published == expected,
                         'cheater_accepted': any(m in cheaters for m in members)})
    return rows


def _run_snapshot(run: ScenarioRun, master: random.Random):
    plan, net = run.plan, run.net
    dimension = plan.dimensions[0]
    values = [u.profile.value(dimension.name) for u in plan.users]
    behaviors = {i: u.behavior for i, u in enumerate(plan.users, start=1) if u.behavior}
    local_ms = float(plan.channels.get('local_ms', config.LOCAL_ONE_WAY_MS))
    _, aggregator, participants = snapshot_network(
        values, dimension, plan.params, _sub_rng(master), behaviors, latency_ms=local_ms,
        net=net, ids=[u.actor_id for u in plan.users])
    run.aggregator = aggregator
    net.state_hooks.append(StateRecorder())
    aggregator.start(net, [p.actor_id for p in participants])
    net.run()

    if aggregator.error is not None:
        net.trace.record('snapshot_abort', net.clock, reason=str(aggregator.error))
        return
    state = aggregator.state
    if not state.complete:
        _record_deadlock(run, [p.actor_id for p in participants
                               if p.actor_id not in state.contributions
                               and p.actor_id not in state.flagged])
        return
    try:
        counts = snapshot_pub_stats(state)
    except (DecryptionError, ProtocolAbort) as e:
        net.trace.record('pubstats_abort', net.clock, venue=aggregator.actor_id, cycle=1,
                         reason=type(e).__name__, flagged=list(state.flagged))
        return
    net.trace.record('publish', net.clock, venue=aggregator.actor_id, cycle=1,
                     tally={dimension.name: counts})
    by_id = {u.actor_id: u for u in plan.users}
    expected = lcp_model.plaintext_histogram(
        [lcp_model.classify(by_id[p].profile.value(dimension.name), dimension)
         for p in state.contributions], dimension.b)
    row = {'venue': aggregator.actor_id, 'cycle': 1, 'dimension': dimension.name,
           'published': counts, 'expected': expected, 'match': counts == expected,
           'cheater_accepted': any(by_id[p].behavior for p in state.contributions)}
    run.oracle = [row]
    net.trace.record('oracle', net.clock, **row)


def save_trace(trace: Trace, name: str, seed: int) -> Path:
    """Write a trace as line-delimited JSON under output/traces."""
    config.TRACES_DIR.mkdir(parents=True, exist_ok=True)
    path = config.TRACES_DIR / f"{name}_seed{seed}.jsonl"
    path.write_bytes(trace.to_bytes())
    logger.info(f"Trace written to: {path}")
    return path

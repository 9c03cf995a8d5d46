import json
import random

import pytest

from lcplab import wire
from lcplab.errors import ParameterError
from lcplab.network import ANONYMOUS, DIRECT, MIX_ID, Actor, ChannelSpec, MixActor, Network, \
    envelope


class Recorder(Actor):
    def __init__(self, actor_id):
        super().__init__(actor_id)
        self.received = []

    def on_frame(self, net, src, dst, frame):
        self.received.append((net.clock, src, frame.integer(0)))


def ping(i):
    return wire.frame(wire.Tag.CHALLENGE, [wire.integer(i)])


@pytest.fixture
def net():
    return Network(random.Random(1))


def test_links_deliver_in_order_with_latency(net):
    net.add(Recorder('a'))
    b = net.add(Recorder('b'))
    net.connect('a', 'b', ChannelSpec(DIRECT, 2.0))
    net.send('a', 'b', ping(1), delay=3.0)
    net.send('a', 'b', ping(2))
    net.run()
    # FIFO: the second frame may not overtake the first
    assert [(t, i) for t, _, i in b.received] == [(5.0, 1), (5.0, 2)]


def test_jittered_link_stays_fifo(net):
    net.add(Recorder('a'))
    b = net.add(Recorder('b'))
    net.connect('a', 'b', ChannelSpec.from_mapping({'latency_ms': [1.0, 9.0]}))
    for i in range(30):
        net.send('a', 'b', ping(i))
    net.run()
    assert [i for _, _, i in b.received] == list(range(30))
    assert all(1.0 <= t <= 9.0 for t, _, _ in b.received)


def test_anonymous_channel_shows_only_alias(net):
    net.add(Recorder('alice'))
    venue = net.add(Recorder('venue'))
    net.connect('alice', 'venue', ChannelSpec(ANONYMOUS, 1.5))
    net.register_alias('anon-1', 'alice')
    net.send('alice', 'venue', ping(0), as_alias='anon-1')
    net.run()
    assert venue.received[0][1] == 'anon-1'


def test_replies_to_alias_reach_the_owner(net):
    alice = net.add(Recorder('alice'))
    net.add(Recorder('venue'))
    net.connect('alice', 'venue', ChannelSpec(ANONYMOUS, 1.5))
    net.register_alias('anon-1', 'alice')
    net.send('venue', 'anon-1', ping(4))
    net.run()
    assert alice.received[0][2] == 4


def test_missing_channel_is_traced(net):
    net.add(Recorder('a'))
    net.send('a', 'b', ping(0))
    assert net.trace.of_kind('dropped')[0]['reason'] == 'no channel'


def test_mix_batches_and_strips_sender():
    net = Network(random.Random(2))
    net.add(MixActor(random.Random(3), window_ms=5.0))
    provider = net.add(Recorder('provider'))
    senders = [f"u{i}" for i in range(6)]
    for s in senders:
        net.add(Recorder(s))
        net.connect(s, MIX_ID, ChannelSpec(ANONYMOUS, 1.0))
    net.connect(MIX_ID, 'provider', ChannelSpec(ANONYMOUS, 1.0))
    for i, s in enumerate(senders):
        net.send(s, MIX_ID, envelope('provider', f"anon-{i}", ping(i)), as_alias=f"anon-{i}")
    net.run()
    assert len(provider.received) == 6
    assert {src for _, src, _ in provider.received} == {f"anon-{i}" for i in range(6)}
    # one flush after the window
    assert {t for t, _, _ in provider.received} == {7.0}
    assert net.trace.of_kind('mix_flush')[0]['size'] == 6


def test_trace_is_json_lines(net):
    net.trace.record('setup', 1.25, venue='cafe')
    line = net.trace.to_lines().strip()
    assert json.loads(line) == {'t': 1.25, 'kind': 'setup', 'venue': 'cafe'}


def test_channel_spec_validation():
    with pytest.raises(ParameterError):
        ChannelSpec('carrier-pigeon', 1.0)
    with pytest.raises(ParameterError):
        ChannelSpec(DIRECT, -1.0)


def test_same_seed_same_delivery_times():
    def run(seed):
        net = Network(random.Random(seed))
        net.add(Recorder('a'))
        b = net.add(Recorder('b'))
        net.connect('a', 'b', ChannelSpec(DIRECT, 1.0, jitter_ms=3.0))
        for i in range(10):
            net.send('a', 'b', ping(i))
        net.run()
        return b.received
    assert run(5) == run(5)

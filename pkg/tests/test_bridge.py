"""Bridge tests: crossing, echo suppression, isolation, channel outages."""
from collections import Counter

import pytest

from romano.bridge import Bridge, BridgeEnd, DEFAULT_DOWN_QUEUE_LIMIT
from romano.broker import Broker
from romano.session import ACTIVE, ClientSession
from romano.simnet import LinkModel, Network, Simulator

BROKER_A = "fe80::212:4b00:1:1"
RELAY_A = "fe80::212:4b00:1:4"
CLIENT_A = "fe80::212:4b00:10:1"
BROKER_B = "fe80::212:4b00:2:1"
RELAY_B = "fe80::212:4b00:2:4"
CLIENT_B = "fe80::212:4b00:20:1"

TOPIC = "squad-remote"


class BridgeRig:
    """Two broker networks, one listener client each, bridged on TOPIC."""

    def __init__(self, topics=(TOPIC,), latency_us=50_000):
        self.sim = Simulator(seed=0)
        self.net = Network(self.sim, default_link=None)
        self.broker_a = Broker(self.sim, self.net, BROKER_A,
                               local_clients={RELAY_A})
        self.broker_b = Broker(self.sim, self.net, BROKER_B,
                               local_clients={RELAY_B})
        self.net.set_link_pair(RELAY_A, BROKER_A, LinkModel.fixed(0))
        self.net.set_link_pair(RELAY_B, BROKER_B, LinkModel.fixed(0))
        self.net.set_link_pair(CLIENT_A, BROKER_A, LinkModel.fixed(5_000))
        self.net.set_link_pair(CLIENT_B, BROKER_B, LinkModel.fixed(5_000))
        self.end_a = BridgeEnd(
            self.sim, ClientSession(self.sim, self.net, RELAY_A, BROKER_A),
            self.broker_a, 0, tuple(topics))
        self.end_b = BridgeEnd(
            self.sim, ClientSession(self.sim, self.net, RELAY_B, BROKER_B),
            self.broker_b, 1, tuple(topics))
        self.bridge = Bridge(self.end_a, self.end_b, latency_us)
        self._bridge_ready = False

        def mark_ready() -> None:
            self._bridge_ready = True

        self.bridge.start(mark_ready)
        self.client_a = ClientSession(self.sim, self.net, CLIENT_A, BROKER_A)
        self.client_b = ClientSession(self.sim, self.net, CLIENT_B, BROKER_B)
        self.inbox_a: list[tuple[str, bytes]] = []
        self.inbox_b: list[tuple[str, bytes]] = []
        self.client_a.on_message = lambda t, d: self.inbox_a.append((t, d))
        self.client_b.on_message = lambda t, d: self.inbox_b.append((t, d))
        self.client_a.connect(on_ok=lambda: self.client_a.subscribe(TOPIC))
        self.client_b.connect(on_ok=lambda: self.client_b.subscribe(TOPIC))
        assert self.sim.run_until_true(lambda: self.ready(), 5_000_000)

    def ready(self) -> bool:
        return (self._bridge_ready
                and CLIENT_A in self.broker_a.subscribers(TOPIC)
                and CLIENT_B in self.broker_b.subscribers(TOPIC))

    def settle(self, span_us: int = 500_000) -> None:
        self.sim.run_until(self.sim.now + span_us)

    def on_topic(self, inbox):
        return [data for topic, data in inbox if topic == TOPIC]


class TestCrossing:
    def test_publish_crosses_exactly_once(self):
        rig = BridgeRig()
        rig.client_a.publish(TOPIC, b"advance")
        rig.settle()
        assert rig.on_topic(rig.inbox_b) == [b"advance"]
        assert rig.on_topic(rig.inbox_a) == [b"advance"]  # local fan-out
        assert rig.end_a.forwarded == 1
        assert rig.end_b.republished == 1
        assert rig.end_b.crossings == [(0, TOPIC, b"advance")]
        # the republication must not bounce back into the channel
        assert rig.end_b.forwarded == 0
        assert rig.end_a.republished == 0

    def test_reply_direction(self):
        rig = BridgeRig()
        rig.client_b.publish(TOPIC, b"ack")
        rig.settle()
        assert rig.on_topic(rig.inbox_a) == [b"ack"]
        assert rig.end_b.forwarded == 1
        assert rig.end_a.crossings == [(1, TOPIC, b"ack")]
        assert rig.end_a.forwarded == 0

    def test_channel_latency_is_applied(self):
        rig = BridgeRig(latency_us=50_000)
        sent_at = rig.sim.now
        rig.client_a.publish(TOPIC, b"x")
        assert rig.sim.run_until_true(
            lambda: rig.on_topic(rig.inbox_b) == [b"x"],
            sent_at + 1_000_000)
        # client->broker(5) + channel(50) + broker->client(5), plus slack
        assert rig.sim.now - sent_at >= 60_000

    def test_other_topics_stay_local(self):
        rig = BridgeRig()
        done = []
        rig.client_b.subscribe("local-only", on_ok=lambda: done.append(1))
        rig.settle()
        assert done
        rig.client_a.publish("local-only", b"secret")
        rig.settle()
        assert rig.inbox_b == []
        assert rig.end_a.forwarded == 0

    def test_soak_interleaved_no_duplicates(self):
        rig = BridgeRig()
        for i in range(40):
            rig.client_a.publish(TOPIC, "a-{:02d}".format(i).encode())
            rig.client_b.publish(TOPIC, "b-{:02d}".format(i).encode())
        rig.settle(5_000_000)
        want = Counter(["a-{:02d}".format(i).encode() for i in range(40)]
                       + ["b-{:02d}".format(i).encode() for i in range(40)])
        assert Counter(rig.on_topic(rig.inbox_a)) == want
        assert Counter(rig.on_topic(rig.inbox_b)) == want
        assert rig.end_a.forwarded == 40
        assert rig.end_b.forwarded == 40


class TestOutage:
    def test_down_channel_queues_then_flushes_in_order(self):
        rig = BridgeRig()
        rig.end_a.set_channel_up(False)
        for i in range(3):
            rig.client_a.publish(TOPIC, "m-{}".format(i).encode())
        rig.settle()
        assert rig.on_topic(rig.inbox_b) == []
        assert rig.end_a.forwarded == 0
        assert rig.end_a.dropped_while_down == 0
        rig.end_a.set_channel_up(True)
        rig.settle()
        assert rig.on_topic(rig.inbox_b) == [b"m-0", b"m-1", b"m-2"]
        assert rig.end_a.forwarded == 3

    def test_down_queue_drops_oldest_beyond_cap(self):
        rig = BridgeRig()
        rig.end_a.set_channel_up(False)
        extra = 8
        for i in range(DEFAULT_DOWN_QUEUE_LIMIT + extra):
            rig.client_a.publish(TOPIC, "q-{:03d}".format(i).encode())
        rig.settle(10_000_000)
        assert rig.end_a.dropped_while_down == extra
        rig.end_a.set_channel_up(True)
        rig.settle(10_000_000)
        got = rig.on_topic(rig.inbox_b)
        assert len(got) == DEFAULT_DOWN_QUEUE_LIMIT
        assert got[0] == "q-{:03d}".format(extra).encode()
        assert got[-1] == "q-{:03d}".format(DEFAULT_DOWN_QUEUE_LIMIT
                                            + extra - 1).encode()

    def test_traffic_resumes_after_outage(self):
        rig = BridgeRig()
        rig.end_a.set_channel_up(False)
        rig.end_a.set_channel_up(True)
        rig.client_a.publish(TOPIC, b"fresh")
        rig.settle()
        assert rig.on_topic(rig.inbox_b) == [b"fresh"]

"""Topic bridge between two broker networks.

Each end of the bridge is an ordinary client collocated with its broker.
It subscribes to an allow-list of bridged topics (exact names; the
broker has no wildcard matching) and forwards every matching delivery
to the far end over a reliable, ordered channel (a TCP-like pipe,
modeled as a lossless FIFO link with fixed latency).  The far end
republishes into its own network under the same topic.

Relay frames carry a one-octet origin tag ahead of the MQTT-SN data so
each side knows which network a payload entered first; the tag never
reaches subscribers.  Echo back into the bridge is cut at the broker:
relay sessions subscribe with the no-local option, so a relay is never
fanned its own republication and a message can cross at most once.
"""

from __future__ import annotations

from collections import deque
from typing import Optional

from .broker import Broker
from .session import ClientSession
from .simnet import Simulator

DEFAULT_CHANNEL_LATENCY_US = 50_000
DEFAULT_DOWN_QUEUE_LIMIT = 512


class BridgeEnd:
    """One side of the bridge; see :class:`Bridge` for pairing."""

    def __init__(self, sim: Simulator, session: ClientSession, broker: Broker,
                 origin_tag: int, topics: tuple[str, ...],
                 latency_us: int = DEFAULT_CHANNEL_LATENCY_US) -> None:
        self.sim = sim
        self.session = session
        self.broker = broker
        self.origin_tag = origin_tag
        self.topics = topics
        self.latency_us = latency_us
        self.peer: Optional["BridgeEnd"] = None
        self.forwarded = 0
        self.republished = 0
        self.dropped_while_down = 0
        self.crossings: list[tuple[int, str, bytes]] = []  # origin, topic, data
        self._down_queue: deque = deque()
        self.channel_up = True
        session.on_message = self._on_local_delivery

    def start(self, on_ready=None) -> None:
        remaining = len(self.topics) + 1

        def step_done() -> None:
            nonlocal remaining
            remaining -= 1
            if remaining == 0 and on_ready is not None:
                on_ready()

        def subscribed() -> None:
            self.broker.set_no_local(self.session.client_id)
            for topic in self.topics:
                self.session.subscribe(topic, on_ok=step_done)
            step_done()

        self.session.connect(on_ok=subscribed)

    # -- local network -> channel ------------------------------------------------

    def _on_local_delivery(self, topic: str, data: bytes) -> None:
        if topic not in self.topics:
            return
        frame = (self.origin_tag, topic, data)
        if not self.channel_up:
            if len(self._down_queue) >= DEFAULT_DOWN_QUEUE_LIMIT:
                self._down_queue.popleft()
                self.dropped_while_down += 1
            self._down_queue.append(frame)
            return
        self._forward(frame)

    def _forward(self, frame: tuple[int, str, bytes]) -> None:
        self.forwarded += 1
        self.sim.after(self.latency_us, lambda: self.peer._on_channel(frame))

    # -- channel -> local network ---------------------------------------------------

    def _on_channel(self, frame: tuple[int, str, bytes]) -> None:
        origin, topic, data = frame
        self.crossings.append((origin, topic, data))
        self.republished += 1
        self.session.publish(topic, data)

    # -- outages -------------------------------------------------------------------

    def set_channel_up(self, up: bool) -> None:
        self.channel_up = up
        while up and self._down_queue:
            self._forward(self._down_queue.popleft())


class Bridge:
    """Pairs two ends and wires the relay channel between them."""

    def __init__(self, end_a: BridgeEnd, end_b: BridgeEnd,
                 latency_us: int = DEFAULT_CHANNEL_LATENCY_US) -> None:
        self.end_a = end_a
        self.end_b = end_b
        end_a.peer = end_b
        end_b.peer = end_a
        end_a.latency_us = latency_us
        end_b.latency_us = latency_us

    def start(self, on_ready=None) -> None:
        remaining = 2

        def one_done() -> None:
            nonlocal remaining
            remaining -= 1
            if remaining == 0 and on_ready is not None:
                on_ready()

        self.end_a.start(one_done)
        self.end_b.start(one_done)

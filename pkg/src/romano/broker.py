"""MQTT-SN broker with a finite egress radio.

The broker owns the topic registry (name to 16-bit id), per-topic
subscriber lists kept in subscription order, and the egress path toward
radio-attached clients.  Publishing fans out as sequential unicasts:
the i-th subscriber's copy is dispatched exactly (i-1) *
``dispatch_interval_us`` after the publish arrives, which is what a
subscriber observes as its per-position delivery offset.

Every packet bound for a radio client then passes a pacing gate that
models the border router's transmitter: a bounded FIFO with a minimum
spacing between departures.  The gate adds no latency while idle; under
sustained overload it fills and tail-drops at enqueue, which is the
radio-buffer-overflow failure mode seen at high publish rates.  Clients
listed as local (collocated server-side processes) bypass the gate.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional

from . import mqttsn as sn
from .simnet import Network, NoLink, Simulator

DEFAULT_DISPATCH_INTERVAL_US = 8_000
DEFAULT_RADIO_TX_INTERVAL_US = 750
DEFAULT_RADIO_BUFFER_CAPACITY = 1_400


class RadioGate:
    """Bounded FIFO in front of a paced transmitter.

    ``offer`` either queues the item or tail-drops it when the buffer
    is full.  Departures keep at least ``tx_interval_us`` between them;
    an item offered to an idle gate departs immediately.
    """

    def __init__(self, sim: Simulator, capacity: int, tx_interval_us: int,
                 on_transmit) -> None:
        self.sim = sim
        self.capacity = capacity
        self.tx_interval_us = tx_interval_us
        self.on_transmit = on_transmit
        self.transmitted = 0
        self.dropped = 0
        self.stalled = False  # test hook: a stalled gate never departs
        self._buf: deque = deque()
        self._next_free_us = 0
        self._pending = False

    def __len__(self) -> int:
        return len(self._buf)

    def offer(self, item) -> bool:
        if len(self._buf) >= self.capacity:
            self.dropped += 1
            return False
        self._buf.append(item)
        self._pump()
        return True

    def resume(self) -> None:
        self.stalled = False
        self._pump()

    def _pump(self) -> None:
        if self._pending or self.stalled or not self._buf:
            return
        self._pending = True
        self.sim.at(max(self.sim.now, self._next_free_us), self._depart)

    def _depart(self) -> None:
        self._pending = False
        if self.stalled or not self._buf:
            return
        item = self._buf.popleft()
        self._next_free_us = self.sim.now + self.tx_interval_us
        self.transmitted += 1
        self.on_transmit(item)
        self._pump()


@dataclass
class _Topic:
    topic_id: int
    name: str
    subscribers: list[str] = field(default_factory=list)
    published: int = 0
    copies_enqueued: int = 0
    copies_dropped: int = 0


@dataclass
class _Session:
    client_id: str
    no_local: bool = False
    subscriptions: list[int] = field(default_factory=list)


class Broker:
    def __init__(self, sim: Simulator, network: Network, addr: str, *,
                 dispatch_interval_us: int = DEFAULT_DISPATCH_INTERVAL_US,
                 radio_tx_interval_us: int = DEFAULT_RADIO_TX_INTERVAL_US,
                 radio_buffer_capacity: int = DEFAULT_RADIO_BUFFER_CAPACITY,
                 local_clients: Iterable[str] = ()) -> None:
        self.sim = sim
        self.network = network
        self.addr = addr
        self.dispatch_interval_us = dispatch_interval_us
        self.local_clients = set(local_clients)
        self.sessions: dict[str, _Session] = {}
        self.gate = RadioGate(sim, radio_buffer_capacity,
                              radio_tx_interval_us, self._transmit)
        self.started = True
        self.bad_packets = 0
        self.unroutable = 0
        self.first_overflow: Optional[dict] = None
        self._topics: dict[int, _Topic] = {}
        self._topic_ids: dict[str, int] = {}
        self._next_topic_id = 1
        network.attach(addr, self._on_datagram)

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        self.started = True

    def stop(self) -> None:
        """A stopped broker ignores all traffic (host down or restarting)."""
        self.started = False

    # -- introspection -------------------------------------------------------

    def topic_id(self, name: str) -> Optional[int]:
        return self._topic_ids.get(name)

    def topic_name(self, topic_id: int) -> Optional[str]:
        topic = self._topics.get(topic_id)
        return topic.name if topic else None

    def subscribers(self, name: str) -> list[str]:
        tid = self._topic_ids.get(name)
        return list(self._topics[tid].subscribers) if tid else []

    def topic_stats(self, name: str) -> tuple[int, int, int]:
        """(published, copies enqueued, copies dropped) for a topic."""
        tid = self._topic_ids.get(name)
        if tid is None:
            return (0, 0, 0)
        t = self._topics[tid]
        return (t.published, t.copies_enqueued, t.copies_dropped)

    def set_no_local(self, client_id: str, value: bool = True) -> None:
        """Suppress fan-out back to this client's own publishes.

        Used by bridge relay sessions so a republished message is never
        echoed into the relay that injected it.
        """
        self._session(client_id).no_local = value

    # -- packet handling -----------------------------------------------------

    def _on_datagram(self, src: str, data: bytes) -> None:
        if not self.started:
            return
        try:
            pkt = sn.decode_packet(data)
        except sn.PacketError:
            self.bad_packets += 1
            return
        self.handle(src, pkt)

    def handle(self, src: str, pkt: sn.SnPacket) -> None:
        if isinstance(pkt, sn.Connect):
            self._on_connect(src, pkt)
        elif isinstance(pkt, sn.Register):
            self._on_register(src, pkt)
        elif isinstance(pkt, sn.Subscribe):
            self._on_subscribe(src, pkt)
        elif isinstance(pkt, sn.Unsubscribe):
            self._on_unsubscribe(src, pkt)
        elif isinstance(pkt, sn.Publish):
            self._on_publish(src, pkt)
        elif isinstance(pkt, sn.Puback):
            pass  # subscriber-side acks are not tracked at QoS 0/1 fan-out
        else:
            self.bad_packets += 1

    def _on_connect(self, src: str, pkt: sn.Connect) -> None:
        session = self.sessions.get(pkt.client_id)
        if session is not None and pkt.clean_session:
            for tid in session.subscriptions:
                subs = self._topics[tid].subscribers
                if pkt.client_id in subs:
                    subs.remove(pkt.client_id)
            session.subscriptions.clear()
        elif session is None:
            self.sessions[pkt.client_id] = _Session(pkt.client_id)
        self._reply(src, sn.Connack(sn.ReturnCode.ACCEPTED))

    def _on_register(self, src: str, pkt: sn.Register) -> None:
        tid = self._intern_topic(pkt.topic_name)
        self._reply(src, sn.Regack(tid, pkt.msg_id))

    def _on_subscribe(self, src: str, pkt: sn.Subscribe) -> None:
        if src not in self.sessions:
            self._reply(src, sn.Suback(0, pkt.msg_id,
                                       sn.ReturnCode.REJECTED_NOT_SUPPORTED))
            return
        tid = self._intern_topic(pkt.topic_name)
        topic = self._topics[tid]
        session = self._session(src)
        if src not in topic.subscribers:
            topic.subscribers.append(src)
            session.subscriptions.append(tid)
        self._reply(src, sn.Suback(tid, pkt.msg_id, qos=pkt.qos))

    def _on_unsubscribe(self, src: str, pkt: sn.Unsubscribe) -> None:
        tid = self._topic_ids.get(pkt.topic_name)
        if tid is not None:
            topic = self._topics[tid]
            if src in topic.subscribers:
                topic.subscribers.remove(src)
            session = self.sessions.get(src)
            if session and tid in session.subscriptions:
                session.subscriptions.remove(tid)
        self._reply(src, sn.Unsuback(pkt.msg_id))

    def _on_publish(self, src: str, pkt: sn.Publish) -> None:
        topic = self._topics.get(pkt.topic_id)
        if topic is None:
            if pkt.qos > 0:
                self._reply(src, sn.Puback(
                    pkt.topic_id, pkt.msg_id,
                    sn.ReturnCode.REJECTED_INVALID_TOPIC_ID))
            self.bad_packets += 1
            return
        if pkt.qos > 0:
            self._reply(src, sn.Puback(pkt.topic_id, pkt.msg_id))
        topic.published += 1
        copy = sn.Publish(pkt.topic_id, pkt.data)  # fan-out copies are QoS 0
        raw = sn.encode_packet(copy)
        position = 0
        for client_id in topic.subscribers:
            session = self.sessions.get(client_id)
            if session is not None and session.no_local and client_id == src:
                continue
            offset = position * self.dispatch_interval_us
            position += 1
            if offset == 0:
                self._dispatch(client_id, raw, topic)
            else:
                self.sim.after(offset, lambda c=client_id: self._dispatch(
                    c, raw, topic))

    # -- egress ---------------------------------------------------------------

    def _reply(self, dest: str, pkt: sn.SnPacket, topic_name: str = "") -> None:
        self._egress(dest, sn.encode_packet(pkt), topic_name or None)

    def _dispatch(self, dest: str, raw: bytes, topic: _Topic) -> None:
        if dest in self.local_clients:
            topic.copies_enqueued += 1
            self._send(dest, raw, topic.name)
        elif self.gate.offer((dest, raw, topic.name)):
            topic.copies_enqueued += 1
        else:
            topic.copies_dropped += 1
            if self.first_overflow is None:
                self.first_overflow = {
                    "time_us": self.sim.now,
                    "topic": topic.name,
                    "published_so_far": topic.published,
                }
            self.network.trace.record(self.sim.now, self.addr, dest,
                                      "drop-buffer", len(raw), topic.name)

    def _egress(self, dest: str, raw: bytes, topic: Optional[str]) -> None:
        if dest in self.local_clients:
            self._send(dest, raw, topic)
        elif not self.gate.offer((dest, raw, topic)):
            self.network.trace.record(self.sim.now, self.addr, dest,
                                      "drop-buffer", len(raw), topic)

    def _transmit(self, item: tuple) -> None:
        dest, raw, topic = item
        self._send(dest, raw, topic)

    def _send(self, dest: str, raw: bytes, topic: Optional[str]) -> None:
        try:
            self.network.send(self.addr, dest, raw, topic=topic)
        except NoLink:
            self.unroutable += 1

    # -- internals -------------------------------------------------------------

    def _session(self, client_id: str) -> _Session:
        session = self.sessions.get(client_id)
        if session is None:
            session = _Session(client_id)
            self.sessions[client_id] = session
        return session

    def _intern_topic(self, name: str) -> int:
        tid = self._topic_ids.get(name)
        if tid is None:
            tid = self._next_topic_id
            self._next_topic_id += 1
            self._topic_ids[name] = tid
            self._topics[tid] = _Topic(tid, name)
        return tid

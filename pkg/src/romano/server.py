"""ROMANO registry server.

The server is an ordinary MQTT-SN client collocated with the broker.
It subscribes to "init-info"; every ConnectionRequest heard there is
recorded (idempotently — a rejoin refreshes the join time) and answered
with a ConnectionAck published to the joiner's ID topic.  A
RequestConnectedNodesInfo on "init-info" is answered on the requester's
ID topic with the roster, split across messages of at most 31 IDs so
each stays within the 255-octet frame.

Optionally the server also subscribes to "common" to track heartbeats
and evict nodes not heard for a configurable number of periods.

The server outlives broker outages: a failed or dropped session is
retried every RECONNECT_US until stop() is called.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from . import codec
from .session import ClientSession
from .simnet import Simulator, Timer

# 30 ids make a 242-octet message; the frame itself could hold 31, but
# 2 + 31*8 = 250 octets would not fit the 248-octet publish data cap.
MAX_IDS_PER_INFO = 30
RECONNECT_US = 2_000_000


@dataclass
class NodeRecord:
    romano_id: str
    join_time_us: int
    last_heartbeat_us: Optional[int] = None


class RegistryServer:
    def __init__(self, sim: Simulator, session: ClientSession, *,
                 track_heartbeats: bool = False,
                 heartbeat_period_us: int = 1_000_000,
                 evict_after_missed: int = 3) -> None:
        self.sim = sim
        self.session = session
        self.track_heartbeats = track_heartbeats
        self.heartbeat_period_us = heartbeat_period_us
        self.evict_after_missed = evict_after_missed
        self.registry: dict[str, NodeRecord] = {}
        self.acks_sent = 0
        self.evicted = 0
        self.ignored = 0
        self.running = False
        self._want_up = False
        self._on_ready_cb = None
        self._sweep_timer: Optional[Timer] = None
        session.on_message = self._on_romano
        session.on_disconnect = self._on_session_drop

    def start(self, on_ready=None) -> None:
        self._want_up = True
        self._on_ready_cb = on_ready
        self._connect()

    def _connect(self) -> None:
        def subscribed() -> None:
            self.running = True
            if self.track_heartbeats:
                self.session.subscribe(codec.TOPIC_COMMON)
                self._schedule_sweep()
            if self._on_ready_cb is not None:
                self._on_ready_cb()

        self.session.connect(
            on_ok=lambda: self.session.subscribe(codec.TOPIC_INIT_INFO,
                                                 on_ok=subscribed))

    def _on_session_drop(self) -> None:
        # Any exhausted control exchange lands here, including a failed
        # connect, so this is the single recovery path.
        self.running = False
        if self._want_up:
            self.sim.after(RECONNECT_US, self._connect)

    # -- message handling ------------------------------------------------------

    def _on_romano(self, topic: str, data: bytes) -> None:
        try:
            msg = codec.decode_message(data)
        except codec.CodecError:
            self.ignored += 1
            return
        if isinstance(msg, codec.ConnectionRequest):
            if topic == codec.TOPIC_INIT_INFO:
                self._on_join(msg.romano_id)
        elif isinstance(msg, codec.RequestConnectedNodesInfo):
            self._on_roster_request(msg.romano_id)
        elif isinstance(msg, codec.Heartbeat):
            record = self.registry.get(msg.romano_id)
            if record is not None:
                record.last_heartbeat_us = self.sim.now
        else:
            self.ignored += 1

    def _on_join(self, romano_id: str) -> None:
        record = self.registry.get(romano_id)
        if record is None:
            self.registry[romano_id] = NodeRecord(romano_id, self.sim.now)
        else:
            record.join_time_us = self.sim.now
        ack = codec.encode_message(codec.ConnectionAck())
        self.session.publish(romano_id, ack)
        self.acks_sent += 1

    def _on_roster_request(self, requester_id: str) -> None:
        # An unknown requester still gets an answer: the empty roster.
        ids = list(self.registry) if requester_id in self.registry else []
        chunks = [ids[i:i + MAX_IDS_PER_INFO]
                  for i in range(0, len(ids), MAX_IDS_PER_INFO)] or [[]]
        for chunk in chunks:
            raw = codec.encode_message(codec.ConnectedNodesInfo(tuple(chunk)))
            self.session.publish(requester_id, raw)

    # -- heartbeat eviction -------------------------------------------------------

    def _schedule_sweep(self) -> None:
        if self._sweep_timer is not None:
            self._sweep_timer.cancel()
        self._sweep_timer = self.sim.after(self.heartbeat_period_us,
                                           self._sweep)

    def _sweep(self) -> None:
        if not self.running:
            return
        horizon = self.evict_after_missed * self.heartbeat_period_us
        for romano_id, record in list(self.registry.items()):
            seen = record.last_heartbeat_us
            if seen is None:
                seen = record.join_time_us
            if self.sim.now - seen > horizon:
                del self.registry[romano_id]
                self.evicted += 1
        self._schedule_sweep()

    def stop(self) -> None:
        self._want_up = False
        self.running = False
        if self._sweep_timer is not None:
            self._sweep_timer.cancel()
            self._sweep_timer = None

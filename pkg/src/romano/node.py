"""ROMANO node runtime.

A node joins the overlay in a fixed order: connect to the broker with
its IPv6 address as client id, subscribe to its own ROMANO-ID topic,
publish a ConnectionRequest carrying its ID on "init-info", then wait
up to 2 s for a ConnectionAck on its ID topic.  On timeout it republishes
the request, indefinitely; only after the ack does it subscribe to
"common" and become Ready.  A detected disconnect (an exhausted control
exchange) drops the node back to Init and the whole sequence reruns.

Incoming ROMANO messages are dispatched by data type regardless of
which topic delivered them.  MovementControl orders go into a bounded
mailbox (drop-oldest on overflow) consumed by whatever drive layer the
application attaches.  Heartbeats are optional; when enabled the node
publishes its ID on "common" at a fixed period, and remembers the last
time it heard every peer.
"""

from __future__ import annotations

from collections import deque
from typing import Callable, Optional

from . import codec
from .session import ClientSession
from .simnet import Simulator, Timer

ACK_WAIT_US = 2_000_000
DEFAULT_HEARTBEAT_PERIOD_US = 1_000_000
DEFAULT_MAILBOX_CAPACITY = 64
HEARTBEAT_STALE_PERIODS = 3

INIT = "init"
AWAIT_ACK = "await-ack"
READY = "ready"


class RomanoNode:
    def __init__(self, sim: Simulator, session: ClientSession, *,
                 heartbeat_period_us: Optional[int] = None,
                 mailbox_capacity: int = DEFAULT_MAILBOX_CAPACITY) -> None:
        self.sim = sim
        self.session = session
        self.romano_id = codec.derive_romano_id(session.client_id)
        self.phase = INIT
        self.ready_time_us: Optional[int] = None
        self.heartbeat_period_us = heartbeat_period_us
        self.heartbeats_sent = 0
        self.neighbors: dict[str, int] = {}  # ROMANO ID -> last heard, us
        self.mailbox: deque[codec.MovementCommand] = deque()
        self.mailbox_capacity = mailbox_capacity
        self.mailbox_dropped = 0
        self.unknown_types = 0
        self.unknown_controls = 0
        self.malformed = 0
        self.early_messages = 0
        self.stray_acks = 0
        self.on_ready: Optional[Callable[[], None]] = None
        self.on_mailbox_push: Optional[Callable[[], None]] = None
        self.on_connection_request: Optional[
            Callable[[codec.ConnectionRequest, str], None]] = None
        self._data_handlers: dict[int, Callable] = {}
        self._extension_codes: set[int] = set()
        self._ack_timer: Optional[Timer] = None
        self._heartbeat_timer: Optional[Timer] = None
        self._gate_queues: dict[str, deque[codec.RomanoMessage]] = {}
        self._gate_limit = 16
        session.on_message = self._on_romano
        session.on_disconnect = self._on_disconnect

    # -- lifecycle ---------------------------------------------------------------

    def start(self) -> None:
        self._establish()

    def _establish(self) -> None:
        self.phase = INIT
        self.session.connect(on_ok=self._on_connected,
                             on_fail=lambda err: self._retry_connect())

    def _retry_connect(self) -> None:
        # Broker unreachable; try again after the ack-wait interval.
        self.sim.after(ACK_WAIT_US, self._establish)

    def _on_connected(self) -> None:
        self.session.subscribe(self.romano_id, on_ok=self._on_id_subscribed,
                               on_fail=lambda err: None)

    def _on_id_subscribed(self) -> None:
        self._publish_join_request()

    def _publish_join_request(self) -> None:
        if self._ack_timer is not None:
            self._ack_timer.cancel()
            self._ack_timer = None
        self.phase = AWAIT_ACK
        raw = codec.encode_message(codec.ConnectionRequest(self.romano_id))
        # The ack wait starts when the request actually hits the wire
        # (the very first publish is preceded by a REGISTER exchange),
        # so retries are spaced exactly one ack-wait apart.
        self.session.publish(codec.TOPIC_INIT_INFO, raw,
                             on_ok=self._arm_ack_timer)

    def _arm_ack_timer(self) -> None:
        if self.phase != AWAIT_ACK:
            return
        self._ack_timer = self.sim.after(ACK_WAIT_US,
                                         self._publish_join_request)

    def _on_ack(self) -> None:
        if self._ack_timer is not None:
            self._ack_timer.cancel()
            self._ack_timer = None
        self.session.subscribe(codec.TOPIC_COMMON, on_ok=self._on_ready,
                               on_fail=lambda err: None)

    def _on_ready(self) -> None:
        self.phase = READY
        self.ready_time_us = self.sim.now
        if self.heartbeat_period_us:
            self._schedule_heartbeat()
        if self.on_ready is not None:
            self.on_ready()

    def _on_disconnect(self) -> None:
        if self._ack_timer is not None:
            self._ack_timer.cancel()
            self._ack_timer = None
        if self._heartbeat_timer is not None:
            self._heartbeat_timer.cancel()
            self._heartbeat_timer = None
        self.phase = INIT
        self.ready_time_us = None
        self.sim.after(ACK_WAIT_US, self._establish)

    # -- application wiring ---------------------------------------------------------

    def on_data(self, type_code: int, handler: Callable) -> None:
        """Register a handler for NormalData, SensorData, or a custom code.

        NormalData and SensorData handlers receive the decoded message;
        custom codes are also announced to the decoder so their payloads
        arrive as CustomData instead of raising UnknownType.
        """
        self._data_handlers[int(type_code)] = handler
        if int(type_code) not in codec.BUILTIN_TYPE_CODES:
            self._extension_codes.add(int(type_code))

    def pop_command(self) -> Optional[codec.MovementCommand]:
        return self.mailbox.popleft() if self.mailbox else None

    # -- heartbeats --------------------------------------------------------------------

    def _schedule_heartbeat(self) -> None:
        self._heartbeat_timer = self.sim.after(self.heartbeat_period_us,
                                               self._heartbeat_tick)

    def _heartbeat_tick(self) -> None:
        if self.phase != READY:
            return
        raw = codec.encode_message(codec.Heartbeat(self.romano_id))
        self.session.publish(codec.TOPIC_COMMON, raw)
        self.heartbeats_sent += 1
        self._schedule_heartbeat()

    def neighbor_fresh(self, romano_id: str) -> bool:
        """True if a heartbeat from the peer arrived within 3 periods."""
        period = self.heartbeat_period_us or DEFAULT_HEARTBEAT_PERIOD_US
        last = self.neighbors.get(romano_id)
        return last is not None and \
            self.sim.now - last <= HEARTBEAT_STALE_PERIODS * period

    def guarded_publish(self, peer_id: str, msg: codec.RomanoMessage) -> bool:
        """Send to a peer's ID topic only while its heartbeats are fresh.

        Messages for a stale peer wait in a bounded per-peer queue and
        flush, in order, when the peer is heard again.  Returns whether
        the message went out immediately.
        """
        if self.neighbor_fresh(peer_id):
            self.session.publish(peer_id, codec.encode_message(msg))
            return True
        queue = self._gate_queues.setdefault(peer_id, deque())
        if len(queue) >= self._gate_limit:
            queue.popleft()
        queue.append(msg)
        return False

    def _flush_gate(self, peer_id: str) -> None:
        queue = self._gate_queues.get(peer_id)
        while queue:
            self.session.publish(peer_id,
                                 codec.encode_message(queue.popleft()))

    # -- dispatch -----------------------------------------------------------------------

    def _on_romano(self, topic: str, data: bytes) -> None:
        try:
            msg = codec.decode_message(data,
                                       extension_codes=self._extension_codes)
        except codec.UnknownType:
            self.unknown_types += 1
            return
        except codec.CodecError:
            self.malformed += 1
            return

        if isinstance(msg, codec.ConnectionAck):
            if self.phase == AWAIT_ACK:
                self._on_ack()
            else:
                self.stray_acks += 1
            return
        if self.phase != READY:
            self.early_messages += 1
            return

        if isinstance(msg, codec.Heartbeat):
            self.neighbors[msg.romano_id] = self.sim.now
            if msg.romano_id in self._gate_queues:
                self._flush_gate(msg.romano_id)
        elif isinstance(msg, codec.ConnectedNodesInfo):
            for romano_id in msg.romano_ids:
                self.neighbors.setdefault(romano_id, self.sim.now)
        elif isinstance(msg, codec.MqttSubscribe):
            self.session.subscribe(msg.topic)
        elif isinstance(msg, codec.MqttUnsubscribe):
            self.session.unsubscribe(msg.topic)
        elif isinstance(msg, codec.MqttPublishRequest):
            self.session.publish(msg.topic, msg.data)
        elif isinstance(msg, codec.MovementControl):
            self.enqueue_movement(msg)
        elif isinstance(msg, codec.ConnectionRequest):
            if self.on_connection_request is not None:
                self.on_connection_request(msg, topic)
        elif isinstance(msg, (codec.NormalData, codec.SensorData,
                              codec.CustomData)):
            handler = self._data_handlers.get(_type_code_of(msg))
            if handler is not None:
                handler(msg)
        # RequestConnectedNodesInfo is server business; nodes ignore it.

    def enqueue_movement(self, msg: codec.MovementControl) -> None:
        """Queue a movement order exactly as a received one would be."""
        if len(msg.data) != 2:
            handler = self._data_handlers.get(int(codec.DataType.MOVEMENT_CONTROL))
            if handler is not None:
                handler(msg)
            else:
                self.unknown_controls += 1
            return
        if len(self.mailbox) >= self.mailbox_capacity:
            self.mailbox.popleft()
            self.mailbox_dropped += 1
        self.mailbox.append(msg.to_command())
        if self.on_mailbox_push is not None:
            self.on_mailbox_push()


def _type_code_of(msg: codec.RomanoMessage) -> int:
    if isinstance(msg, codec.NormalData):
        return int(codec.DataType.NORMAL_DATA)
    if isinstance(msg, codec.SensorData):
        return int(codec.DataType.SENSOR_DATA)
    if isinstance(msg, codec.CustomData):
        return msg.type_code
    raise ValueError("no data handler key for {}".format(type(msg).__name__))

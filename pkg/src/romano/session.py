"""Client-side MQTT-SN session.

Owns the topic name/id map and every in-flight exchange.  Exchanges
that expect a reply (CONNECT, REGISTER, SUBSCRIBE, UNSUBSCRIBE, and
QoS 1 PUBLISH) retransmit every ``T_RETRY_US`` up to ``N_RETRY`` times;
an exhausted control exchange marks the session disconnected, which is
the only in-band failure signal a QoS 0 deployment gets.

The client identifier is the node's IPv6 address string, which is also
its transport address on the simulated network.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from . import mqttsn as sn
from .simnet import Network, NoLink, Simulator, Timer

T_RETRY_US = 500_000
N_RETRY = 3

DISCONNECTED = "disconnected"
CONNECTING = "connecting"
ACTIVE = "active"


class SessionError(Exception):
    pass


class RetriesExhausted(SessionError):
    """No reply after N_RETRY retransmissions."""


class BrokerReject(SessionError):
    """Broker answered with a non-zero return code."""


@dataclass
class _Exchange:
    kind: str
    encode: Callable[[bool], bytes]   # dup flag -> wire octets
    topic: Optional[str]
    on_ok: Optional[Callable]
    on_fail: Optional[Callable[[Exception], None]]
    control: bool
    retries_left: int = N_RETRY
    timer: Optional[Timer] = None


class ClientSession:
    def __init__(self, sim: Simulator, network: Network, client_id: str,
                 broker_addr: str) -> None:
        self.sim = sim
        self.network = network
        self.client_id = client_id
        self.broker_addr = broker_addr
        self.state = DISCONNECTED
        self.topic_ids: dict[str, int] = {}
        self.topic_names: dict[int, str] = {}
        self.on_message: Optional[Callable[[str, bytes], None]] = None
        self.on_disconnect: Optional[Callable[[], None]] = None
        self.send_failures = 0
        self.stray_packets = 0
        self._pending: dict[int, _Exchange] = {}
        self._connect_exchange: Optional[_Exchange] = None
        self._next_msg_id = 1
        self._registering: dict[str, list] = {}
        network.attach(client_id, self._on_datagram)

    # -- connection -----------------------------------------------------------

    def connect(self, on_ok: Optional[Callable] = None,
                on_fail: Optional[Callable[[Exception], None]] = None,
                clean_session: bool = True) -> None:
        if self._connect_exchange is not None:
            return
        self.state = CONNECTING

        def encode(dup: bool) -> bytes:
            return sn.encode_packet(
                sn.Connect(self.client_id, clean_session=clean_session))

        self._connect_exchange = _Exchange(
            "connect", encode, None, on_ok, on_fail, control=True)
        self._transmit(self._connect_exchange)

    # -- subscriptions ----------------------------------------------------------

    def subscribe(self, topic: str, on_ok: Optional[Callable] = None,
                  on_fail: Optional[Callable[[Exception], None]] = None,
                  qos: int = 0) -> None:
        msg_id = self._take_msg_id()

        def encode(dup: bool) -> bytes:
            return sn.encode_packet(sn.Subscribe(msg_id, topic, qos=qos,
                                                 dup=dup))

        self._pending[msg_id] = _Exchange(
            "subscribe", encode, topic, on_ok, on_fail, control=True)
        self._transmit(self._pending[msg_id])

    def unsubscribe(self, topic: str, on_ok: Optional[Callable] = None,
                    on_fail: Optional[Callable[[Exception], None]] = None,
                    ) -> None:
        msg_id = self._take_msg_id()

        def encode(dup: bool) -> bytes:
            return sn.encode_packet(sn.Unsubscribe(msg_id, topic))

        self._pending[msg_id] = _Exchange(
            "unsubscribe", encode, topic, on_ok, on_fail, control=True)
        self._transmit(self._pending[msg_id])

    # -- publishing --------------------------------------------------------------

    def publish(self, topic: str, data: bytes, qos: int = 0,
                on_ok: Optional[Callable] = None,
                on_fail: Optional[Callable[[Exception], None]] = None) -> None:
        """Publish ``data``; registers the topic name first if needed."""
        topic_id = self.topic_ids.get(topic)
        if topic_id is None:
            self._register_then(topic,
                                lambda tid: self._publish_now(
                                    tid, topic, data, qos, on_ok, on_fail),
                                on_fail)
            return
        self._publish_now(topic_id, topic, data, qos, on_ok, on_fail)

    def _publish_now(self, topic_id: int, topic: str, data: bytes, qos: int,
                     on_ok: Optional[Callable],
                     on_fail: Optional[Callable[[Exception], None]]) -> None:
        if qos == 0:
            raw = sn.encode_packet(sn.Publish(topic_id, data))
            self._send(raw, topic)
            if on_ok is not None:
                on_ok()
            return
        msg_id = self._take_msg_id()

        def encode(dup: bool) -> bytes:
            return sn.encode_packet(
                sn.Publish(topic_id, data, msg_id, qos=1, dup=dup))

        self._pending[msg_id] = _Exchange(
            "publish", encode, topic, on_ok, on_fail, control=False)
        self._transmit(self._pending[msg_id])

    def _register_then(self, topic: str, proceed: Callable[[int], None],
                       on_fail: Optional[Callable[[Exception], None]]) -> None:
        waiters = self._registering.get(topic)
        if waiters is not None:
            waiters.append((proceed, on_fail))
            return
        self._registering[topic] = [(proceed, on_fail)]
        msg_id = self._take_msg_id()

        def encode(dup: bool) -> bytes:
            return sn.encode_packet(sn.Register(0, msg_id, topic))

        self._pending[msg_id] = _Exchange(
            "register", encode, topic, None, None, control=True)
        self._transmit(self._pending[msg_id])

    # -- inbound -----------------------------------------------------------------

    def _on_datagram(self, src: str, data: bytes) -> None:
        if src != self.broker_addr:
            return  # direct node-to-node traffic uses a different port
        try:
            pkt = sn.decode_packet(data)
        except sn.PacketError:
            self.stray_packets += 1
            return

        if isinstance(pkt, sn.Connack):
            self._on_connack(pkt)
        elif isinstance(pkt, sn.Suback):
            self._complete(pkt.msg_id, "subscribe", pkt.return_code,
                           topic_id=pkt.topic_id)
        elif isinstance(pkt, sn.Unsuback):
            self._complete(pkt.msg_id, "unsubscribe", sn.ReturnCode.ACCEPTED,
                           forget_topic=True)
        elif isinstance(pkt, sn.Regack):
            self._on_regack(pkt)
        elif isinstance(pkt, sn.Puback):
            self._complete(pkt.msg_id, "publish", pkt.return_code)
        elif isinstance(pkt, sn.Publish):
            self._on_publish(pkt)
        else:
            self.stray_packets += 1

    def _on_connack(self, pkt: sn.Connack) -> None:
        exchange = self._connect_exchange
        if exchange is None:
            return
        self._connect_exchange = None
        if exchange.timer is not None:
            exchange.timer.cancel()
        if pkt.return_code != sn.ReturnCode.ACCEPTED:
            self.state = DISCONNECTED
            if exchange.on_fail is not None:
                exchange.on_fail(BrokerReject(
                    "connect rejected with code {}".format(pkt.return_code)))
            return
        self.state = ACTIVE
        if exchange.on_ok is not None:
            exchange.on_ok()

    def _on_regack(self, pkt: sn.Regack) -> None:
        exchange = self._pending.pop(pkt.msg_id, None)
        if exchange is None or exchange.kind != "register":
            self.stray_packets += 1
            return
        if exchange.timer is not None:
            exchange.timer.cancel()
        topic = exchange.topic
        waiters = self._registering.pop(topic, [])
        if pkt.return_code != sn.ReturnCode.ACCEPTED:
            err = BrokerReject("register of {!r} rejected with code {}".format(
                topic, pkt.return_code))
            for _, on_fail in waiters:
                if on_fail is not None:
                    on_fail(err)
            return
        self._learn_topic(topic, pkt.topic_id)
        for proceed, _ in waiters:
            proceed(pkt.topic_id)

    def _complete(self, msg_id: int, kind: str, return_code: int,
                  topic_id: Optional[int] = None,
                  forget_topic: bool = False) -> None:
        exchange = self._pending.pop(msg_id, None)
        if exchange is None or exchange.kind != kind:
            self.stray_packets += 1
            return
        if exchange.timer is not None:
            exchange.timer.cancel()
        if return_code != sn.ReturnCode.ACCEPTED:
            if exchange.on_fail is not None:
                exchange.on_fail(BrokerReject(
                    "{} of {!r} rejected with code {}".format(
                        kind, exchange.topic, return_code)))
            return
        if topic_id is not None and exchange.topic is not None:
            self._learn_topic(exchange.topic, topic_id)
        if forget_topic and exchange.topic in self.topic_ids:
            self.topic_names.pop(self.topic_ids.pop(exchange.topic))
        if exchange.on_ok is not None:
            exchange.on_ok()

    def _on_publish(self, pkt: sn.Publish) -> None:
        topic = self.topic_names.get(pkt.topic_id)
        if topic is None:
            self.stray_packets += 1
            return
        if pkt.qos == 1:
            self._send(sn.encode_packet(sn.Puback(pkt.topic_id, pkt.msg_id)),
                       topic)
        if self.on_message is not None:
            self.on_message(topic, pkt.data)

    # -- retransmission -------------------------------------------------------------

    def _transmit(self, exchange: _Exchange, dup: bool = False) -> None:
        self._send(exchange.encode(dup), exchange.topic)
        exchange.timer = self.sim.after(
            T_RETRY_US, lambda: self._on_retry_timeout(exchange))

    def _on_retry_timeout(self, exchange: _Exchange) -> None:
        if exchange.retries_left > 0:
            exchange.retries_left -= 1
            self._transmit(exchange, dup=True)
            return
        self._abandon(exchange)

    def _abandon(self, exchange: _Exchange) -> None:
        if exchange is self._connect_exchange:
            self._connect_exchange = None
        else:
            for msg_id, pending in list(self._pending.items()):
                if pending is exchange:
                    del self._pending[msg_id]
        if exchange.kind == "register":
            waiters = self._registering.pop(exchange.topic, [])
            err = RetriesExhausted(
                "register of {!r} got no REGACK after {} retries".format(
                    exchange.topic, N_RETRY))
            for _, on_fail in waiters:
                if on_fail is not None:
                    on_fail(err)
        elif exchange.on_fail is not None:
            exchange.on_fail(RetriesExhausted(
                "{} got no reply after {} retries".format(
                    exchange.kind, N_RETRY)))
        if exchange.control:
            self._drop_session()

    def _drop_session(self) -> None:
        self.state = DISCONNECTED
        for exchange in list(self._pending.values()):
            if exchange.timer is not None:
                exchange.timer.cancel()
        self._pending.clear()
        self._registering.clear()
        if self._connect_exchange is not None and \
                self._connect_exchange.timer is not None:
            self._connect_exchange.timer.cancel()
        self._connect_exchange = None
        self.topic_ids.clear()
        self.topic_names.clear()
        if self.on_disconnect is not None:
            self.on_disconnect()

    # -- plumbing -----------------------------------------------------------------

    def _learn_topic(self, name: str, topic_id: int) -> None:
        self.topic_ids[name] = topic_id
        self.topic_names[topic_id] = name

    def _take_msg_id(self) -> int:
        for _ in range(0xFFFF):
            msg_id = self._next_msg_id
            self._next_msg_id = self._next_msg_id % 0xFFFF + 1
            if msg_id not in self._pending:
                return msg_id
        raise SessionError("no free message id")

    def _send(self, raw: bytes, topic: Optional[str]) -> None:
        try:
            self.network.send(self.client_id, self.broker_addr, raw,
                              topic=topic)
        except NoLink:
            self.send_failures += 1

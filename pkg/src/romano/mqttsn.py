"""MQTT-SN v1.2 packet codec for the subset a ROMANO deployment uses.

Supported packets: CONNECT, CONNACK, REGISTER, REGACK, SUBSCRIBE,
SUBACK, UNSUBSCRIBE, UNSUBACK, PUBLISH, PUBACK.  All packets use the
single-octet length form, so no packet may exceed 255 octets; a PUBLISH
therefore carries at most 248 octets of data after its 7-octet header:

    octet 0     packet length
    octet 1     message type
    octet 2     flags
    octets 3-4  topic id
    octets 5-6  message id (0x0000 at QoS 0)
    octets 7-n  data

Topic names are registered for 16-bit topic ids with REGISTER, or
resolved through the SUBACK of a by-name SUBSCRIBE.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Union

# -- Packet and flag constants -----------------------------------------------

MAX_PACKET_LEN = 255
PUBLISH_HEADER_LEN = 7
MAX_PUBLISH_DATA = MAX_PACKET_LEN - PUBLISH_HEADER_LEN  # 248

PROTOCOL_ID = 0x01


class MsgType(IntEnum):
    CONNECT = 0x04
    CONNACK = 0x05
    REGISTER = 0x0A
    REGACK = 0x0B
    PUBLISH = 0x0C
    PUBACK = 0x0D
    SUBSCRIBE = 0x12
    SUBACK = 0x13
    UNSUBSCRIBE = 0x14
    UNSUBACK = 0x15


class ReturnCode(IntEnum):
    ACCEPTED = 0x00
    REJECTED_CONGESTION = 0x01
    REJECTED_INVALID_TOPIC_ID = 0x02
    REJECTED_NOT_SUPPORTED = 0x03


FLAG_DUP = 0x80
FLAG_QOS_MASK = 0x60
FLAG_QOS_SHIFT = 5
FLAG_RETAIN = 0x10
FLAG_WILL = 0x08
FLAG_CLEAN_SESSION = 0x04
FLAG_TOPIC_TYPE_MASK = 0x03

TOPIC_TYPE_NORMAL = 0x00  # registered 16-bit topic id (name in SUBSCRIBE)


# -- Errors ------------------------------------------------------------------

class PacketError(Exception):
    """Base class for MQTT-SN encode/decode failures."""


class TruncatedPacket(PacketError):
    pass


class PacketLengthMismatch(PacketError):
    pass


class UnsupportedPacket(PacketError):
    pass


class OversizePacket(PacketError):
    pass


# -- Packet types ------------------------------------------------------------

@dataclass(frozen=True)
class Connect:
    client_id: str
    clean_session: bool = True
    duration: int = 0


@dataclass(frozen=True)
class Connack:
    return_code: int = ReturnCode.ACCEPTED


@dataclass(frozen=True)
class Register:
    topic_id: int
    msg_id: int
    topic_name: str


@dataclass(frozen=True)
class Regack:
    topic_id: int
    msg_id: int
    return_code: int = ReturnCode.ACCEPTED


@dataclass(frozen=True)
class Publish:
    topic_id: int
    data: bytes
    msg_id: int = 0
    qos: int = 0
    dup: bool = False


@dataclass(frozen=True)
class Puback:
    topic_id: int
    msg_id: int
    return_code: int = ReturnCode.ACCEPTED


@dataclass(frozen=True)
class Subscribe:
    msg_id: int
    topic_name: str
    qos: int = 0
    dup: bool = False


@dataclass(frozen=True)
class Suback:
    topic_id: int
    msg_id: int
    return_code: int = ReturnCode.ACCEPTED
    qos: int = 0


@dataclass(frozen=True)
class Unsubscribe:
    msg_id: int
    topic_name: str


@dataclass(frozen=True)
class Unsuback:
    msg_id: int


SnPacket = Union[
    Connect, Connack, Register, Regack, Publish, Puback,
    Subscribe, Suback, Unsubscribe, Unsuback,
]


# -- Encoding ----------------------------------------------------------------

def encode_packet(pkt: SnPacket) -> bytes:
    """Serialize a packet; raises :class:`OversizePacket` past 255 octets."""
    if isinstance(pkt, Connect):
        flags = FLAG_CLEAN_SESSION if pkt.clean_session else 0
        body = struct.pack("!BBH", flags, PROTOCOL_ID, pkt.duration)
        body += pkt.client_id.encode("utf-8")
        return _finish(MsgType.CONNECT, body)
    if isinstance(pkt, Connack):
        return _finish(MsgType.CONNACK, bytes((pkt.return_code,)))
    if isinstance(pkt, Register):
        body = struct.pack("!HH", pkt.topic_id, pkt.msg_id)
        body += pkt.topic_name.encode("utf-8")
        return _finish(MsgType.REGISTER, body)
    if isinstance(pkt, Regack):
        return _finish(MsgType.REGACK,
                       struct.pack("!HHB", pkt.topic_id, pkt.msg_id,
                                   pkt.return_code))
    if isinstance(pkt, Publish):
        if len(pkt.data) > MAX_PUBLISH_DATA:
            raise OversizePacket(
                "publish data of {} octets exceeds the {}-octet limit".format(
                    len(pkt.data), MAX_PUBLISH_DATA))
        flags = _flags(qos=pkt.qos, dup=pkt.dup)
        body = struct.pack("!BHH", flags, pkt.topic_id, pkt.msg_id)
        return _finish(MsgType.PUBLISH, body + bytes(pkt.data))
    if isinstance(pkt, Puback):
        return _finish(MsgType.PUBACK,
                       struct.pack("!HHB", pkt.topic_id, pkt.msg_id,
                                   pkt.return_code))
    if isinstance(pkt, Subscribe):
        flags = _flags(qos=pkt.qos, dup=pkt.dup)
        body = struct.pack("!BH", flags, pkt.msg_id)
        return _finish(MsgType.SUBSCRIBE, body + pkt.topic_name.encode("utf-8"))
    if isinstance(pkt, Suback):
        flags = _flags(qos=pkt.qos)
        return _finish(MsgType.SUBACK,
                       struct.pack("!BHHB", flags, pkt.topic_id, pkt.msg_id,
                                   pkt.return_code))
    if isinstance(pkt, Unsubscribe):
        body = struct.pack("!BH", 0, pkt.msg_id)
        return _finish(MsgType.UNSUBSCRIBE,
                       body + pkt.topic_name.encode("utf-8"))
    if isinstance(pkt, Unsuback):
        return _finish(MsgType.UNSUBACK, struct.pack("!H", pkt.msg_id))
    raise PacketError("cannot encode object of type {}".format(
        type(pkt).__name__))


def _flags(qos: int = 0, dup: bool = False) -> int:
    if qos not in (0, 1):
        raise PacketError("QoS {} not supported, use 0 or 1".format(qos))
    flags = (qos << FLAG_QOS_SHIFT) | TOPIC_TYPE_NORMAL
    if dup:
        flags |= FLAG_DUP
    return flags


def _finish(msg_type: int, body: bytes) -> bytes:
    total = 2 + len(body)
    if total > MAX_PACKET_LEN:
        raise OversizePacket(
            "packet of {} octets exceeds the single-octet length form".format(
                total))
    return bytes((total, msg_type)) + body


# -- Decoding ----------------------------------------------------------------

def decode_packet(data: bytes) -> SnPacket:
    """Parse wire octets into a packet.

    Raises:
        TruncatedPacket: buffer shorter than declared or than a fixed
            layout requires.
        PacketLengthMismatch: trailing octets after the declared length.
        UnsupportedPacket: message type outside the supported subset.
    """
    if len(data) < 2:
        raise TruncatedPacket("packet of {} octets has no header".format(
            len(data)))
    length, msg_type = data[0], data[1]
    if length < 2:
        raise PacketLengthMismatch(
            "declared length {} is below the 2-octet minimum".format(length))
    if len(data) < length:
        raise TruncatedPacket(
            "buffer holds {} octets but packet declares {}".format(
                len(data), length))
    if len(data) > length:
        raise PacketLengthMismatch(
            "{} trailing octets after declared length {}".format(
                len(data) - length, length))
    body = data[2:length]

    if msg_type == MsgType.CONNECT:
        flags, proto, duration = _unpack("!BBH", body, "CONNECT")
        client_id = body[4:].decode("utf-8")
        if proto != PROTOCOL_ID:
            raise UnsupportedPacket(
                "protocol id {:#04x} is not MQTT-SN".format(proto))
        return Connect(client_id, bool(flags & FLAG_CLEAN_SESSION), duration)
    if msg_type == MsgType.CONNACK:
        (code,) = _unpack("!B", body, "CONNACK")
        return Connack(code)
    if msg_type == MsgType.REGISTER:
        topic_id, msg_id = _unpack("!HH", body, "REGISTER")
        return Register(topic_id, msg_id, body[4:].decode("utf-8"))
    if msg_type == MsgType.REGACK:
        topic_id, msg_id, code = _unpack("!HHB", body, "REGACK")
        return Regack(topic_id, msg_id, code)
    if msg_type == MsgType.PUBLISH:
        flags, topic_id, msg_id = _unpack("!BHH", body, "PUBLISH")
        return Publish(topic_id, body[5:], msg_id,
                       qos=_qos(flags), dup=bool(flags & FLAG_DUP))
    if msg_type == MsgType.PUBACK:
        topic_id, msg_id, code = _unpack("!HHB", body, "PUBACK")
        return Puback(topic_id, msg_id, code)
    if msg_type == MsgType.SUBSCRIBE:
        flags, msg_id = _unpack("!BH", body, "SUBSCRIBE")
        return Subscribe(msg_id, body[3:].decode("utf-8"),
                         qos=_qos(flags), dup=bool(flags & FLAG_DUP))
    if msg_type == MsgType.SUBACK:
        flags, topic_id, msg_id, code = _unpack("!BHHB", body, "SUBACK")
        return Suback(topic_id, msg_id, code, qos=_qos(flags))
    if msg_type == MsgType.UNSUBSCRIBE:
        _, msg_id = _unpack("!BH", body, "UNSUBSCRIBE")
        return Unsubscribe(msg_id, body[3:].decode("utf-8"))
    if msg_type == MsgType.UNSUBACK:
        (msg_id,) = _unpack("!H", body, "UNSUBACK")
        return Unsuback(msg_id)
    raise UnsupportedPacket(
        "message type {:#04x} outside the supported subset".format(msg_type))


def _qos(flags: int) -> int:
    qos = (flags & FLAG_QOS_MASK) >> FLAG_QOS_SHIFT
    if qos not in (0, 1):
        raise UnsupportedPacket("QoS {} not supported".format(qos))
    return qos


def _unpack(fmt: str, body: bytes, what: str) -> tuple:
    size = struct.calcsize(fmt)
    if len(body) < size:
        raise TruncatedPacket(
            "{} body of {} octets shorter than its {}-octet layout".format(
                what, len(body), size))
    return struct.unpack(fmt, body[:size])

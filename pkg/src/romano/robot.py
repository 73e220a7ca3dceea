"""Differential-drive robot abstraction and swarm behaviors.

Pose lives on a 2-D plane: x/y in millimeters, heading in degrees in
[0, 360) with 0 along +x and counterclockwise positive, so a RotateLeft
increases the heading.  Move Front/Back translate along the heading;
Move Left/Right translate at heading +/-90 degrees without turning (the
drive layer hides how the wheels achieve that).  Magnitudes are the
unsigned 16-bit values carried by MovementControl: millimeters for
translations, degrees for rotations.

The drive controller consumes the node's mailbox strictly in FIFO
order, records every executed command, and appends a pose-trace row per
change.  Received-signal strength follows log-distance path loss,

    rssi(d) = P0 - 10 n log10(d / d0)

with P0 the power at reference distance d0.  The dispersal behavior
pairs two robots that alternate a request/clear-to-send/probe cycle
and step apart or together by a fixed stride until the measured RSSI
straddles its threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

from . import codec
from .node import RomanoNode
from .simnet import Network, NoLink, Simulator, PORT_APP

MM_PER_M = 1000.0


class RobotError(Exception):
    pass


class NonpositiveDistance(RobotError):
    """RSSI is undefined at or below zero distance."""


class UnknownControlType(RobotError):
    """Control type outside the built-in movement set."""


# -- Pose and kinematics ---------------------------------------------------------

@dataclass(frozen=True)
class Pose:
    x_mm: float = 0.0
    y_mm: float = 0.0
    heading_deg: float = 0.0


def _normalize(deg: float) -> float:
    deg = math.fmod(deg, 360.0)
    return deg + 360.0 if deg < 0.0 else deg


def _translate(pose: Pose, bearing_deg: float, distance_mm: float) -> Pose:
    rad = math.radians(_normalize(bearing_deg))
    return replace(pose,
                   x_mm=pose.x_mm + distance_mm * math.cos(rad),
                   y_mm=pose.y_mm + distance_mm * math.sin(rad))


def apply_command(pose: Pose, command: codec.MovementCommand) -> Pose:
    """Apply one movement order to a pose, returning the new pose.

    Raises:
        UnknownControlType: for control types outside the built-in six.
    """
    kind = command.control_type
    magnitude = float(command.magnitude)
    if kind == codec.MovementType.MOVE_FRONT:
        return _translate(pose, pose.heading_deg, magnitude)
    if kind == codec.MovementType.MOVE_BACK:
        return _translate(pose, pose.heading_deg, -magnitude)
    if kind == codec.MovementType.MOVE_LEFT:
        return _translate(pose, pose.heading_deg + 90.0, magnitude)
    if kind == codec.MovementType.MOVE_RIGHT:
        return _translate(pose, pose.heading_deg - 90.0, magnitude)
    if kind == codec.MovementType.ROTATE_LEFT:
        return replace(pose, heading_deg=_normalize(pose.heading_deg + magnitude))
    if kind == codec.MovementType.ROTATE_RIGHT:
        return replace(pose, heading_deg=_normalize(pose.heading_deg - magnitude))
    raise UnknownControlType(
        "control type {:#06x} has no built-in kinematics".format(kind))


# -- Radio propagation ------------------------------------------------------------

@dataclass(frozen=True)
class PathLossModel:
    """Log-distance path loss anchored at ``p0_dbm`` @ ``d0_mm``."""

    p0_dbm: float = -45.0
    d0_mm: float = 1000.0
    exponent: float = 2.5

    def rssi(self, distance_mm: float) -> float:
        if distance_mm <= 0.0:
            raise NonpositiveDistance(
                "distance must be positive, got {} mm".format(distance_mm))
        return self.p0_dbm - 10.0 * self.exponent * math.log10(
            distance_mm / self.d0_mm)

    def equilibrium_mm(self, threshold_dbm: float) -> float:
        """Distance at which rssi() equals the threshold."""
        return self.d0_mm * 10.0 ** (
            (self.p0_dbm - threshold_dbm) / (10.0 * self.exponent))


# -- Drive controller --------------------------------------------------------------

class Robot:
    """Executes mailbox orders against a pose, instantly by default.

    With ``speed_mm_s``/``speed_deg_s`` set, each order occupies the
    wall of virtual time it would take to drive, and the next order is
    popped only when the previous one finishes; the mailbox keeps
    buffering meanwhile.
    """

    def __init__(self, sim: Simulator, node: RomanoNode,
                 pose: Pose = Pose(), *,
                 speed_mm_s: Optional[float] = None,
                 speed_deg_s: Optional[float] = None) -> None:
        self.sim = sim
        self.node = node
        self.pose = pose
        self.speed_mm_s = speed_mm_s
        self.speed_deg_s = speed_deg_s
        self.executed: list[codec.MovementCommand] = []
        self.pose_trace: list[tuple[int, Pose]] = [(sim.now, pose)]
        self.on_command: Optional[Callable[[codec.MovementCommand], None]] = None
        self._busy = False
        node.on_mailbox_push = self._drain

    @property
    def romano_id(self) -> str:
        return self.node.romano_id

    def _drain(self) -> None:
        if self._busy:
            return
        command = self.node.pop_command()
        if command is None:
            return
        duration = self._duration_us(command)
        if duration <= 0:
            self._execute(command)
            self._drain()
            return
        self._busy = True
        self.sim.after(duration, lambda: self._finish(command))

    def _finish(self, command: codec.MovementCommand) -> None:
        self._busy = False
        self._execute(command)
        self._drain()

    def _execute(self, command: codec.MovementCommand) -> None:
        self.pose = apply_command(self.pose, command)
        self.executed.append(command)
        self.pose_trace.append((self.sim.now, self.pose))
        if self.on_command is not None:
            self.on_command(command)

    def _duration_us(self, command: codec.MovementCommand) -> int:
        rotating = command.control_type in (codec.MovementType.ROTATE_LEFT,
                                            codec.MovementType.ROTATE_RIGHT)
        speed = self.speed_deg_s if rotating else self.speed_mm_s
        if not speed:
            return 0
        return int(command.magnitude / speed * 1_000_000)


# -- Scripted leader ------------------------------------------------------------------

SQUARE_PATH: tuple[tuple[int, int], ...] = (
    (codec.MovementType.MOVE_FRONT, 100),
    (codec.MovementType.ROTATE_LEFT, 90),
) * 4


class LeaderScript:
    """Drives a robot along a scripted path, publishing each order.

    Every ``interval_us`` the next command is executed locally (through
    the robot's own mailbox, like any other order) and simultaneously
    published as MovementControl on the telemetry topic, so followers
    replay the exact emitted stream.
    """

    def __init__(self, sim: Simulator, robot: Robot,
                 script=SQUARE_PATH, *,
                 topic: str = "telemetry",
                 interval_us: int = 200_000) -> None:
        self.sim = sim
        self.robot = robot
        self.script = list(script)
        self.topic = topic
        self.interval_us = interval_us
        self.emitted: list[codec.MovementCommand] = []
        self.done = False
        self._index = 0

    def start(self) -> None:
        self.sim.after(self.interval_us, self._tick)

    def _tick(self) -> None:
        if self._index >= len(self.script):
            self.done = True
            return
        control_type, magnitude = self.script[self._index]
        self._index += 1
        msg = codec.movement_control(control_type, magnitude)
        self.robot.node.session.publish(self.topic, codec.encode_message(msg))
        self.robot.node.enqueue_movement(msg)
        self.emitted.append(msg.to_command())
        self.sim.after(self.interval_us, self._tick)


# -- Dispersal ---------------------------------------------------------------------------

DISP_IDLE = "idle"
DISP_SENT_REQ = "sent-req"
DISP_AWAIT_PROBE = "await-probe"


class DispersalController:
    """One half of a two-robot RSSI dispersal pair.

    Cycle: the initiator publishes UdpSendReq to the peer's ID topic;
    the peer answers UdpSendGo on the initiator's topic; the initiator
    then broadcasts a raw probe datagram directly (off-broker); the
    peer reads the probe's RSSI and steps away if the signal is above
    threshold, toward if below, and holds exactly at it.  Roles then
    swap, so the robots alternate single strides.  A robot waiting for
    a reply repeats its last message every ``interval_us``; movement is
    restricted to the line through both robots.
    """

    def __init__(self, sim: Simulator, network: Network, robot: Robot,
                 peer_addr: str, peer_id: str, positions: dict, *,
                 path_loss: PathLossModel = PathLossModel(),
                 threshold_dbm: float = -70.0,
                 stride_mm: int = 50,
                 interval_us: int = 200_000) -> None:
        self.sim = sim
        self.network = network
        self.robot = robot
        self.peer_addr = peer_addr
        self.peer_id = peer_id
        self.path_loss = path_loss
        self.threshold_dbm = threshold_dbm
        self.stride_mm = stride_mm
        self.interval_us = interval_us
        self.positions = positions  # addr -> Robot, for probe geometry
        self.state = DISP_IDLE
        self.rounds = 0  # probes this robot measured
        self.moves = 0
        self.rssi_log: list[tuple[int, float]] = []
        self.on_round: Optional[Callable[[float], None]] = None
        self._retry_timer = None
        addr = robot.node.session.client_id
        network.attach(addr, self._on_probe, port=PORT_APP)
        robot.node.on_data(codec.UDP_SEND_REQ, self._on_req)
        robot.node.on_data(codec.UDP_SEND_GO, self._on_go)

    # -- initiator side ----------------------------------------------------------

    def initiate(self) -> None:
        """Begin a measurement cycle: ask the peer for clearance."""
        self.state = DISP_SENT_REQ
        self._publish(codec.UDP_SEND_REQ)
        self._arm_retry()

    def _on_go(self, msg: codec.CustomData) -> None:
        if self.state == DISP_SENT_REQ:
            self.state = DISP_IDLE
            self._disarm_retry()
            self._broadcast_probe()
        elif self.state == DISP_IDLE:
            # Duplicate clearance: our probe was lost and the peer is
            # still waiting, so transmit it again.
            self._broadcast_probe()

    def _broadcast_probe(self) -> None:
        addr = self.robot.node.session.client_id
        try:
            self.network.send(addr, self.peer_addr,
                              self.robot.romano_id.encode("ascii"),
                              port=PORT_APP)
        except NoLink:
            pass  # peer out of range; it will re-request

    # -- responder side ------------------------------------------------------------

    def _on_req(self, msg: codec.CustomData) -> None:
        if self.state == DISP_SENT_REQ:
            return  # busy with our own cycle; the peer retries
        self.state = DISP_AWAIT_PROBE
        self._publish(codec.UDP_SEND_GO)
        self._arm_retry()

    def _on_probe(self, src: str, data: bytes) -> None:
        if self.state != DISP_AWAIT_PROBE:
            return
        self.state = DISP_IDLE
        self._disarm_retry()
        rssi = self._measure(src)
        self.rounds += 1
        self.rssi_log.append((self.sim.now, rssi))
        if rssi > self.threshold_dbm:
            self._step(codec.MovementType.MOVE_FRONT)
        elif rssi < self.threshold_dbm:
            self._step(codec.MovementType.MOVE_BACK)
        # Exactly at threshold: hold position.
        if self.on_round is not None:
            self.on_round(rssi)
        self.sim.after(self.interval_us, self.initiate)

    def _measure(self, src: str) -> float:
        peer = self.positions[src]
        dx = peer.pose.x_mm - self.robot.pose.x_mm
        dy = peer.pose.y_mm - self.robot.pose.y_mm
        return self.path_loss.rssi(math.hypot(dx, dy))

    def _step(self, control_type: int) -> None:
        # Robots face away from each other, so MOVE_FRONT always widens
        # the pair and MOVE_BACK narrows it, for either robot.
        msg = codec.movement_control(control_type, self.stride_mm)
        self.robot.node.enqueue_movement(msg)
        self.moves += 1

    # -- shared plumbing --------------------------------------------------------------

    def _publish(self, type_code: int) -> None:
        payload = self.robot.romano_id.encode("ascii")
        raw = codec.encode_message(codec.CustomData(type_code, payload))
        self.robot.node.session.publish(self.peer_id, raw)

    def _arm_retry(self) -> None:
        self._disarm_retry()
        self._retry_timer = self.sim.after(self.interval_us, self._retry)

    def _disarm_retry(self) -> None:
        if self._retry_timer is not None:
            self._retry_timer.cancel()
            self._retry_timer = None

    def _retry(self) -> None:
        self._retry_timer = None
        if self.state == DISP_SENT_REQ:
            self._publish(codec.UDP_SEND_REQ)
        elif self.state == DISP_AWAIT_PROBE:
            self._publish(codec.UDP_SEND_GO)
        else:
            return
        self._arm_retry()

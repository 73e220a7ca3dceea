"""Assembles simulated worlds: broker, registry, commander and robot swarm.

A :class:`Cell` is one broker domain.  The broker, registry server and
commander sit on wired links (zero latency, lossless, exempt from the
radio gate); each robot reaches the broker over a radio link drawn from
the scenario's latency window and loss probability.  Addresses follow a
fixed scheme so ROMANO IDs are unique across cells:

    broker     fe80::212:4b00:<cell>:1
    registry   fe80::212:4b00:<cell>:2
    commander  fe80::212:4b00:<cell>:3
    relay      fe80::212:4b00:<cell>:4
    robot i    fe80::212:4b00:<cell>0:<i>
"""
from __future__ import annotations

from typing import Optional

from ..broker import Broker
from ..node import READY, RomanoNode
from ..robot import Pose, Robot
from ..server import RegistryServer
from ..session import ACTIVE, ClientSession
from ..simnet import LinkModel, Network, Simulator, WireTrace
from .config import ScenarioConfig


class WorldError(Exception):
    pass


class WorldNotReady(WorldError):
    """Establishment did not finish before the deadline."""


def broker_addr(cell: int = 1) -> str:
    return f"fe80::212:4b00:{cell:x}:1"


def server_addr(cell: int = 1) -> str:
    return f"fe80::212:4b00:{cell:x}:2"


def commander_addr(cell: int = 1) -> str:
    return f"fe80::212:4b00:{cell:x}:3"


def relay_addr(cell: int = 1) -> str:
    return f"fe80::212:4b00:{cell:x}:4"


def robot_addr(index: int, cell: int = 1) -> str:
    """Address of the ``index``-th robot (1-based) in a cell."""
    return f"fe80::212:4b00:{cell:x}0:{index:x}"


def _radio_link(cfg: ScenarioConfig) -> LinkModel:
    if cfg.latency_lo_us == cfg.latency_hi_us:
        return LinkModel.fixed(cfg.latency_lo_us, loss_prob=cfg.loss_prob)
    return LinkModel(latency_us=(cfg.latency_lo_us, cfg.latency_hi_us),
                     loss_prob=cfg.loss_prob)


class Cell:
    """One broker domain with its registry, commander and robots."""

    def __init__(self, sim: Simulator, net: Network, cfg: ScenarioConfig,
                 cell: int = 1,
                 poses: Optional[list[Pose]] = None) -> None:
        self.sim = sim
        self.net = net
        self.cfg = cfg
        self.cell = cell
        self.addr = broker_addr(cell)

        wired = (server_addr(cell), commander_addr(cell), relay_addr(cell))
        self.broker = Broker(
            sim, net, self.addr,
            dispatch_interval_us=cfg.dispatch_interval_us,
            radio_tx_interval_us=cfg.radio_tx_interval_us,
            radio_buffer_capacity=cfg.radio_buffer_capacity,
            local_clients=wired)
        for addr in wired:
            net.set_link_pair(addr, self.addr, LinkModel.fixed(0))

        heartbeats = cfg.heartbeat_period_us > 0
        self.server = RegistryServer(
            sim, ClientSession(sim, net, server_addr(cell), self.addr),
            track_heartbeats=heartbeats,
            heartbeat_period_us=cfg.heartbeat_period_us or 1_000_000)
        self.commander = ClientSession(sim, net, commander_addr(cell),
                                       self.addr)

        self.nodes: list[RomanoNode] = []
        self.robots: list[Robot] = []
        for i in range(1, cfg.n_robots + 1):
            addr = robot_addr(i, cell)
            net.set_link_pair(addr, self.addr, _radio_link(cfg))
            session = ClientSession(sim, net, addr, self.addr)
            node = RomanoNode(
                sim, session,
                heartbeat_period_us=cfg.heartbeat_period_us or None)
            pose = poses[i - 1] if poses else Pose()
            self.nodes.append(node)
            self.robots.append(Robot(sim, node, pose))

    def start(self) -> None:
        # The registry must hold its init-info subscription before any
        # join request lands; it runs on zero-latency links while robot
        # traffic takes at least one radio trip, and same-tick events
        # fire in insertion order, so starting it first suffices.
        self.server.start()
        self.commander.connect()
        for node in self.nodes:
            node.start()

    def ready(self) -> bool:
        return (self.server.running
                and self.commander.state == ACTIVE
                and all(node.phase == READY for node in self.nodes))

    def robot_addrs(self) -> list[str]:
        return [r.node.session.client_id for r in self.robots]


class World:
    """Single-cell convenience wrapper owning the simulator and network."""

    def __init__(self, cfg: ScenarioConfig,
                 poses: Optional[list[Pose]] = None) -> None:
        self.cfg = cfg
        self.sim = Simulator(seed=cfg.seed)
        self.trace = WireTrace()
        self.net = Network(self.sim, default_link=None, trace=self.trace)
        self.cell = Cell(self.sim, self.net, cfg, cell=1, poses=poses)
        self.broker = self.cell.broker
        self.server = self.cell.server
        self.commander = self.cell.commander
        self.nodes = self.cell.nodes
        self.robots = self.cell.robots

    def start(self) -> None:
        self.cell.start()

    def run_ready(self) -> None:
        """Start everything and run until the whole swarm is connected."""
        self.start()
        deadline = self.sim.now + self.cfg.ready_deadline_us
        if not self.sim.run_until_true(self.cell.ready, deadline):
            raise WorldNotReady(
                f"swarm not ready after {self.cfg.ready_deadline_us} us")

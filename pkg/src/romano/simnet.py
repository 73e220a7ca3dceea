"""Deterministic virtual-time network simulator.

Time is an integer count of microseconds.  Events execute in
(time, insertion sequence) order, so identical (seed, scenario) pairs
replay identical traces byte for byte.  All randomness — link latency
samples and loss decisions — comes from the single seeded generator
owned by the simulator.

Links are point-to-point with a latency distribution, an independent
loss probability, and a connected flag.  Ordered links never reorder:
a delivery is scheduled at max(now + sample, previous delivery time).
A multihop path is modeled as one link with k times the latency.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from heapq import heappop, heappush
from typing import Callable, Optional

US_PER_MS = 1_000
US_PER_SEC = 1_000_000

PORT_MQTTSN = 1884   # broker traffic
PORT_APP = 7400      # direct node-to-node datagrams (ranging probes)


class NoLink(Exception):
    """Send attempted where no connected link exists."""


class SimulationLimit(Exception):
    """Event budget exhausted before the run went idle."""


# -- Event loop ---------------------------------------------------------------

class Timer:
    """Handle for a scheduled callback; cancellation is lazy."""

    __slots__ = ("time_us", "fn", "cancelled")

    def __init__(self, time_us: int, fn: Callable[[], None]):
        self.time_us = time_us
        self.fn = fn
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True


class Simulator:
    def __init__(self, seed: int = 0):
        self.now = 0
        self.rng = random.Random(seed)
        self._heap: list[tuple[int, int, Timer]] = []
        self._next_seq = 0

    def at(self, time_us: int, fn: Callable[[], None]) -> Timer:
        if time_us < self.now:
            raise ValueError("cannot schedule at {} before now {}".format(
                time_us, self.now))
        timer = Timer(time_us, fn)
        heappush(self._heap, (time_us, self._next_seq, timer))
        self._next_seq += 1
        return timer

    def after(self, delay_us: int, fn: Callable[[], None]) -> Timer:
        return self.at(self.now + delay_us, fn)

    def step(self) -> bool:
        """Run the next pending event; False if the queue is empty."""
        while self._heap:
            time_us, _, timer = heappop(self._heap)
            if timer.cancelled:
                continue
            self.now = time_us
            timer.fn()
            return True
        return False

    def run_until(self, t_end_us: int) -> None:
        """Run every event scheduled at or before ``t_end_us``."""
        while self._heap:
            time_us, _, timer = self._heap[0]
            if time_us > t_end_us:
                break
            heappop(self._heap)
            if timer.cancelled:
                continue
            self.now = time_us
            timer.fn()
        self.now = max(self.now, t_end_us)

    def run_until_idle(self, max_events: int = 10_000_000) -> None:
        for _ in range(max_events):
            if not self.step():
                return
        raise SimulationLimit(
            "still busy after {} events; a recurring timer is likely "
            "running".format(max_events))

    def run_until_true(self, pred: Callable[[], bool], deadline_us: int) -> bool:
        """Step until ``pred()`` holds; False if the deadline passes first."""
        while not pred():
            if not self._heap or self._heap[0][0] > deadline_us:
                self.now = max(self.now, deadline_us)
                return False
            self.step()
        return True


# -- Wire trace ---------------------------------------------------------------

# Record kinds: "send" (octets put on a link), "deliver", "drop-link"
# (loss draw or scripted drop), "drop-buffer" (broker egress overflow).

@dataclass(frozen=True)
class TraceRecord:
    time_us: int
    src: str
    dst: str
    kind: str
    nbytes: int
    topic: str = ""

    def line(self) -> str:
        return "{}\t{}\t{}\t{}\t{}\t{}".format(
            self.time_us, self.src, self.dst, self.kind, self.nbytes,
            self.topic)


class WireTrace:
    def __init__(self) -> None:
        self.records: list[TraceRecord] = []

    def record(self, time_us: int, src: str, dst: str, kind: str,
               nbytes: int, topic: Optional[str]) -> None:
        self.records.append(
            TraceRecord(time_us, src, dst, kind, nbytes, topic or ""))

    def lines(self) -> list[str]:
        return [r.line() for r in self.records]

    def save(self, path) -> None:
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(r.line())
                fh.write("\n")

    def query(self, kind: Optional[str] = None, src: Optional[str] = None,
              dst: Optional[str] = None,
              topic: Optional[str] = None) -> list[TraceRecord]:
        out = []
        for r in self.records:
            if kind is not None and r.kind != kind:
                continue
            if src is not None and r.src != src:
                continue
            if dst is not None and r.dst != dst:
                continue
            if topic is not None and r.topic != topic:
                continue
            out.append(r)
        return out


# -- Links and network ---------------------------------------------------------

@dataclass
class LinkModel:
    """Latency is uniform over [lo, hi] microseconds; equal bounds fix it."""

    latency_us: tuple[int, int] = (10_000, 20_000)
    loss_prob: float = 0.0
    connected: bool = True
    ordered: bool = True

    @classmethod
    def fixed(cls, latency_us: int, **kwargs) -> "LinkModel":
        return cls(latency_us=(latency_us, latency_us), **kwargs)


@dataclass
class _Filter:
    pred: Callable[[str, str, bytes], bool]
    remaining: int


class Network:
    """Address-keyed endpoints joined by per-pair links.

    Endpoints attach a receive callback per (address, port).  A link is
    looked up by (src, dst) address pair, falling back to the default
    model; ports share the pair's link.
    """

    def __init__(self, sim: Simulator,
                 default_link: Optional[LinkModel] = None,
                 trace: Optional[WireTrace] = None):
        self.sim = sim
        self.trace = trace if trace is not None else WireTrace()
        self.default_link = default_link
        self._endpoints: dict[tuple[str, int], Callable[[str, bytes], None]] = {}
        self._links: dict[tuple[str, str], LinkModel] = {}
        self._last_delivery: dict[tuple[str, str], int] = {}
        self._filters: list[_Filter] = []
        self.sent = 0
        self.delivered = 0
        self.link_dropped = 0

    def attach(self, addr: str, on_receive: Callable[[str, bytes], None],
               port: int = PORT_MQTTSN) -> None:
        self._endpoints[(addr, port)] = on_receive

    def endpoint(self, addr: str,
                 port: int = PORT_MQTTSN) -> Optional[Callable[[str, bytes], None]]:
        """The callback attached at (addr, port), for taps and wrappers."""
        return self._endpoints.get((addr, port))

    def set_link(self, src: str, dst: str, link: LinkModel) -> None:
        self._links[(src, dst)] = link

    def set_link_pair(self, a: str, b: str, link: LinkModel) -> None:
        # Each direction keeps independent FIFO state but shares the model.
        self._links[(a, b)] = link
        self._links[(b, a)] = link

    def link_between(self, src: str, dst: str) -> Optional[LinkModel]:
        link = self._links.get((src, dst))
        return link if link is not None else self.default_link

    def set_connected(self, a: str, b: str, up: bool) -> None:
        for pair in ((a, b), (b, a)):
            link = self._links.get(pair)
            if link is None:
                raise NoLink("no explicit link between {} and {}".format(a, b))
            link.connected = up

    def add_drop_filter(self, pred: Callable[[str, str, bytes], bool],
                        count: int = 1) -> None:
        """Drop the next ``count`` packets matching ``pred`` (scripted loss)."""
        self._filters.append(_Filter(pred, count))

    def send(self, src: str, dst: str, data: bytes,
             topic: Optional[str] = None, port: int = PORT_MQTTSN) -> None:
        """Put octets on the src->dst link.

        Raises:
            NoLink: if no link exists or it is disconnected.
        """
        link = self.link_between(src, dst)
        if link is None or not link.connected:
            raise NoLink("no connected link from {} to {}".format(src, dst))
        now = self.sim.now
        self.sent += 1
        self.trace.record(now, src, dst, "send", len(data), topic)

        if self._scripted_drop(src, dst, data) or \
                (link.loss_prob > 0.0 and self.sim.rng.random() < link.loss_prob):
            self.link_dropped += 1
            self.trace.record(now, src, dst, "drop-link", len(data), topic)
            return

        lo, hi = link.latency_us
        t = now + (lo if lo == hi else self.sim.rng.randint(lo, hi))
        if link.ordered:
            t = max(t, self._last_delivery.get((src, dst), 0))
            self._last_delivery[(src, dst)] = t
        self.sim.at(t, lambda: self._deliver(src, dst, data, topic, port))

    def _scripted_drop(self, src: str, dst: str, data: bytes) -> bool:
        for f in self._filters:
            if f.remaining > 0 and f.pred(src, dst, data):
                f.remaining -= 1
                return True
        return False

    def _deliver(self, src: str, dst: str, data: bytes,
                 topic: Optional[str], port: int) -> None:
        endpoint = self._endpoints.get((dst, port))
        if endpoint is None:
            return
        self.delivered += 1
        self.trace.record(self.sim.now, src, dst, "deliver", len(data), topic)
        endpoint(src, data)

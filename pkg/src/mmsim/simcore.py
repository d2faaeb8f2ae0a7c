"""Deterministic discrete-event engine and the network plumbing on top of it."""
from __future__ import annotations

import enum
import heapq
import itertools
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .addressing import Address128
from .topology import LinkSpec, Topology


class SimulationError(Exception):
    pass


class CausalityError(SimulationError):
    pass


class ScriptMismatch(SimulationError):
    pass


@dataclass(order=True)
class Event:
    time: float
    tiebreak: int
    target: Optional[int] = field(compare=False, default=None)
    action: Callable = field(compare=False, default=None)
    args: tuple = field(compare=False, default=())
    cancelled: bool = field(compare=False, default=False)

    def cancel(self):
        self.cancelled = True


class Simulator:
    """Executes events in (time, insertion counter) order."""

    def __init__(self, record: bool = False):
        self.now = 0.0
        self._queue: list[Event] = []
        self._counter = itertools.count()
        self.executed = 0
        self.log: Optional[list[tuple]] = [] if record else None

    def schedule(self, time: float, action: Callable, *args, target: Optional[int] = None) -> Event:
        if time < self.now:
            raise CausalityError(f"event at {time} scheduled from {self.now}")
        ev = Event(time, next(self._counter), target, action, args)
        heapq.heappush(self._queue, ev)
        return ev

    def after(self, delay: float, action: Callable, *args, target: Optional[int] = None) -> Event:
        return self.schedule(self.now + delay, action, *args, target=target)

    def every(self, period: float, action: Callable, start: Optional[float] = None,
              target: Optional[int] = None):
        """Run `action()` at start + k*period; tick times are multiplied, not accumulated."""
        if period <= 0:
            raise ValueError("period must be > 0")
        t0 = period if start is None else start

        def tick(k):
            action()
            self.schedule(t0 + (k + 1) * period, tick, k + 1, target=target)

        self.schedule(t0, tick, 0, target=target)

    def __len__(self):
        return len(self._queue)

    def run_until(self, t_end: float) -> int:
        done = 0
        while self._queue and self._queue[0].time <= t_end:
            ev = heapq.heappop(self._queue)
            if ev.cancelled:
                continue
            self.now = ev.time
            if self.log is not None:
                self.log.append((ev.time, ev.tiebreak, ev.target, getattr(ev.action, "__qualname__", "?")))
            ev.action(*ev.args)
            done += 1
        self.executed += done
        if t_end > self.now:
            self.now = t_end
        return done


@dataclass(frozen=True)
class Packet:
    seq: int
    original_dst: Address128
    current_dst: Address128
    size_bytes: int = 512
    created_at: float = 0.0
    rewrite_history: tuple[tuple[int, Address128, Address128], ...] = ()
    hops: int = 0  # router-to-router links traversed inside the domain

    def rewritten(self, node: int, new_dst: Address128) -> Packet:
        return replace(self, current_dst=new_dst,
                       rewrite_history=self.rewrite_history + ((node, self.current_dst, new_dst),))


@dataclass
class Stats:
    emitted: int = 0
    replicated: int = 0
    delivered: int = 0
    buffered: int = 0
    in_flight: int = 0
    drops: Counter = field(default_factory=Counter)

    def drop(self, cause: str, n: int = 1):
        self.drops[cause] += n

    @property
    def dropped(self) -> int:
        return sum(self.drops.values())

    def imbalance(self) -> int:
        """Zero when every packet copy is accounted for."""
        created = self.emitted + self.replicated
        return created - (self.delivered + self.dropped + self.buffered + self.in_flight)


@dataclass(frozen=True)
class Delivery:
    time: float
    seq: int
    via_ar: int
    dup: bool
    hops: Optional[int] = None  # domain hops the delivered copy travelled


class ReceiveTrace:
    def __init__(self):
        self.entries: list[Delivery] = []
        self._seen: set[int] = set()

    def append(self, time: float, seq: int, via_ar: int, hops: Optional[int] = None) -> Delivery:
        if self.entries and time < self.entries[-1].time:
            raise SimulationError("receive trace times must be non-decreasing")
        d = Delivery(time, seq, via_ar, seq in self._seen, hops)
        self._seen.add(seq)
        self.entries.append(d)
        return d

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @classmethod
    def from_rows(cls, rows) -> ReceiveTrace:
        trace = cls()
        for time, seq, via in rows:
            trace.append(time, seq, via)
        return trace

    def unique_seqs(self) -> set[int]:
        return set(self._seen)


class Network:
    """Wired links with propagation delay, serialization and per-direction FIFO."""

    def __init__(self, sim: Simulator, topo: Topology, radio_delay: float = 0.002,
                 radio_bandwidth: float = 10e6):
        self.sim = sim
        self.topo = topo
        self.radio_delay = radio_delay
        self.radio_bandwidth = radio_bandwidth
        self.stats = Stats()
        self._busy: dict[tuple[int, int], float] = {}
        self._router = [k.is_router for k in topo.kinds]

    def transmit_on_link(self, link: LinkSpec, size_bytes: int, frm: int) -> float:
        """Reserve the link direction and return the arrival time at the far end."""
        to = link.other(frm)
        start = max(self.sim.now, self._busy.get((frm, to), 0.0))
        done = start + size_bytes * 8 / link.bandwidth
        self._busy[(frm, to)] = done
        return done + link.delay

    def send(self, u: int, v: int, size_bytes: int, action: Callable, *args) -> Event:
        arrival = self.transmit_on_link(self.topo.link(u, v), size_bytes, u)
        return self.sim.schedule(arrival, action, *args, target=v)

    def send_packet(self, u: int, v: int, packet: Packet, action: Callable) -> Event:
        """Data transmission; `action(v, packet, u)` runs on arrival."""
        if self._router[u] and self._router[v]:
            packet = replace(packet, hops=packet.hops + 1)
        self.stats.in_flight += 1
        return self.send(u, v, packet.size_bytes, self._arrive, v, packet, u, action)

    def _arrive(self, v, packet, u, action):
        self.stats.in_flight -= 1
        action(v, packet, u)

    def send_along(self, path: list[int], size_bytes: int, action: Callable, *args,
                   on_hop: Optional[Callable] = None):
        """Forward a control message hop by hop; `on_hop(node, prev)` at every node after the first."""
        if len(path) == 1:
            self.sim.schedule(self.sim.now, action, *args, target=path[0])
            return

        def hop(i):
            if on_hop is not None:
                on_hop(path[i], path[i - 1])
            if i == len(path) - 1:
                action(*args)
            else:
                self.send(path[i], path[i + 1], size_bytes, hop, i + 1)

        self.send(path[0], path[1], size_bytes, hop, 1)

    def forward_packet_along(self, path: list[int], packet: Packet, action: Callable):
        """Unicast a data packet along an explicit path; `action(last, packet, prev)` at the end."""
        if len(path) == 1:
            action(path[0], packet, path[0])
            return

        def hop(node, pkt, prev, i=1):
            if i == len(path) - 1:
                action(node, pkt, prev)
            else:
                self.send_packet(node, path[i + 1], pkt, lambda n, p, u: hop(n, p, u, i + 1))

        self.send_packet(path[0], path[1], packet, hop)

    def radio_send(self, ar: int, mn: int, packet: Packet, action: Callable) -> Event:
        start = max(self.sim.now, self._busy.get((ar, mn), 0.0))
        done = start + packet.size_bytes * 8 / self.radio_bandwidth
        self._busy[(ar, mn)] = done
        self.stats.in_flight += 1
        return self.sim.schedule(done + self.radio_delay, self._arrive, mn, packet, ar, action, target=mn)


@dataclass
class RadioAttachment:
    mn: int
    attached_ars: set[int] = field(default_factory=set)
    overlap_until: float = 0.0


class Radio:
    def __init__(self):
        self.attachments: dict[int, RadioAttachment] = {}

    def attach(self, mn: int, ar: int):
        att = self.attachments.setdefault(mn, RadioAttachment(mn))
        if ar not in att.attached_ars and len(att.attached_ars) >= 2:
            raise SimulationError(f"mobile {mn} already attached to two access routers")
        att.attached_ars.add(ar)

    def detach(self, mn: int, ar: int):
        att = self.attachments.get(mn)
        if att is not None:
            att.attached_ars.discard(ar)

    def is_attached(self, mn: int, ar: int) -> bool:
        att = self.attachments.get(mn)
        return att is not None and ar in att.attached_ars

    def ars(self, mn: int) -> set[int]:
        att = self.attachments.get(mn)
        return set(att.attached_ars) if att else set()


class HandoverKind(enum.Enum):
    PROACTIVE = "proactive"
    REACTIVE = "reactive"


@dataclass(frozen=True)
class MobilityEntry:
    time: float
    ar_from: int
    ar_to: int
    kind: HandoverKind = HandoverKind.PROACTIVE


@dataclass(frozen=True)
class MobilityScript:
    entries: tuple[MobilityEntry, ...] = ()

    def __post_init__(self):
        for prev, cur in zip(self.entries, self.entries[1:]):
            if cur.time <= prev.time:
                raise ScriptMismatch("mobility script times must be strictly increasing")
            if cur.ar_from != prev.ar_to:
                raise ScriptMismatch(f"entry at {cur.time} leaves {cur.ar_from}, previous entry went to {prev.ar_to}")
        for e in self.entries:
            if e.ar_from == e.ar_to:
                raise ScriptMismatch(f"entry at {e.time} does not move")


def random_walk(cells: dict[int, set[int]], start_ar: int, seed: int, count: int,
                t0: float = 1.0, dwell: float = 1.0,
                kind: HandoverKind = HandoverKind.PROACTIVE) -> MobilityScript:
    """Seeded walk over declared cell adjacency, fixed dwell time per cell."""
    rng = random.Random(seed)
    entries = []
    here = start_ar
    for k in range(count):
        choices = sorted(cells.get(here, ()) - {here})
        if not choices:
            break
        nxt = rng.choice(choices)
        entries.append(MobilityEntry(t0 + k * dwell, here, nxt, kind))
        here = nxt
    return MobilityScript(tuple(entries))


class CbrSource:
    """Constant bit rate source: seq k leaves at start + k*interval while <= stop."""

    def __init__(self, sim: Simulator, source: int, dst: Address128, interval: float, size: int,
                 start: float, stop: float, emit: Callable[[Packet], None]):
        if interval <= 0:
            raise ValueError("interval must be > 0")
        self.sim = sim
        self.source = source
        self.dst = dst
        self.interval = interval
        self.size = size
        self.start = start
        self.stop = stop
        self.emit = emit
        self.sent = 0
        if start <= stop:
            sim.schedule(start, self._fire, 0, target=source)

    @property
    def offered_load(self) -> float:
        return self.size * 8 / self.interval

    def _fire(self, k: int):
        pkt = Packet(seq=k, original_dst=self.dst, current_dst=self.dst, size_bytes=self.size,
                     created_at=self.sim.now)
        self.sent += 1
        self.emit(pkt)
        t = self.start + (k + 1) * self.interval
        if t <= self.stop:
            self.sim.schedule(t, self._fire, k + 1, target=self.source)


def cbr_emit(sim: Simulator, source: int, dst_rcoa: Address128, interval: float, size: int,
             emit: Callable[[Packet], None], start: float = 0.0, stop: float = float("inf")) -> CbrSource:
    return CbrSource(sim, source, dst_rcoa, interval, size, start, stop, emit)


def apply_mobility_event(sim: Simulator, radio: Radio, mn: int, entry: MobilityEntry,
                         overlap: float, on_handover: Callable[[int, MobilityEntry], None]):
    """Change radio attachment per the entry, then fire the scheme's handover.

    overlap > 0 keeps the MN on both ARs for [t, t + overlap); overlap == 0
    is an abrupt switch at trigger time.
    """
    if not radio.is_attached(mn, entry.ar_from):
        raise ScriptMismatch(f"mobile {mn} is not attached at {entry.ar_from} at t={sim.now}")
    for stale in radio.ars(mn) - {entry.ar_from}:
        radio.detach(mn, stale)  # an earlier overlap still running
    att = radio.attachments[mn]
    if overlap > 0:
        radio.attach(mn, entry.ar_to)
        until = att.overlap_until = sim.now + overlap

        def end_overlap():
            # a later handover supersedes this window
            if att.overlap_until == until and entry.ar_to in att.attached_ars:
                radio.detach(mn, entry.ar_from)

        sim.after(overlap, end_overlap, target=mn)
    else:
        att.overlap_until = sim.now
        radio.detach(mn, entry.ar_from)
        radio.attach(mn, entry.ar_to)
    on_handover(mn, entry)


def deliver_to_mn(sim: Simulator, trace: ReceiveTrace, stats: Stats, packet: Packet, via_ar: int) -> Delivery:
    stats.delivered += 1
    return trace.append(sim.now, packet.seq, via_ar, packet.hops)


class MobilityScheme:
    """What the scenario runner needs from a micro-mobility scheme."""

    name = "base"
    bicast = False  # proactive handovers keep the old radio link for the overlap window

    def __init__(self, net: Network, radio: Radio):
        self.net = net
        self.sim = net.sim
        self.topo = net.topo
        self.radio = radio
        self.traces: dict[int, ReceiveTrace] = defaultdict(ReceiveTrace)
        self.bindings: dict = {}

    def start(self):
        pass

    def attach(self, mn: int, ar: int):
        raise NotImplementedError

    def handover(self, mn: int, entry: MobilityEntry):
        raise NotImplementedError

    def ingress(self, br: int, packet: Packet):
        raise NotImplementedError

    def rcoa_of(self, mn: int) -> Address128:
        return self.bindings[mn].rcoa

    def radio_deliver(self, ar: int, mn: int, packet: Packet):
        self.net.radio_send(ar, mn, packet, self._radio_arrive)

    def _radio_arrive(self, mn: int, packet: Packet, ar: int):
        deliver_to_mn(self.sim, self.traces[mn], self.net.stats, packet, ar)

"""Behavioural models of Cellular IP (semi-soft handoff) and HAWAII (MSF).

Both keep per-mobile host routes on the path between the serving AR and
the anchor border router. Route installation is driven by explicit
route-update messages that travel that path hop by hop.
"""
from __future__ import annotations

import logging
from collections import Counter, defaultdict, deque
from dataclasses import dataclass
from typing import Optional

from .addressing import DEFAULT_PREFIX, Address128, AddressRegistry, MSubnetPrefix, allocate_rcoa
from .mnm import iface_for
from .simcore import MobilityEntry, MobilityScheme, Network, Packet, Radio, SimulationError
from .topology import NodeKind

log = logging.getLogger(__name__)


class BufferOverflow(SimulationError):
    pass


@dataclass
class HostRoute:
    next_hop: int
    expiry: float


@dataclass
class MobileBinding:
    mn: int
    rcoa: Address128
    serving_ar: int
    ready_at: float = 0.0


class HostRouteTable:
    """rcoa -> next hop per router, soft state, plus semi-soft bi-cast legs."""

    def __init__(self):
        self.routes: dict[int, dict[Address128, HostRoute]] = defaultdict(dict)
        self.bicast: dict[tuple[int, Address128], tuple[int, float]] = {}

    def lookup(self, router: int, rcoa: Address128, now: float) -> Optional[int]:
        r = self.routes.get(router, {}).get(rcoa)
        if r is None or r.expiry <= now:
            return None
        return r.next_hop

    def install(self, router: int, rcoa: Address128, next_hop: int, expiry: float):
        self.routes[router][rcoa] = HostRoute(next_hop, expiry)

    def bicast_leg(self, router: int, rcoa: Address128, now: float) -> Optional[int]:
        leg = self.bicast.get((router, rcoa))
        if leg is None or leg[1] <= now:
            return None
        return leg[0]

    def entries_for(self, rcoa: Address128, now: float) -> dict[int, int]:
        return {r: e.next_hop for r, t in self.routes.items()
                for a, e in t.items() if a == rcoa and e.expiry > now}


class HostRouteScheme(MobilityScheme):
    def __init__(self, net: Network, radio: Radio, anchor: int, prefix: MSubnetPrefix = DEFAULT_PREFIX,
                 route_timeout: float = 1.0, refresh: Optional[float] = 0.5,
                 registration_delay: float = 0.1):
        super().__init__(net, radio)
        if self.topo.kind(anchor) is not NodeKind.BORDER_ROUTER:
            raise ValueError(f"anchor {anchor} must be a border router")
        self.anchor = anchor
        self.prefix = prefix
        self.route_timeout = route_timeout
        self.refresh_period = refresh
        self.registration_delay = registration_delay
        self.registry = AddressRegistry()
        self.table = HostRouteTable()
        self.by_rcoa: dict[Address128, int] = {}
        self.counters: Counter = Counter()
        self.pending: set[int] = set()  # mobiles whose handover signalling is still in flight
        self._is_ar = {ar: True for ar in self.topo.access_routers}

    def start(self):
        if self.refresh_period is not None:
            self.sim.every(self.refresh_period, self._refresh_all)

    def _refresh_all(self):
        for mn in sorted(self.bindings):
            if mn in self.pending:
                continue
            b = self.bindings[mn]
            self._route_update(b.serving_ar, b.rcoa)

    def _route_update(self, ar: int, rcoa: Address128, on_hop=None):
        def install(node, prev):
            if on_hop is not None:
                on_hop(node, prev)
            self.table.install(node, rcoa, prev, self.sim.now + self.route_timeout)

        self.net.send_along(self.topo.shortest_path(ar, self.anchor), 0, _noop, on_hop=install)

    def cip_attach(self, mn: int, ar: int, anchor: Optional[int] = None) -> MobileBinding:
        if anchor is not None and anchor != self.anchor:
            raise ValueError("this domain is anchored elsewhere")
        b = self.bindings.get(mn)
        if b is None:
            rcoa = allocate_rcoa(self.registry, mn, iface_for(mn), self.prefix)
            b = MobileBinding(mn, rcoa, ar, self.sim.now + self.registration_delay)
            self.bindings[mn] = b
            self.by_rcoa[rcoa] = mn
        b.serving_ar = ar
        self._route_update(ar, b.rcoa)
        return b

    attach = cip_attach

    def ingress(self, br: int, packet: Packet):
        self.cip_forward(br, packet)

    def cip_forward(self, router: int, packet: Packet, prev: Optional[int] = None) -> list[int]:
        """Follow the host route; at an AR with no route, hand to the radio side."""
        now = self.sim.now
        rcoa = packet.current_dst
        nh = self.table.lookup(router, rcoa, now)
        if nh is None:
            if self._is_ar.get(router):
                self._at_access_router(router, packet)
                return []
            self.counters["no_route"] += 1
            self.net.stats.drop("no_route")
            return []
        outs = [nh]
        leg = self.table.bicast_leg(router, rcoa, now)
        if leg is not None and leg != nh:
            outs.append(leg)
            self.net.stats.replicated += 1
        for v in outs:
            self.net.send_packet(router, v, packet, self._on_data)
        return outs

    def _on_data(self, node: int, packet: Packet, prev: int):
        self.cip_forward(node, packet, prev)

    def _at_access_router(self, ar: int, packet: Packet):
        mn = self.by_rcoa.get(packet.current_dst)
        if mn is not None and self.radio.is_attached(mn, ar):
            self.radio_deliver(ar, mn, packet)
        else:
            self.net.stats.drop("not_attached")


class CipScheme(HostRouteScheme):
    name = "cip"
    bicast = True

    def __init__(self, *args, semisoft_window: float = 0.2, **kw):
        super().__init__(*args, **kw)
        self.semisoft_window = semisoft_window
        self.crossovers: list[tuple[float, int]] = []

    def cip_handover_semisoft(self, mn: int, ar_old: int, ar_new: int):
        """Route update from ar_new; the first router already routing for mn bi-casts."""
        if ar_old == ar_new:
            return
        b = self.bindings[mn]
        b.serving_ar = ar_new
        rcoa = b.rcoa
        found = []

        def at_hop(node, prev):
            if found:
                return
            cur = self.table.lookup(node, rcoa, self.sim.now)
            if cur is not None and cur != prev:
                found.append(node)
                self.crossovers.append((self.sim.now, node))
                if self.semisoft_window > 0:
                    until = self.sim.now + self.semisoft_window
                    self.table.bicast[(node, rcoa)] = (cur, until)
                    self._hold_old_branch(cur, rcoa, until)

        self._route_update(ar_new, rcoa, on_hop=at_hop)

    def _hold_old_branch(self, node: int, rcoa: Address128, until: float):
        # the old mapping stays valid for the whole semi-soft period
        now = self.sim.now
        seen = set()
        while node not in seen:
            seen.add(node)
            r = self.table.routes.get(node, {}).get(rcoa)
            if r is None or r.expiry <= now:
                return
            r.expiry = max(r.expiry, until)
            node = r.next_hop

    def handover(self, mn: int, entry: MobilityEntry):
        self.cip_handover_semisoft(mn, entry.ar_from, entry.ar_to)


class HawaiiScheme(HostRouteScheme):
    """Multiple Stream Forwarding: the old AR buffers, then forwards via the crossover."""

    name = "hawaii"
    bicast = False

    def __init__(self, *args, buffer_capacity: int = 256, **kw):
        super().__init__(*args, **kw)
        self.buffer_capacity = buffer_capacity
        self.buffers: dict[tuple[int, int], deque] = {}
        self.handover_log: list[dict] = []

    def hawaii_handover_msf(self, mn: int, ar_old: int, ar_new: int):
        if ar_old == ar_new:
            return
        b = self.bindings[mn]
        b.serving_ar = ar_new
        rcoa = b.rcoa
        self.radio.detach(mn, ar_old)
        self.pending.add(mn)
        self.buffers[(ar_old, mn)] = deque()
        record = {"trigger": self.sim.now, "ar_old": ar_old, "ar_new": ar_new, "buffered": 0,
                  "setup_arrival": None}
        self.handover_log.append(record)
        crossed = []

        def new_branch(node, prev):
            # routes toward ar_new up to (not including) the crossover
            if crossed:
                return
            if self.table.lookup(node, rcoa, self.sim.now) is not None:
                crossed.append(node)
                return
            self.table.install(node, rcoa, prev, self.sim.now + self.route_timeout)

        path = self.topo.shortest_path(ar_new, ar_old)
        self.net.send_along(path, 0, self._setup_at_old, mn, ar_old, ar_new, crossed, record,
                            on_hop=new_branch)

    def _setup_at_old(self, mn, ar_old, ar_new, crossed, record):
        record["setup_arrival"] = self.sim.now
        self.pending.discard(mn)
        rcoa = self.bindings[mn].rcoa
        path = self.topo.shortest_path(ar_old, ar_new)
        crossover = crossed[0] if crossed else path[-1]
        upto = path[:path.index(crossover) + 1] if crossover in path else path
        nxt = {u: v for u, v in zip(path, path[1:])}
        expiry = self.sim.now + self.route_timeout
        self.table.install(ar_old, rcoa, nxt[ar_old], expiry)
        def redirect(node, prev):
            if node in nxt:  # the new AR itself needs no host route
                self.table.install(node, rcoa, nxt[node], self.sim.now + self.route_timeout)

        if len(upto) > 1:
            self.net.send_along(upto, 0, _noop, on_hop=redirect)
        buf = self.buffers.pop((ar_old, mn), deque())
        record["buffered"] = len(buf)
        for pkt in buf:
            self.net.stats.buffered -= 1
            self.cip_forward(ar_old, pkt)

    def _at_access_router(self, ar: int, packet: Packet):
        mn = self.by_rcoa.get(packet.current_dst)
        buf = self.buffers.get((ar, mn)) if mn is not None else None
        if buf is not None:
            if len(buf) >= self.buffer_capacity:
                self.counters["buffer_overflow"] += 1
                self.net.stats.drop("buffer_overflow")
                return
            buf.append(packet)
            self.net.stats.buffered += 1
            return
        super()._at_access_router(ar, packet)

    def handover(self, mn: int, entry: MobilityEntry):
        self.hawaii_handover_msf(mn, entry.ar_from, entry.ar_to)


def _noop(*_):
    pass

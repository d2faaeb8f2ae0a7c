"""Intra-domain multicast-based micro-mobility: CAR-sets, J/L/HO and address rewrites."""
from __future__ import annotations

import enum
import logging
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field
from typing import Optional

from .addressing import (DEFAULT_PREFIX, Address128, AddressRegistry, MSubnetPrefix, allocate_rcoa,
                         cga_for, map_mcoa_to_rcoa, map_rcoa_to_mcoa)
from .multicast import PRUNE_TIMEOUT, SCAN_PERIOD, MulticastRouting
from .simcore import (HandoverKind, MobilityEntry, MobilityScheme, Network, Packet, Radio,
                      SimulationError)

log = logging.getLogger(__name__)


class NotNeighbor(SimulationError):
    pass


class UnknownMobile(SimulationError):
    pass


class MsgKind(enum.Enum):
    J = "J"
    L = "L"
    HO = "HO"


@dataclass(frozen=True)
class ControlMsg:
    kind: MsgKind
    source: int
    mcoa: Address128
    rcoa: Optional[Address128] = None

    def __post_init__(self):
        if self.kind is MsgKind.HO and self.rcoa is None:
            raise ValueError("HO message carries both RCOA and MCOA")


class EntryState(enum.Enum):
    JOINED = "Joined"
    LEFT = "Left"


@dataclass
class MembershipEntry:
    mcoa: Address128
    sr: int
    cga: Address128
    state: EntryState
    last_refresh: float
    left_at: Optional[float] = None


class MembershipTable:
    """The per-AR <MCOA, SR, CGA, State> table. Pure: no timers, no messages."""

    def __init__(self):
        self.entries: dict[Address128, MembershipEntry] = {}

    def get(self, mcoa: Address128) -> Optional[MembershipEntry]:
        return self.entries.get(mcoa)

    def on_j(self, mcoa: Address128, source: int, cga: Address128, now: float) -> MembershipEntry:
        # J is always accepted
        e = MembershipEntry(mcoa, source, cga, EntryState.JOINED, now)
        self.entries[mcoa] = e
        return e

    def on_l(self, mcoa: Address128, source: int, now: float) -> bool:
        e = self.entries.get(mcoa)
        if e is None or e.sr != source:
            return False
        if e.state is EntryState.JOINED:
            e.state = EntryState.LEFT
            e.left_at = now
        return True

    def purge(self, now: float, delayed_leave: float, stale_after: Optional[float] = None) -> list[Address128]:
        """Drop Left entries older than the delayed-leave window and Joined entries gone stale."""
        removed = []
        for mcoa, e in list(self.entries.items()):
            if e.state is EntryState.LEFT and now > e.left_at + delayed_leave:
                removed.append(mcoa)
            elif (e.state is EntryState.JOINED and stale_after is not None
                  and now - e.last_refresh >= stale_after):
                removed.append(mcoa)
        for mcoa in removed:
            del self.entries[mcoa]
        return removed

    def joined(self) -> dict[Address128, int]:
        return {m: e.sr for m, e in self.entries.items() if e.state is EntryState.JOINED}


@dataclass(frozen=True)
class CarSet:
    head: int
    members: frozenset
    cga: Address128

    def __post_init__(self):
        if self.head not in self.members:
            raise ValueError(f"CAR-set head {self.head} must be a member")


def build_carsets(cells: dict[int, set[int]]) -> dict[int, CarSet]:
    """One CAR-set per AR: itself plus its declared radio neighbours."""
    return {ar: CarSet(ar, frozenset({ar} | set(nbrs)), cga_for(ar)) for ar, nbrs in cells.items()}


@dataclass
class MobileBinding:
    mn: int
    rcoa: Address128
    mcoa: Address128
    serving_ar: int
    ready_at: float = 0.0

    def __post_init__(self):
        if self.mcoa != map_rcoa_to_mcoa(self.rcoa):
            raise ValueError("MCOA must be the algorithmic image of the RCOA")


@dataclass
class MnmTimers:
    prune_timeout: float = PRUNE_TIMEOUT
    scan_period: float = SCAN_PERIOD
    refresh: Optional[float] = 0.5  # None disables periodic J
    purge: float = 0.5
    delayed_leave: Optional[float] = None  # None: 2x max intra-CAR-set one-way delay
    registration_delay: float = 0.1


def iface_for(mn: int) -> int:
    return 0x0200_0000_0000_0000 | mn


class MnmProtocol(MobilityScheme):
    name = "mnm"
    bicast = True

    def __init__(self, net: Network, radio: Radio, cells: dict[int, set[int]], rp: int,
                 prefix: MSubnetPrefix = DEFAULT_PREFIX, timers: Optional[MnmTimers] = None,
                 registry: Optional[AddressRegistry] = None, buffer_packets: int = 0):
        super().__init__(net, radio)
        self.prefix = prefix
        self.timers = timers or MnmTimers()
        self.registry = registry if registry is not None else AddressRegistry()
        self.rp = rp
        self.multicast = MulticastRouting(net, rp, self.timers.prune_timeout, self.timers.scan_period,
                                          deliver_local=self.ar_egress_rewrite)
        self.carsets = build_carsets(cells)
        self.tables: dict[int, MembershipTable] = {ar: MembershipTable() for ar in self.carsets}
        self.serving: dict[int, set[int]] = defaultdict(set)
        self.by_rcoa: dict[Address128, int] = {}
        self.counters: Counter = Counter()
        self.buffer_packets = buffer_packets
        self.buffers: dict[tuple[int, Address128], deque] = {}
        self.crashed: set[int] = set()
        self.delayed_leave = (self.timers.delayed_leave if self.timers.delayed_leave is not None
                              else 2 * self.max_carset_delay())

    def max_carset_delay(self) -> float:
        worst = 0.0
        for cs in self.carsets.values():
            for m in cs.members:
                if m != cs.head:
                    worst = max(worst, self.topo.latency(cs.head, m))
        return worst

    def start(self):
        self.multicast.start_expiry_scan()
        self.sim.every(self.timers.purge, self._purge_all)
        if self.timers.refresh is not None:
            self.sim.every(self.timers.refresh, self._refresh_all)

    def _purge_all(self):
        for ar in sorted(self.tables):
            self.purge_left_entries(ar, self.sim.now)

    def _refresh_all(self):
        for ar in sorted(self.serving):
            self.refresh_carset(ar)

    # -- control plane

    def _cga_send(self, head: int, msg: ControlMsg):
        for member in sorted(self.carsets[head].members):
            path = self.topo.shortest_path(head, member)
            self.net.send_along(path, 0, self._dispatch, member, msg)

    def _dispatch(self, ar: int, msg: ControlMsg):
        if ar in self.crashed:
            return
        if msg.kind is MsgKind.J:
            self.on_j_message(ar, msg)
        elif msg.kind is MsgKind.L:
            self.on_l_message(ar, msg)
        else:
            self.on_ho_message(ar, msg)

    def attach_to_domain(self, mn: int, ar: int, iface: Optional[int] = None) -> MobileBinding:
        if mn in self.bindings:
            raise SimulationError(f"mobile {mn} is already attached in this domain")
        rcoa = allocate_rcoa(self.registry, mn, iface_for(mn) if iface is None else iface, self.prefix)
        binding = MobileBinding(mn, rcoa, map_rcoa_to_mcoa(rcoa), ar,
                                ready_at=self.sim.now + self.timers.registration_delay)
        self.bindings[mn] = binding
        self.by_rcoa[rcoa] = mn
        self.serving[ar].add(mn)
        self.multicast.join(ar, binding.mcoa)
        self._cga_send(ar, ControlMsg(MsgKind.J, ar, binding.mcoa))
        return binding

    attach = attach_to_domain

    def on_j_message(self, ar: int, msg: ControlMsg):
        self.tables[ar].on_j(msg.mcoa, msg.source, cga_for(msg.source), self.sim.now)
        if self.multicast.is_member(ar, msg.mcoa):
            self.multicast.refresh(ar, msg.mcoa)
        else:
            self.multicast.join(ar, msg.mcoa)

    def on_l_message(self, ar: int, msg: ControlMsg) -> bool:
        accepted = self.tables[ar].on_l(msg.mcoa, msg.source, self.sim.now)
        if not accepted:
            self.counters["l_discarded"] += 1
        return accepted

    def on_ho_message(self, ar_old: int, msg: ControlMsg):
        mn = self.by_rcoa.get(msg.rcoa)
        if mn is None or mn not in self.serving[ar_old]:
            log.info("HO at AR %d for %s which it does not serve; ignored", ar_old, msg.rcoa)
            self.counters["ho_ignored"] += 1
            return
        self.serving[ar_old].discard(mn)
        self._cga_send(ar_old, ControlMsg(MsgKind.L, ar_old, msg.mcoa))

    def initiate_handover(self, mn: int, ar_new: int, kind: HandoverKind = HandoverKind.PROACTIVE):
        binding = self.bindings[mn]
        ar_old = binding.serving_ar
        if ar_old == ar_new:
            return
        if kind is HandoverKind.PROACTIVE and ar_new not in self.carsets[ar_old].members:
            raise NotNeighbor(f"AR {ar_new} is not in the CAR-set of AR {ar_old}")
        if ar_new not in self.carsets[ar_old].members:
            self.counters["fresh_join_fallback"] += 1
        binding.serving_ar = ar_new
        self.serving[ar_new].add(mn)
        self._flush_buffer(ar_new, mn)
        self._cga_send(ar_new, ControlMsg(MsgKind.J, ar_new, binding.mcoa))
        ho = ControlMsg(MsgKind.HO, ar_new, binding.mcoa, binding.rcoa)
        self.net.send_along(self.topo.shortest_path(ar_new, ar_old), 0, self._dispatch, ar_old, ho)

    def handover(self, mn: int, entry: MobilityEntry):
        self.initiate_handover(mn, entry.ar_to, entry.kind)

    def purge_left_entries(self, ar: int, now: float) -> list[Address128]:
        if ar in self.crashed:
            return []
        removed = self.tables[ar].purge(now, self.delayed_leave, stale_after=self.timers.prune_timeout)
        prunes = []
        for mcoa in removed:
            if self.multicast.is_member(ar, mcoa):
                self.multicast.prune(ar, mcoa)
                prunes.append(mcoa)
        return prunes

    def refresh_carset(self, ar: int) -> list[ControlMsg]:
        if ar in self.crashed:
            return []
        sent = []
        for mn in sorted(self.serving.get(ar, ())):
            msg = ControlMsg(MsgKind.J, ar, self.bindings[mn].mcoa)
            self._cga_send(ar, msg)
            sent.append(msg)
        return sent

    def crash(self, ar: int):
        """Silence an AR: no refreshes, no purges, control messages ignored."""
        self.crashed.add(ar)

    # -- data plane

    def br_ingress_rewrite(self, br: int, packet: Packet) -> Packet:
        if not self.prefix.contains(packet.current_dst):
            return packet
        return packet.rewritten(br, map_rcoa_to_mcoa(packet.current_dst))

    def ingress(self, br: int, packet: Packet):
        pkt = self.br_ingress_rewrite(br, packet)
        if pkt is packet:
            self.net.stats.drop("not_msubnet")
            return
        self.multicast.ingress_tunnel_to_rp(br, pkt, self.rp)

    def ar_egress_rewrite(self, ar: int, packet: Packet) -> Optional[Packet]:
        """Restore the RCOA; radio delivery only if the mobile is attached here."""
        rcoa = map_mcoa_to_rcoa(packet.current_dst, self.prefix)
        out = packet.rewritten(ar, rcoa)
        mn = self.by_rcoa.get(rcoa)
        if mn is not None and self.radio.is_attached(mn, ar):
            if out.current_dst != out.original_dst:
                self.counters["address_violation"] += 1
            self.radio_deliver(ar, mn, out)
            return out
        if mn is not None and self.buffer_packets > 0:
            buf = self.buffers.setdefault((ar, rcoa), deque())
            if len(buf) >= self.buffer_packets:
                buf.popleft()
                self.net.stats.buffered -= 1
                self.net.stats.drop("buffer_evicted")
            buf.append(out)
            self.net.stats.buffered += 1
            return None
        self.net.stats.drop("carset_overhead")
        return None

    def _flush_buffer(self, ar: int, mn: int):
        buf = self.buffers.pop((ar, self.bindings[mn].rcoa), None)
        if not buf:
            return
        for pkt in buf:
            self.net.stats.buffered -= 1
            if self.radio.is_attached(mn, ar):
                self.radio_deliver(ar, mn, pkt)
            else:
                self.net.stats.drop("carset_overhead")


@dataclass
class Exploration:
    states: int
    terminals: int
    counterexamples: list


def explore_handover(cells: dict[int, set[int]], ar_old: int, ar_new: int,
                     purge_any_time: bool = True) -> Exploration:
    """Enumerate every arrival order of the J/HO/L messages of one handover.

    Starts with CarSet(ar_old) Joined with SR = ar_old. The new AR's J goes
    to every member of its CAR-set, the HO to ar_old, and ar_old's L (sent
    when HO arrives) to every member of its CAR-set. With purge_any_time a
    Left entry may be purged at any step, which is stricter than the
    delayed-leave timer. Terminal states are checked after a final purge.
    """
    carsets = build_carsets(cells)
    mg = map_rcoa_to_mcoa(DEFAULT_PREFIX.join(1))
    want = carsets[ar_new].members

    def table_tuple(tables):
        return tuple(sorted((ar, e.sr, e.state.value) for ar, t in tables.items()
                            for e in t.entries.values()))

    def rebuild(frozen):
        tables = {ar: MembershipTable() for ar in carsets}
        for ar, sr, state in frozen:
            e = tables[ar].on_j(mg, sr, cga_for(sr), 0.0)
            if state == EntryState.LEFT.value:
                e.state, e.left_at = EntryState.LEFT, 0.0
        return tables

    start_tables = {ar: MembershipTable() for ar in carsets}
    for ar in carsets[ar_old].members:
        start_tables[ar].on_j(mg, ar_old, cga_for(ar_old), 0.0)
    pending0 = frozenset({("HO", ar_old)} | {("J", m) for m in carsets[ar_new].members})

    seen = set()
    terminals = 0
    bad = []
    stack = [(table_tuple(start_tables), pending0, ())]
    while stack:
        frozen, pending, history = stack.pop()
        key = (frozen, pending)
        if key in seen:
            continue
        seen.add(key)
        if not pending:
            terminals += 1
            tables = rebuild(frozen)
            for t in tables.values():
                t.purge(1.0, 0.0)
            final = {ar: t.get(mg) for ar, t in tables.items()}
            joined = {ar for ar, e in final.items() if e is not None}
            if joined != set(want) or any(e.sr != ar_new for e in final.values() if e is not None):
                bad.append(history)
            continue
        steps = sorted(pending)
        if purge_any_time:
            steps += [("purge", ar) for ar, _, state in frozen if state == EntryState.LEFT.value]
        for kind, ar in steps:
            tables = rebuild(frozen)
            rest = pending
            if kind == "J":
                tables[ar].on_j(mg, ar_new, cga_for(ar_new), 0.0)
                rest = pending - {(kind, ar)}
            elif kind == "L":
                tables[ar].on_l(mg, ar_old, 0.0)
                rest = pending - {(kind, ar)}
            elif kind == "HO":
                rest = (pending - {(kind, ar)}) | {("L", m) for m in carsets[ar_old].members}
            else:
                tables[ar].purge(1.0, 0.0)
            stack.append((table_tuple(tables), rest, history + ((kind, ar),)))
    return Exploration(len(seen), terminals, bad)

"""Receiver-initiated shared-tree multicast with soft state.

One tree per group, rooted at the RP. Joins climb hop by hop toward the
root and stop at the first router already on the tree; refreshes climb
all the way. Prunes and expiries remove state bottom-up.
"""
from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Callable, Optional

from .addressing import Address128, router_address
from .simcore import Network, Packet
from .topology import NodeKind, Topology

log = logging.getLogger(__name__)

PRUNE_TIMEOUT = 1.0
SCAN_PERIOD = 0.1


class MulticastError(Exception):
    pass


class NoCandidates(MulticastError):
    pass


class InvalidRpConfig(MulticastError):
    pass


@dataclass
class RpConfig:
    candidates: frozenset
    elected: Optional[int] = None


def validate_rp_config(topo: Topology, config: RpConfig):
    bad = [c for c in sorted(config.candidates) if topo.kind(c) is not NodeKind.BORDER_ROUTER]
    if bad:
        raise InvalidRpConfig(f"RP candidates must be border routers; got {bad}")


def elect_rp(config: RpConfig) -> int:
    if not config.candidates:
        raise NoCandidates("no RP candidates configured")
    if config.elected is None:
        config.elected = min(config.candidates)
    return config.elected


@dataclass
class GroupState:
    parent: Optional[int]
    children: dict[int, float] = field(default_factory=dict)  # child -> expiry
    local_expiry: Optional[float] = None  # set while this router has a local member

    def empty(self) -> bool:
        return not self.children and self.local_expiry is None


@dataclass(frozen=True)
class StateChange:
    time: float
    router: int
    group: Address128
    change: str  # install | child | local | unlocal | unchild | remove
    child: Optional[int] = None


class MulticastRouting:
    def __init__(self, net: Network, root: int, prune_timeout: float = PRUNE_TIMEOUT,
                 scan_period: float = SCAN_PERIOD,
                 deliver_local: Optional[Callable[[int, Packet], None]] = None):
        self.net = net
        self.sim = net.sim
        self.topo = net.topo
        self.root = root
        self.prune_timeout = prune_timeout
        self.scan_period = scan_period
        self.deliver_local = deliver_local
        self.state: dict[int, dict[Address128, GroupState]] = defaultdict(dict)
        self.changes: list[StateChange] = []
        self.drops: Counter = Counter()
        self._parent_cache: dict[int, Optional[int]] = {}

    # -- queries

    def group_state(self, router: int, group: Address128) -> Optional[GroupState]:
        return self.state.get(router, {}).get(group)

    def on_tree(self, group: Address128) -> set[int]:
        return {r for r, groups in self.state.items() if group in groups}

    def tree_edges(self, group: Address128) -> set[tuple[int, int]]:
        """(parent, child) pairs currently installed for the group."""
        edges = set()
        for r, groups in self.state.items():
            st = groups.get(group)
            if st is not None:
                edges.update((r, c) for c in st.children)
        return edges

    def is_member(self, router: int, group: Address128) -> bool:
        st = self.group_state(router, group)
        return st is not None and st.local_expiry is not None

    def upstream(self, router: int) -> Optional[int]:
        if router not in self._parent_cache:
            if router == self.root:
                self._parent_cache[router] = None
            else:
                self._parent_cache[router] = self.topo.shortest_path(router, self.root)[1]
        return self._parent_cache[router]

    # -- state transitions

    def _record(self, out: list, router, group, change, child=None):
        sc = StateChange(self.sim.now, router, group, change, child)
        self.changes.append(sc)
        out.append(sc)

    def _install(self, router: int, group: Address128, out: list) -> GroupState:
        st = GroupState(self.upstream(router))
        self.state[router][group] = st
        self._record(out, router, group, "install")
        return st

    def join(self, router: int, group: Address128) -> list[StateChange]:
        """Add a local member at `router` and graft it onto the tree.

        The returned list fills in as the join travels upstream.
        """
        out: list[StateChange] = []
        st = self.group_state(router, group)
        fresh = st is None
        if fresh:
            st = self._install(router, group, out)
        if st.local_expiry is None:
            self._record(out, router, group, "local")
        st.local_expiry = self.sim.now + self.prune_timeout
        if fresh and st.parent is not None:
            self.net.send(router, st.parent, 0, self._on_join, st.parent, router, group, out, False)
        return out

    def refresh(self, router: int, group: Address128) -> list[StateChange]:
        """Periodic join: refreshes (or re-creates) state at every hop to the root."""
        out: list[StateChange] = []
        st = self.group_state(router, group)
        if st is None:
            st = self._install(router, group, out)
        if st.local_expiry is None:
            self._record(out, router, group, "local")
        st.local_expiry = self.sim.now + self.prune_timeout
        if st.parent is not None:
            self.net.send(router, st.parent, 0, self._on_join, st.parent, router, group, out, True)
        return out

    def _on_join(self, router: int, child: int, group: Address128, out: list, refresh: bool):
        st = self.group_state(router, group)
        fresh = st is None
        if fresh:
            st = self._install(router, group, out)
        if child not in st.children:
            self._record(out, router, group, "child", child)
        st.children[child] = self.sim.now + self.prune_timeout
        if st.parent is not None and (fresh or refresh):
            self.net.send(router, st.parent, 0, self._on_join, st.parent, router, group, out, refresh)

    def prune(self, router: int, group: Address128) -> list[StateChange]:
        out: list[StateChange] = []
        st = self.group_state(router, group)
        if st is None or st.local_expiry is None:
            log.warning("prune for %s at router %d which is not joined", group, router)
            self.drops["prune_not_joined"] += 1
            return out
        st.local_expiry = None
        self._record(out, router, group, "unlocal")
        self._maybe_remove(router, group, out)
        return out

    def _maybe_remove(self, router: int, group: Address128, out: list):
        st = self.group_state(router, group)
        if st is None or not st.empty():
            return
        del self.state[router][group]
        self._record(out, router, group, "remove")
        if st.parent is not None:
            self.net.send(router, st.parent, 0, self._on_prune, st.parent, router, group, out)

    def _on_prune(self, router: int, child: int, group: Address128, out: list):
        st = self.group_state(router, group)
        if st is None or child not in st.children:
            return
        del st.children[child]
        self._record(out, router, group, "unchild", child)
        self._maybe_remove(router, group, out)

    def expire_soft_state(self, router: int, now: Optional[float] = None) -> list[StateChange]:
        now = self.sim.now if now is None else now
        out: list[StateChange] = []
        for group, st in list(self.state.get(router, {}).items()):
            for child, expiry in sorted(st.children.items()):
                if expiry <= now:
                    del st.children[child]
                    self._record(out, router, group, "unchild", child)
            if st.local_expiry is not None and st.local_expiry <= now:
                st.local_expiry = None
                self._record(out, router, group, "unlocal")
            self._maybe_remove(router, group, out)
        return out

    def start_expiry_scan(self):
        def scan():
            for router in sorted(self.state):
                if self.state[router]:
                    self.expire_soft_state(router)

        self.sim.every(self.scan_period, scan)

    # -- data plane

    def forward_multicast(self, router: int, packet: Packet, arrival: Optional[int] = None) -> list[int]:
        """Replicate onto every live child link (never back to `arrival`); local members get a copy."""
        now = self.sim.now
        st = self.group_state(router, packet.current_dst)
        if st is None:
            self.drops["no_state"] += 1
            self.net.stats.drop("no_state")
            return []
        outs = [c for c in sorted(st.children) if st.children[c] > now and c != arrival]
        local = st.local_expiry is not None and st.local_expiry > now and self.deliver_local is not None
        n = len(outs) + int(local)
        if n == 0:
            self.drops["no_branch"] += 1
            self.net.stats.drop("no_branch")
            return []
        self.net.stats.replicated += n - 1
        for child in outs:
            self.net.send_packet(router, child, packet, self._on_data)
        if local:
            self.deliver_local(router, packet)
        return outs

    def _on_data(self, node: int, packet: Packet, prev: int):
        self.forward_multicast(node, packet, prev)

    def ingress_tunnel_to_rp(self, br: int, packet: Packet, rp: Optional[int] = None) -> int:
        """Unicast-encapsulate toward the RP, which then multicasts. Returns tunnel hop count."""
        rp = self.root if rp is None else rp
        if br == rp:
            self.forward_multicast(rp, packet)
            return 0
        path = self.topo.shortest_path(br, rp)
        group = packet.current_dst
        outer = packet.rewritten(br, router_address(rp))

        def decap(node, pkt, prev):
            self.forward_multicast(node, pkt.rewritten(node, group))

        self.net.forward_packet_along(path, outer, decap)
        return len(path) - 1

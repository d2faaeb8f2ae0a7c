"""Domain network graph: trees for the handover experiments plus explicit graphs."""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field


class TopologyError(Exception):
    pass


class InvalidSpec(TopologyError):
    pass


class Unreachable(TopologyError):
    pass


class NodeKind(enum.Enum):
    BORDER_ROUTER = "BorderRouter"
    INTERIOR_ROUTER = "InteriorRouter"
    ACCESS_ROUTER = "AccessRouter"
    MOBILE_NODE = "MobileNode"
    CORRESPONDENT_HOST = "CorrespondentHost"

    @property
    def is_router(self) -> bool:
        return self in (NodeKind.BORDER_ROUTER, NodeKind.INTERIOR_ROUTER, NodeKind.ACCESS_ROUTER)


@dataclass(frozen=True)
class LinkSpec:
    a: int
    b: int
    delay: float
    bandwidth: float = 10e6

    def __post_init__(self):
        if self.delay <= 0:
            raise InvalidSpec(f"link {self.a}-{self.b}: delay must be > 0")
        if self.bandwidth <= 0:
            raise InvalidSpec(f"link {self.a}-{self.b}: bandwidth must be > 0")
        if self.a == self.b:
            raise InvalidSpec(f"self-loop on node {self.a}")

    @property
    def key(self) -> tuple[int, int]:
        return (min(self.a, self.b), max(self.a, self.b))

    def other(self, node: int) -> int:
        if node == self.a:
            return self.b
        if node == self.b:
            return self.a
        raise ValueError(f"node {node} is not an endpoint of {self.key}")


@dataclass(frozen=True)
class TreeSpec:
    depth: int = 3
    fanout: int = 2
    link_delay: float = 0.010
    bandwidth: float = 10e6


@dataclass
class Topology:
    """Nodes are dense ids 0..N-1; links are bidirectional and symmetric.

    Mobile nodes carry no wired links and are excluded from the
    connectivity requirement (they attach over radio).
    """

    kinds: list[NodeKind]
    links: list[LinkSpec]
    _adj: dict[int, dict[int, LinkSpec]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._adj = {n: {} for n in range(len(self.kinds))}
        for link in self.links:
            for end in (link.a, link.b):
                if end not in self._adj:
                    raise InvalidSpec(f"link endpoint {end} is not a node")
            if link.b in self._adj[link.a]:
                raise InvalidSpec(f"duplicate link {link.key}")
            self._adj[link.a][link.b] = link
            self._adj[link.b][link.a] = link
        self._validate()

    def _validate(self):
        if not self.border_routers:
            raise InvalidSpec("topology needs at least one BorderRouter")
        if not self.access_routers:
            raise InvalidSpec("topology needs at least one AccessRouter")
        wired = [n for n, k in enumerate(self.kinds) if k is not NodeKind.MOBILE_NODE]
        seen = {wired[0]}
        todo = deque([wired[0]])
        while todo:
            u = todo.popleft()
            for v in self._adj[u]:
                if v not in seen:
                    seen.add(v)
                    todo.append(v)
        missing = [n for n in wired if n not in seen]
        if missing:
            raise InvalidSpec(f"topology is not connected; unreachable nodes {missing}")

    def __len__(self):
        return len(self.kinds)

    def kind(self, node: int) -> NodeKind:
        return self.kinds[node]

    def nodes_of(self, kind: NodeKind) -> list[int]:
        return [n for n, k in enumerate(self.kinds) if k is kind]

    @property
    def border_routers(self) -> list[int]:
        return self.nodes_of(NodeKind.BORDER_ROUTER)

    @property
    def access_routers(self) -> list[int]:
        return self.nodes_of(NodeKind.ACCESS_ROUTER)

    @property
    def routers(self) -> list[int]:
        return [n for n, k in enumerate(self.kinds) if k.is_router]

    def neighbors(self, node: int) -> list[int]:
        return sorted(self._adj[node])

    def link(self, a: int, b: int) -> LinkSpec:
        try:
            return self._adj[a][b]
        except KeyError:
            raise Unreachable(f"no link between {a} and {b}") from None

    def _check(self, *nodes: int):
        for n in nodes:
            if not 0 <= n < len(self.kinds):
                raise Unreachable(f"unknown node {n}")

    def hop_distances(self, target: int) -> dict[int, int]:
        self._check(target)
        dist = {target: 0}
        todo = deque([target])
        while todo:
            u = todo.popleft()
            for v in self._adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    todo.append(v)
        return dist

    def shortest_path(self, a: int, b: int) -> list[int]:
        """Minimal-hop path a..b; ties go to the lowest next NodeId at every step."""
        self._check(a, b)
        dist = self.hop_distances(b)
        if a not in dist:
            raise Unreachable(f"no path from {a} to {b}")
        path = [a]
        node = a
        while node != b:
            node = min(v for v in self._adj[node] if dist.get(v) == dist[node] - 1)
            path.append(node)
        return path

    def hops(self, a: int, b: int) -> int:
        return len(self.shortest_path(a, b)) - 1

    def path_latency(self, path: list[int], size_bytes: int = 0) -> float:
        """Idle-network latency along a path: per hop propagation + serialization."""
        total = 0.0
        for u, v in zip(path, path[1:]):
            link = self.link(u, v)
            total += link.delay + size_bytes * 8 / link.bandwidth
        return total

    def latency(self, a: int, b: int, size_bytes: int = 0) -> float:
        return self.path_latency(self.shortest_path(a, b), size_bytes)

    def fork_router(self, root: int, ar_old: int, ar_new: int) -> int:
        """Deepest node shared by the root->ar_old and root->ar_new paths."""
        p_old = self.shortest_path(root, ar_old)
        p_new = self.shortest_path(root, ar_new)
        fork = root
        for u, v in zip(p_old, p_new):
            if u != v:
                break
            fork = u
        return fork

    def add_node(self, kind: NodeKind, links: tuple[tuple[int, float, float], ...] = ()) -> tuple[Topology, int]:
        """Return a new topology with one extra node; links are (peer, delay, bandwidth)."""
        node = len(self.kinds)
        new_links = [LinkSpec(node, peer, delay, bw) for peer, delay, bw in links]
        return Topology(self.kinds + [kind], self.links + new_links), node


def build_tree(spec: TreeSpec) -> Topology:
    """Complete tree: BR root, interior routers, fanout**depth access routers as leaves.

    Nodes are numbered breadth-first, so the root is 0 and leaves are the
    highest ids, left to right.
    """
    if spec.depth < 1 or spec.fanout < 1:
        raise InvalidSpec(f"depth and fanout must be >= 1 (got {spec.depth}, {spec.fanout})")
    kinds = [NodeKind.BORDER_ROUTER]
    links = []
    level = [0]
    for d in range(1, spec.depth + 1):
        kind = NodeKind.ACCESS_ROUTER if d == spec.depth else NodeKind.INTERIOR_ROUTER
        nxt = []
        for parent in level:
            for _ in range(spec.fanout):
                node = len(kinds)
                kinds.append(kind)
                links.append(LinkSpec(parent, node, spec.link_delay, spec.bandwidth))
                nxt.append(node)
        level = nxt
    return Topology(kinds, links)


def leaf_order(topo: Topology, root: int) -> list[int]:
    """Access routers in depth-first order from root, children visited by id."""
    order = []
    seen = {root}
    stack = [root]
    while stack:
        u = stack.pop()
        if topo.kind(u) is NodeKind.ACCESS_ROUTER:
            order.append(u)
        children = [v for v in topo.neighbors(u) if v not in seen and topo.kind(v).is_router]
        seen.update(children)
        stack.extend(reversed(children))
    return order


def linear_cells(topo: Topology, root: int) -> dict[int, set[int]]:
    """Cell adjacency for a line of cells following the leaf order."""
    order = leaf_order(topo, root)
    cells = {ar: set() for ar in topo.access_routers}
    for a, b in zip(order, order[1:]):
        cells[a].add(b)
        cells[b].add(a)
    return cells


def _subtree_nodes_at(topo: Topology, top: int, parent: int, dist: int) -> list[int]:
    # routers exactly `dist` hops below `top` inside the subtree entered from `parent`
    frontier = [top]
    prev = {top: parent}
    for _ in range(dist):
        nxt = []
        for u in frontier:
            for v in topo.neighbors(u):
                if v != prev[u] and topo.kind(v).is_router:
                    prev[v] = u
                    nxt.append(v)
        frontier = nxt
    return frontier


def handover_pair(topo: Topology, root: int, old_hops: int, new_hops: int) -> tuple[Topology, int, int]:
    """Pick (ar_old, ar_new) whose fork router is old_hops/new_hops away from them.

    Searches forks breadth-first from the root. When the tree has no access
    router at the requested distance on one side, a stub access router is
    grafted onto the router one hop short of it. The pair is chosen to be
    adjacent in leaf order (rightmost on the old side, leftmost on the new).
    """
    if old_hops < 1 or new_hops < 1:
        raise InvalidSpec("fork distances must be >= 1")
    dist = topo.hop_distances(root)
    forks = sorted((n for n in topo.routers if topo.kind(n) is not NodeKind.ACCESS_ROUTER),
                   key=lambda n: (dist[n], n))
    for allow_graft in (False, True):
        for fork in forks:
            picks = _pair_at_fork(topo, dist, fork, old_hops, new_hops, allow_graft)
            if picks is None:
                continue
            chosen = []
            for what, node in picks:
                if what == "graft":
                    link = topo.link(node, topo.neighbors(node)[0])
                    topo, node = topo.add_node(NodeKind.ACCESS_ROUTER, ((node, link.delay, link.bandwidth),))
                chosen.append(node)
            return topo, chosen[0], chosen[1]
    raise InvalidSpec(f"no fork with distances ({old_hops}, {new_hops}) in this topology")


def _pair_at_fork(topo, dist, fork, old_hops, new_hops, allow_graft):
    children = [v for v in topo.neighbors(fork) if dist.get(v, -1) == dist[fork] + 1]
    if len(children) < 2:
        return None
    picks = []
    for child, hops, pick_last in ((children[0], old_hops, True), (children[1], new_hops, False)):
        ars = [n for n in _subtree_nodes_at(topo, child, fork, hops - 1)
               if topo.kind(n) is NodeKind.ACCESS_ROUTER]
        if ars:
            picks.append(("ar", ars[-1] if pick_last else ars[0]))
            continue
        if not allow_graft:
            return None
        if hops == 1:
            above = [fork]
        else:
            above = [n for n in _subtree_nodes_at(topo, child, fork, hops - 2)
                     if topo.kind(n) is not NodeKind.ACCESS_ROUTER]
        if not above:
            return None
        picks.append(("graft", above[-1] if pick_last else above[0]))
    return picks

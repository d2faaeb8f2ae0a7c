"""Small hand-built domains used by tests, acceptance checks and scripts."""
from __future__ import annotations

from .topology import LinkSpec, NodeKind, Topology

# seven cells in a hexagonal cluster: AR1 in the middle, AR2..AR7 around it
HEX_NAMES = {f"AR{k}": k + 1 for k in range(1, 8)}  # AR1 -> node 2 ... AR7 -> node 8


def hex_domain(link_delay: float = 0.010) -> tuple[Topology, dict[int, set[int]]]:
    """BR0 - R1 - {AR1..AR7}, with hexagonal cell adjacency."""
    kinds = [NodeKind.BORDER_ROUTER, NodeKind.INTERIOR_ROUTER] + [NodeKind.ACCESS_ROUTER] * 7
    links = [LinkSpec(0, 1, link_delay)] + [LinkSpec(1, n, link_delay) for n in range(2, 9)]
    topo = Topology(kinds, links)
    centre = HEX_NAMES["AR1"]
    ring = [HEX_NAMES[f"AR{k}"] for k in range(2, 8)]
    cells: dict[int, set[int]] = {centre: set(ring)}
    for i, ar in enumerate(ring):
        cells[ar] = {centre, ring[i - 1], ring[(i + 1) % len(ring)]}
    return topo, cells


def two_border_graph(link_delay: float = 0.010) -> dict:
    """Graph section for a domain with two BRs over a shared interior.

    BR0 and BR1 both attach to R2; R2 feeds R3 and R4; ARs 5,6 hang off R3
    and ARs 7,8 off R4. BR1 also has a direct link to R4.
    """
    kinds = ["BorderRouter", "BorderRouter", "InteriorRouter", "InteriorRouter", "InteriorRouter",
             "AccessRouter", "AccessRouter", "AccessRouter", "AccessRouter"]
    edges = [(0, 2), (1, 2), (2, 3), (2, 4), (1, 4), (3, 5), (3, 6), (4, 7), (4, 8)]
    return {
        "nodes": [{"id": i, "kind": k} for i, k in enumerate(kinds)],
        "links": [{"a": a, "b": b, "delay": link_delay} for a, b in edges],
    }

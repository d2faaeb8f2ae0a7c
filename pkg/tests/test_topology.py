import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmsim.topology import (InvalidSpec, LinkSpec, NodeKind, Topology, TreeSpec, Unreachable,
                            build_tree, handover_pair, leaf_order, linear_cells)


def as_nx(topo):
    g = nx.Graph()
    g.add_nodes_from(range(len(topo)))
    for l in topo.links:
        g.add_edge(l.a, l.b)
    return g


def root_path(topo, root, node):
    return topo.shortest_path(root, node)


def test_degenerate_chain():
    t = build_tree(TreeSpec(depth=1, fanout=1))
    assert t.border_routers == [0]
    assert t.access_routers == [1]
    assert len(t.links) == 1


def test_depth3_binary_counts():
    t = build_tree(TreeSpec(depth=3, fanout=2))
    assert len(t.access_routers) == 8
    assert len(t.routers) == 15


def test_depth6_builds():
    t = build_tree(TreeSpec(depth=6, fanout=2))
    assert len(t.access_routers) == 64


@given(st.integers(1, 5), st.integers(1, 3))
def test_every_ar_at_depth(depth, fanout):
    t = build_tree(TreeSpec(depth=depth, fanout=fanout))
    for ar in t.access_routers:
        assert t.hops(0, ar) == depth


def test_path_to_self():
    t = build_tree(TreeSpec())
    assert t.shortest_path(5, 5) == [5]
    assert t.hops(5, 5) == 0


def test_root_to_leaf_and_siblings():
    t = build_tree(TreeSpec())
    assert len(t.shortest_path(0, 7)) == 4
    assert t.hops(7, 8) == 2
    assert len(t.shortest_path(7, 8)) == 3


def test_path_lengths_match_bfs():
    t = build_tree(TreeSpec(depth=4, fanout=3))
    g = as_nx(t)
    for a in t.access_routers[:10]:
        for b in t.access_routers[-10:]:
            assert t.hops(a, b) == nx.shortest_path_length(g, a, b)
            path = t.shortest_path(a, b)
            assert all(g.has_edge(u, v) for u, v in zip(path, path[1:]))


def test_fork_router_cases():
    t = build_tree(TreeSpec())
    assert t.fork_router(0, 9, 9) == 9
    assert t.fork_router(0, 7, 8) == 3
    f = t.fork_router(0, 7, 14)
    assert f == 0
    assert (t.hops(f, 7), t.hops(f, 14)) == (3, 3)


@settings(max_examples=60)
@given(st.integers(2, 4), st.integers(2, 3), st.data())
def test_fork_is_lca(depth, fanout, data):
    t = build_tree(TreeSpec(depth=depth, fanout=fanout))
    a = data.draw(st.sampled_from(t.access_routers))
    b = data.draw(st.sampled_from(t.access_routers))
    f = t.fork_router(0, a, b)
    tree = nx.bfs_tree(as_nx(t), 0)
    assert f == nx.lowest_common_ancestor(tree, a, b)
    pa, pb = root_path(t, 0, a), root_path(t, 0, b)
    shared = [x for x in pa if x in pb]
    assert f in pa and f in pb and f == shared[-1]


def test_bad_specs_rejected():
    with pytest.raises(InvalidSpec):
        build_tree(TreeSpec(depth=0))
    with pytest.raises(InvalidSpec):
        LinkSpec(0, 1, delay=-0.01)
    with pytest.raises(InvalidSpec):
        Topology([NodeKind.BORDER_ROUTER], [])  # no AR
    with pytest.raises(InvalidSpec):
        # disconnected AR
        Topology([NodeKind.BORDER_ROUTER, NodeKind.ACCESS_ROUTER, NodeKind.ACCESS_ROUTER],
                 [LinkSpec(0, 1, 0.01)])


def test_unreachable_mobile_node():
    t = build_tree(TreeSpec(depth=1, fanout=1))
    t, mn = t.add_node(NodeKind.MOBILE_NODE)
    with pytest.raises(Unreachable):
        t.shortest_path(0, mn)


def test_path_latency_oracle():
    t = build_tree(TreeSpec(depth=3, fanout=2, link_delay=0.010))
    assert t.latency(0, 7, 512) == pytest.approx(3 * (0.010 + 512 * 8 / 10e6))
    assert t.latency(0, 7) == pytest.approx(0.030)


def test_leaf_order_and_linear_cells():
    t = build_tree(TreeSpec())
    order = leaf_order(t, 0)
    assert order == list(range(7, 15))
    cells = linear_cells(t, 0)
    assert cells[7] == {8}
    assert cells[10] == {9, 11}


@pytest.mark.parametrize("pair", [(1, 1), (2, 2), (3, 2), (3, 3), (2, 3), (3, 1)])
def test_handover_pair_distances(pair):
    t0 = build_tree(TreeSpec())
    t, old, new = handover_pair(t0, 0, *pair)
    f = t.fork_router(0, old, new)
    assert (t.hops(f, old), t.hops(f, new)) == pair
    assert t.kind(old) is t.kind(new) is NodeKind.ACCESS_ROUTER


def test_handover_pair_prefers_existing_ars():
    t0 = build_tree(TreeSpec())
    for pair in [(1, 1), (2, 2), (3, 3)]:
        t, _, _ = handover_pair(t0, 0, *pair)
        assert len(t) == len(t0)

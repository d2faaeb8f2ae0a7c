import ipaddress

import pytest

from mmsim.addressing import DEFAULT_PREFIX, cga_for, map_rcoa_to_mcoa
from mmsim.layouts import HEX_NAMES, hex_domain
from mmsim.mnm import (ControlMsg, EntryState, MembershipTable, MnmProtocol, MnmTimers, MsgKind,
                       NotNeighbor, explore_handover)
from mmsim.simcore import HandoverKind, Network, Packet, Radio, Simulator
from mmsim.topology import LinkSpec, NodeKind, Topology

AR = HEX_NAMES
MG = map_rcoa_to_mcoa(DEFAULT_PREFIX.join(1))


class Rig:
    def __init__(self, timers=None, topo=None, cells=None, buffer_packets=0):
        if topo is None:
            topo, cells = hex_domain()
        self.topo, self.mn = topo.add_node(NodeKind.MOBILE_NODE)
        self.sim = Simulator()
        self.net = Network(self.sim, self.topo)
        self.radio = Radio()
        self.p = MnmProtocol(self.net, self.radio, cells, rp=0, timers=timers or MnmTimers(),
                             buffer_packets=buffer_packets)
        self.p.start()

    def attach(self, ar):
        self.radio.attach(self.mn, ar)
        return self.p.attach(self.mn, ar)

    def entry(self, ar, binding):
        return self.p.tables[ar].get(binding.mcoa)

    def run(self, t):
        self.sim.run_until(t)


# -- the table rules on their own


def test_j_creates_and_overrides():
    t = MembershipTable()
    e = t.on_j(MG, 2, cga_for(2), 0.0)
    assert (e.sr, e.cga, e.state) == (2, cga_for(2), EntryState.JOINED)
    e = t.on_j(MG, 6, cga_for(6), 0.1)
    assert (e.sr, e.cga) == (6, cga_for(6))


def test_j_revives_left_entry():
    t = MembershipTable()
    t.on_j(MG, 2, cga_for(2), 0.0)
    t.on_l(MG, 2, 0.1)
    assert t.get(MG).state is EntryState.LEFT
    t.on_j(MG, 2, cga_for(2), 0.2)
    assert t.get(MG).state is EntryState.JOINED


def test_l_only_from_current_sr():
    t = MembershipTable()
    assert t.on_l(MG, 2, 0.0) is False
    t.on_j(MG, 6, cga_for(6), 0.0)
    assert t.on_l(MG, 2, 0.1) is False
    assert t.get(MG).state is EntryState.JOINED
    assert t.on_l(MG, 6, 0.2) is True
    assert t.get(MG).state is EntryState.LEFT


def test_purge_window():
    t = MembershipTable()
    t.on_j(MG, 2, cga_for(2), 0.0)
    t.on_l(MG, 2, 1.0)
    assert t.purge(1.05, 0.05) == []
    assert t.purge(1.06, 0.05) == [MG]
    assert t.purge(2.0, 0.05) == []


# -- protocol in the simulator


def test_attach_joins_whole_carset():
    rig = Rig()
    b = rig.attach(AR["AR1"])
    rig.run(0.5)
    for name, node in AR.items():
        e = rig.entry(node, b)
        assert (e.sr, e.cga, e.state) == (AR["AR1"], cga_for(AR["AR1"]), EntryState.JOINED), name
        assert rig.p.multicast.is_member(node, b.mcoa)


def test_single_ar_domain():
    topo = Topology([NodeKind.BORDER_ROUTER, NodeKind.ACCESS_ROUTER], [LinkSpec(0, 1, 0.01)])
    rig = Rig(topo=topo, cells={1: set()})
    b = rig.attach(1)
    rig.run(0.5)
    assert rig.p.multicast.on_tree(b.mcoa) == {0, 1}


def test_two_mobiles_disjoint_groups():
    rig = Rig()
    b1 = rig.attach(AR["AR1"])
    mn2 = rig.mn + 1  # bindings only need a distinct id
    rig.radio.attach(mn2, AR["AR3"])
    b2 = rig.p.attach(mn2, AR["AR3"])
    assert b1.mcoa != b2.mcoa and b1.rcoa != b2.rcoa


def test_hex_handover_converges():
    rig = Rig()
    b = rig.attach(AR["AR1"])
    rig.run(1.0)
    rig.radio.attach(rig.mn, AR["AR5"])
    rig.p.initiate_handover(rig.mn, AR["AR5"])
    rig.run(3.0)
    car5 = {AR[n] for n in ("AR1", "AR4", "AR5", "AR6")}
    for node in AR.values():
        e = rig.entry(node, b)
        if node in car5:
            assert (e.sr, e.state) == (AR["AR5"], EntryState.JOINED)
            assert rig.p.multicast.is_member(node, b.mcoa)
        else:
            assert e is None
            assert not rig.p.multicast.is_member(node, b.mcoa)


def test_ho_sends_l_on_old_cga():
    rig = Rig()
    rig.attach(AR["AR1"])
    rig.run(1.0)
    got = []
    orig = rig.p.on_l_message
    rig.p.on_l_message = lambda ar, msg: (got.append((ar, msg.source)), orig(ar, msg))[1]
    rig.radio.attach(rig.mn, AR["AR5"])
    rig.p.initiate_handover(rig.mn, AR["AR5"])
    rig.run(1.5)
    assert sorted(a for a, _ in got) == sorted(AR.values())
    assert {s for _, s in got} == {AR["AR1"]}


def test_ho_for_unknown_mobile_is_noop():
    rig = Rig()
    b = rig.attach(AR["AR1"])
    rig.p.on_ho_message(AR["AR3"], ControlMsg(MsgKind.HO, AR["AR4"], b.mcoa, b.rcoa))
    assert rig.p.counters["ho_ignored"] == 1


def test_late_l_after_j_is_discarded_at_dual_member():
    rig = Rig()
    b = rig.attach(AR["AR1"])
    rig.run(1.0)
    ar4 = AR["AR4"]
    rig.p.on_j_message(ar4, ControlMsg(MsgKind.J, AR["AR5"], b.mcoa))
    assert rig.p.on_l_message(ar4, ControlMsg(MsgKind.L, AR["AR1"], b.mcoa)) is False
    assert rig.entry(ar4, b).sr == AR["AR5"]


def test_l_before_j_survives_delayed_leave():
    rig = Rig(MnmTimers(refresh=None))  # AR1 would otherwise keep re-asserting itself
    b = rig.attach(AR["AR1"])
    rig.run(1.0)
    ar4 = AR["AR4"]
    rig.p.on_l_message(ar4, ControlMsg(MsgKind.L, AR["AR1"], b.mcoa))
    assert rig.p.purge_left_entries(ar4, rig.sim.now) == []  # inside the window
    rig.p.on_j_message(ar4, ControlMsg(MsgKind.J, AR["AR5"], b.mcoa))
    rig.run(1.9)
    e = rig.entry(ar4, b)
    assert (e.sr, e.state) == (AR["AR5"], EntryState.JOINED)


def test_purge_happens_after_window():
    timers = MnmTimers(refresh=None, purge=0.5, delayed_leave=0.2)
    rig = Rig(timers)
    b = rig.attach(AR["AR1"])
    rig.run(0.3)
    ar2 = AR["AR2"]
    rig.p.on_l_message(ar2, ControlMsg(MsgKind.L, AR["AR1"], b.mcoa))  # Left at t=0.3
    rig.run(0.5)
    assert rig.entry(ar2, b) is not None
    rig.run(1.0)  # window ends at 0.5, so the 0.5 tick keeps it and the 1.0 tick removes it
    assert rig.entry(ar2, b) is None


def test_proactive_to_non_neighbour_rejected():
    rig = Rig()
    rig.attach(AR["AR2"])
    with pytest.raises(NotNeighbor):
        rig.p.initiate_handover(rig.mn, AR["AR5"])  # AR2 and AR5 are opposite on the ring


def test_reactive_to_non_neighbour_falls_back():
    rig = Rig()
    b = rig.attach(AR["AR2"])
    rig.run(1.0)
    rig.radio.detach(rig.mn, AR["AR2"])
    rig.radio.attach(rig.mn, AR["AR5"])
    rig.p.initiate_handover(rig.mn, AR["AR5"], HandoverKind.REACTIVE)
    rig.run(2.0)
    assert rig.p.counters["fresh_join_fallback"] == 1
    assert rig.entry(AR["AR5"], b).sr == AR["AR5"]


def test_refresh_keeps_tree_and_crash_expires_it():
    rig = Rig()
    b = rig.attach(AR["AR1"])
    rig.run(10.0)
    assert rig.p.multicast.on_tree(b.mcoa) >= set(AR.values())
    rig.p.crash(AR["AR1"])
    crashed_at = rig.sim.now
    rig.run(crashed_at + 1.0 + 0.1 + 0.1)
    assert rig.p.multicast.on_tree(b.mcoa) == set()


def test_idle_ar_sends_nothing():
    rig = Rig()
    assert rig.p.refresh_carset(AR["AR3"]) == []


def test_rewrites():
    rig = Rig()
    b = rig.attach(AR["AR1"])
    p = Packet(0, b.rcoa, b.rcoa)
    q = rig.p.br_ingress_rewrite(0, p)
    assert q.current_dst == b.mcoa and q.seq == p.seq and q.original_dst == b.rcoa
    other = DEFAULT_PREFIX.join(5).exploded.replace("2001", "2002")
    foreign = Packet(1, ipaddress.IPv6Address(other), ipaddress.IPv6Address(other))
    assert rig.p.br_ingress_rewrite(0, foreign) is foreign


def test_egress_delivery_and_overhead():
    rig = Rig()
    b = rig.attach(AR["AR1"])
    pkt = Packet(0, b.rcoa, b.mcoa)
    assert rig.p.ar_egress_rewrite(AR["AR1"], pkt).current_dst == b.rcoa
    assert rig.p.ar_egress_rewrite(AR["AR2"], pkt) is None
    assert rig.net.stats.drops["carset_overhead"] == 1
    rig.run(0.1)
    assert [d.via_ar for d in rig.p.traces[rig.mn]] == [AR["AR1"]]


def test_both_ars_deliver_during_overlap():
    rig = Rig()
    b = rig.attach(AR["AR1"])
    rig.run(1.0)
    rig.radio.attach(rig.mn, AR["AR5"])
    rig.p.initiate_handover(rig.mn, AR["AR5"])
    rig.run(1.2)
    rig.p.multicast.forward_multicast(0, Packet(42, b.rcoa, b.mcoa))
    rig.run(1.5)
    got = [(d.seq, d.via_ar, d.dup) for d in rig.p.traces[rig.mn]]
    assert sorted(got) == [(42, AR["AR1"], False), (42, AR["AR5"], True)]


def test_optional_buffer_flushes_on_reactive_arrival():
    rig = Rig(buffer_packets=4)
    b = rig.attach(AR["AR1"])
    rig.run(1.0)
    for seq in range(6):
        rig.p.ar_egress_rewrite(AR["AR5"], Packet(seq, b.rcoa, b.mcoa))
    assert rig.net.stats.drops["buffer_evicted"] == 2
    rig.radio.detach(rig.mn, AR["AR1"])
    rig.radio.attach(rig.mn, AR["AR5"])
    rig.p.initiate_handover(rig.mn, AR["AR5"], HandoverKind.REACTIVE)
    rig.run(1.1)
    assert [d.seq for d in rig.p.traces[rig.mn]] == [2, 3, 4, 5]


def test_exhaustive_hex_interleavings():
    _, cells = hex_domain()
    res = explore_handover(cells, AR["AR1"], AR["AR5"])
    assert res.counterexamples == []
    assert res.terminals >= 1 and res.states > 1000

"""Build a simulation from a ScenarioConfig, run it, and sweep the experiment grid."""
from __future__ import annotations

import copy
import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from . import __version__
from .addressing import MSubnetPrefix
from .baselines import CipScheme, HawaiiScheme
from .config import ScenarioConfig, SweepSpec, config_from_dict, config_hash, config_to_dict
from .metrics import EPISODE_TAIL, RULES, MetricsReport, build_report
from .mnm import MnmProtocol, MnmTimers
from .multicast import RpConfig, elect_rp, validate_rp_config
from .simcore import (HandoverKind, MobilityEntry, MobilityScheme, MobilityScript, Network, Radio,
                      Simulator, apply_mobility_event, cbr_emit, random_walk)
from .topology import (InvalidSpec, LinkSpec, NodeKind, Topology, TreeSpec, build_tree,
                       handover_pair, leaf_order, linear_cells)

CSV_COLUMNS = ["scenario_id", "scheme", "link_delay_ms", "old_hops", "new_hops", "handoff_delay_ms",
               "reorder_depth", "reorder_duration_ms", "duplicates", "routing_efficiency",
               "delivery_ratio", "seed", "config_hash"]

MODEL_NOTES = [
    "wireless hop: lossless link with fixed delay (no 802.11 MAC, no beacons)",
    "mobility: scripted handover triggers; detection always succeeds",
]


@dataclass
class Domain:
    """Static layout derived from the config."""

    topo: Topology
    root: int  # tree root used for fork distances and leaf order
    cells: dict[int, set[int]]
    rp: int
    anchor: int
    ingress: int
    ch: int
    mn: int
    attach_ar: int
    script: MobilityScript
    pair: Optional[tuple[int, int]] = None  # (ar_old, ar_new) picked for handover_pair


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    domain: Domain
    report: MetricsReport
    trace: list
    scheme: MobilityScheme
    sim: Simulator
    emitted: int
    episodes: list = field(default_factory=list)

    @property
    def stats(self):
        return self.scheme.net.stats


def _kind(name: str) -> HandoverKind:
    return HandoverKind(name)


def build_domain(cfg: ScenarioConfig) -> Domain:
    tc = cfg.topology
    if tc.tree is not None:
        t = tc.tree
        topo = build_tree(TreeSpec(t.depth, t.fanout, t.link_delay or cfg.link_delay, t.bandwidth))
        root = 0
    else:
        kinds = [NodeKind(n.kind) for n in sorted(tc.graph.nodes, key=lambda n: n.id)]
        links = [LinkSpec(l.a, l.b, l.delay or cfg.link_delay, l.bandwidth) for l in tc.graph.links]
        topo = Topology(kinds, links)
        root = None

    brs = topo.border_routers
    rt = cfg.routing
    if rt.rp is not None:
        if not (0 <= rt.rp < len(topo)) or not topo.kind(rt.rp).is_router:
            raise InvalidSpec(f"routing.rp={rt.rp} is not a router")
        rp = rt.rp
    else:
        rp_cfg = RpConfig(frozenset(rt.rp_candidates if rt.rp_candidates is not None else brs))
        validate_rp_config(topo, rp_cfg)
        rp = elect_rp(rp_cfg)
    anchor = rt.anchor if rt.anchor is not None else min(brs)
    if topo.kind(anchor) is not NodeKind.BORDER_ROUTER:
        raise InvalidSpec(f"routing.anchor={anchor} is not a border router")
    if root is None:
        root = rp if topo.kind(rp) is NodeKind.BORDER_ROUTER else min(brs)

    pair = None
    if tc.handover_pair is not None:
        topo, ar_old, ar_new = handover_pair(topo, root, *tc.handover_pair)
        pair = (ar_old, ar_new)

    if tc.cells is not None:
        cells = {ar: set() for ar in topo.access_routers}
        for ar, nbrs in tc.cells.items():
            for n in nbrs:
                for x in (ar, n):
                    if x not in cells:
                        raise InvalidSpec(f"cells: {x} is not an access router")
                cells[ar].add(n)
                cells[n].add(ar)
    else:
        cells = linear_cells(topo, root)
    if pair is not None:
        cells[pair[0]].add(pair[1])
        cells[pair[1]].add(pair[0])

    ingress = cfg.traffic.ingress if cfg.traffic.ingress is not None else min(brs)
    if topo.kind(ingress) is not NodeKind.BORDER_ROUTER:
        raise InvalidSpec(f"traffic.ingress={ingress} is not a border router")
    topo, ch = topo.add_node(NodeKind.CORRESPONDENT_HOST, ((ingress, cfg.traffic.internet_delay, 10e6),))
    topo, mn = topo.add_node(NodeKind.MOBILE_NODE)

    mob = cfg.mobility
    if mob.attach_ar is not None:
        attach_ar = mob.attach_ar
    elif pair is not None:
        attach_ar = pair[0]
    else:
        attach_ar = leaf_order(topo, root)[0]
    if topo.kind(attach_ar) is not NodeKind.ACCESS_ROUTER:
        raise InvalidSpec(f"mobility.attach_ar={attach_ar} is not an access router")

    if mob.script:
        entries = tuple(MobilityEntry(e.time, e.ar_from, e.ar_to, _kind(e.kind)) for e in mob.script)
        script = MobilityScript(entries)
    elif mob.random_walk is not None:
        rw = mob.random_walk
        seed = cfg.seed if rw.seed is None else rw.seed
        script = random_walk(cells, attach_ar, seed, rw.count, rw.start, rw.dwell, _kind(rw.kind))
    elif pair is not None:
        script = MobilityScript((MobilityEntry(mob.handover_time, pair[0], pair[1], _kind(mob.kind)),))
    else:
        script = MobilityScript()
    if script.entries and script.entries[0].ar_from != attach_ar:
        raise InvalidSpec(f"mobility script starts at {script.entries[0].ar_from}, mobile attaches at {attach_ar}")
    return Domain(topo, root, cells, rp, anchor, ingress, ch, mn, attach_ar, script, pair)


def make_scheme(cfg: ScenarioConfig, dom: Domain, net: Network, radio: Radio) -> MobilityScheme:
    tm = cfg.timers
    prefix = MSubnetPrefix.parse(cfg.addressing.domain_prefix, sla=cfg.addressing.msubnet_sla)
    if cfg.scheme == "mnm":
        timers = MnmTimers(tm.prune_timeout, tm.scan_period, tm.refresh, tm.purge, tm.delayed_leave,
                           tm.registration_delay)
        return MnmProtocol(net, radio, dom.cells, dom.rp, prefix, timers, buffer_packets=cfg.buffers.mnm)
    common = dict(prefix=prefix, route_timeout=tm.route_timeout, refresh=tm.refresh,
                  registration_delay=tm.registration_delay)
    if cfg.scheme == "cip":
        return CipScheme(net, radio, dom.anchor, semisoft_window=tm.semisoft_window, **common)
    return HawaiiScheme(net, radio, dom.anchor, buffer_capacity=cfg.buffers.hawaii, **common)


def overlap_for(cfg: ScenarioConfig, scheme: MobilityScheme, entry: MobilityEntry) -> float:
    if entry.kind is HandoverKind.PROACTIVE and scheme.bicast:
        return cfg.timers.overlap
    return 0.0


def episodes_for(cfg: ScenarioConfig, scheme: MobilityScheme, script: MobilityScript):
    out = []
    entries = script.entries
    for i, e in enumerate(entries):
        end = e.time + overlap_for(cfg, scheme, e) + EPISODE_TAIL
        if i + 1 < len(entries):
            end = min(end, entries[i + 1].time)
        out.append((e, (e.time, min(end, cfg.t_end))))
    return out


def run_scenario(cfg: ScenarioConfig, record: bool = False) -> ScenarioResult:
    dom = build_domain(cfg)
    sim = Simulator(record=record)
    net = Network(sim, dom.topo, cfg.radio.delay, cfg.radio.bandwidth)
    radio = Radio()
    scheme = make_scheme(cfg, dom, net, radio)
    scheme.start()

    radio.attach(dom.mn, dom.attach_ar)
    binding = scheme.attach(dom.mn, dom.attach_ar)

    tr = cfg.traffic
    start = tr.start if tr.start is not None else binding.ready_at
    stop = tr.stop if tr.stop is not None else cfg.t_end - tr.drain

    def emit(pkt):
        net.stats.emitted += 1
        net.send_packet(dom.ch, dom.ingress, pkt, lambda node, p, prev: scheme.ingress(node, p))

    source = cbr_emit(sim, dom.ch, binding.rcoa, tr.interval, tr.size, emit, start=start, stop=stop)

    for entry in dom.script.entries:
        sim.schedule(entry.time, apply_mobility_event, sim, radio, dom.mn, entry,
                     overlap_for(cfg, scheme, entry), scheme.handover, target=dom.mn)

    sim.run_until(cfg.t_end)
    trace = scheme.traces[dom.mn].entries
    episodes = episodes_for(cfg, scheme, dom.script)
    report = build_report(trace, episodes, source.sent, dom.topo, dom.ingress, net.stats.drops)
    return ScenarioResult(cfg, dom, report, trace, scheme, sim, source.sent, episodes)


# -- sweeps and CSV


def sweep_configs(spec: SweepSpec) -> list[tuple[ScenarioConfig, tuple[int, int]]]:
    """Cartesian grid in (scheme, link delay, hop pair) order."""
    base = config_to_dict(spec.base)
    out = []
    for scheme in spec.schemes:
        for delay in spec.link_delays:
            for pair in spec.hop_pairs:
                data = copy.deepcopy(base)
                data["scheme"] = scheme
                data["link_delay"] = delay
                if data["topology"].get("tree") is not None:
                    data["topology"]["tree"]["link_delay"] = None
                data["topology"]["handover_pair"] = list(pair)
                out.append((config_from_dict(data), tuple(pair)))
    return out


def report_row(idx: int, cfg: ScenarioConfig, report: MetricsReport, pair: Optional[tuple[int, int]]) -> dict:
    return {
        "scenario_id": idx,
        "scheme": cfg.scheme,
        "link_delay_ms": _num(cfg.link_delay * 1e3),
        "old_hops": pair[0] if pair else "",
        "new_hops": pair[1] if pair else "",
        "handoff_delay_ms": _num(report.handoff_delay * 1e3),
        "reorder_depth": report.reorder_depth,
        "reorder_duration_ms": _num(report.reorder_duration * 1e3),
        "duplicates": report.duplicates,
        "routing_efficiency": _num(report.routing_efficiency),
        "delivery_ratio": _num(report.delivery_ratio),
        "seed": cfg.seed,
        "config_hash": config_hash(cfg),
    }


def _num(x: float) -> str:
    return f"{x:.6f}"


def _run_point(args):
    idx, cfg, pair = args
    res = run_scenario(cfg)
    return report_row(idx, cfg, res.report, pair)


def sweep(spec: SweepSpec, jobs: int = 1) -> list[dict]:
    points = [(i, cfg, pair) for i, (cfg, pair) in enumerate(sweep_configs(spec))]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_point, points))
    else:
        rows = [_run_point(p) for p in points]
    return sorted(rows, key=lambda r: r["scenario_id"])


def metadata(cfg: ScenarioConfig, extra: Optional[dict] = None) -> dict:
    meta = {
        "tool": f"mmsim {__version__}",
        "seed": cfg.seed,
        "defaults": config_to_dict(cfg),
        "metric_rules": RULES,
        "model_notes": MODEL_NOTES,
    }
    if extra:
        meta.update(extra)
    return meta


def write_csv(rows: list[dict], meta: dict, fh) -> None:
    for key, value in meta.items():
        fh.write(f"# {key}: {json.dumps(value, sort_keys=True)}\n")
    writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)


def csv_text(rows: list[dict], meta: dict) -> str:
    buf = io.StringIO()
    write_csv(rows, meta, buf)
    return buf.getvalue()


def trace_csv(trace, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["time", "seq", "via_ar", "dup", "hops"])
    for d in trace:
        writer.writerow([f"{d.time:.9f}", d.seq, d.via_ar, int(d.dup), "" if d.hops is None else d.hops])

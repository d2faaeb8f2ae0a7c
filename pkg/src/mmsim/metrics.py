"""Handover metrics over receive traces, plus the analytical state-count estimator."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .simcore import Delivery, MobilityEntry
from .topology import Topology

EPISODE_TAIL = 2.0

# written into CSV headers so results state the rule they were computed with
RULES = {
    "handoff_delay": "first delivery via new AR after trigger minus last delivery via old AR; clamped at 0",
    "reorder_depth": "max positive backward seq jump between consecutive first deliveries (duplicates dropped)",
    "reorder_duration": "time from first to last late-or-duplicate delivery inside the episode",
    "duplicates": "deliveries of an already-seen seq inside the episode",
    "episode": f"handover trigger to last attachment change + {EPISODE_TAIL:g} s",
    "routing_efficiency": "max over first deliveries of domain hops / shortest-path hops ingress->delivering AR",
    "delivery_ratio": "unique seqs delivered / seqs emitted",
}


class MetricsError(Exception):
    pass


class NoDeliveryAfterHandover(MetricsError):
    pass


class NoDeliveryBeforeHandover(MetricsError):
    pass


@dataclass(frozen=True)
class HandoffDelay:
    delay: float
    raw: float

    @property
    def negative_raw(self) -> bool:
        return self.raw < 0


def handoff_delay(trace: Iterable[Delivery], handover: MobilityEntry, since: float = 0.0,
                  until: float = math.inf) -> HandoffDelay:
    entries = [d for d in trace if since <= d.time <= until]
    old = [d.time for d in entries if d.via_ar == handover.ar_from]
    new = [d.time for d in entries if d.via_ar == handover.ar_to and d.time >= handover.time]
    if not old:
        raise NoDeliveryBeforeHandover(f"nothing delivered via AR {handover.ar_from}")
    if not new:
        raise NoDeliveryAfterHandover(f"nothing delivered via AR {handover.ar_to} after t={handover.time}")
    raw = new[0] - old[-1]
    return HandoffDelay(max(raw, 0.0), raw)


def _first_deliveries(trace: Iterable[Delivery]) -> list[Delivery]:
    return [d for d in trace if not d.dup]


def reorder_depth(trace: Iterable[Delivery]) -> int:
    seqs = [d.seq for d in _first_deliveries(trace)]
    return max((a - b for a, b in zip(seqs, seqs[1:]) if a > b), default=0)


def reorder_duration_and_duplicates(trace: Iterable[Delivery], start: float = -math.inf,
                                    end: float = math.inf) -> tuple[float, int]:
    """Anomalies are late deliveries (seq below the running max) and duplicates.

    The running max is tracked over the whole trace so a late packet right
    at the episode start is still recognised.
    """
    top = -1
    times = []
    dups = 0
    for d in trace:
        anomalous = d.dup or d.seq < top
        if not d.dup:
            top = max(top, d.seq)
        if start <= d.time <= end:
            if d.dup:
                dups += 1
            if anomalous:
                times.append(d.time)
    duration = times[-1] - times[0] if times else 0.0
    return duration, dups


def routing_efficiency(topo: Topology, tree_root: int, ingress: int, mn_serving_ar: int) -> float:
    """Hops ingress -> root (tunnel) -> serving AR (tree), over direct shortest-path hops."""
    direct = topo.hops(ingress, mn_serving_ar)
    traversed = topo.hops(ingress, tree_root) + topo.hops(tree_root, mn_serving_ar)
    if direct == 0:
        return 1.0 if traversed == 0 else math.inf
    return traversed / direct


def measured_routing_efficiency(topo: Topology, trace: Iterable[Delivery], ingress: int) -> float:
    worst = 1.0
    cache: dict[int, int] = {}
    for d in _first_deliveries(trace):
        if d.hops is None:
            continue
        if d.via_ar not in cache:
            cache[d.via_ar] = topo.hops(ingress, d.via_ar)
        direct = cache[d.via_ar]
        ratio = d.hops / direct if direct else 1.0
        worst = max(worst, ratio)
    return worst


def state_count_estimate(x: int, y: int, l: float, scheme: str) -> float:
    """Router state for x mobiles, y correspondents each, l-hop paths.

    inter-domain: one (S, G) state per correspondent per hop -> x*y*l.
    intra-domain: one shared tree per mobile -> x*l, independent of y.
    """
    if min(x, y, l) < 0:
        raise ValueError("x, y, l must be >= 0")
    if scheme == "inter":
        return x * y * l
    if scheme == "intra":
        return x * l
    raise ValueError(f"unknown scheme {scheme!r}; expected 'inter' or 'intra'")


@dataclass
class HandoverMetrics:
    trigger: float
    ar_old: int
    ar_new: int
    episode: tuple[float, float]
    handoff_delay: Optional[float]
    handoff_delay_raw: Optional[float]
    negative_raw: bool
    reorder_depth: int
    reorder_duration: float
    duplicates: int
    delivery_failure: bool = False


@dataclass
class MetricsReport:
    handoff_delay: float
    reorder_depth: int
    reorder_duration: float
    duplicates: int
    routing_efficiency: float
    delivery_ratio: float
    drops_by_cause: dict = field(default_factory=dict)
    handovers: list[HandoverMetrics] = field(default_factory=list)
    emitted: int = 0
    delivered_unique: int = 0

    def __post_init__(self):
        for name in ("handoff_delay", "reorder_duration", "routing_efficiency", "delivery_ratio"):
            if not math.isfinite(getattr(self, name)):
                raise MetricsError(f"{name} is not finite")
        if self.routing_efficiency < 1.0:
            raise MetricsError("routing efficiency below 1.0")


def handover_metrics(trace: list[Delivery], entry: MobilityEntry, episode: tuple[float, float],
                     since: float = 0.0) -> HandoverMetrics:
    start, end = episode
    in_episode = [d for d in trace if start <= d.time <= end]
    try:
        hd = handoff_delay(trace, entry, since=since, until=end)
        delay, raw, neg, failed = hd.delay, hd.raw, hd.negative_raw, False
    except (NoDeliveryAfterHandover, NoDeliveryBeforeHandover):
        delay, raw, neg, failed = None, None, False, True
    duration, dups = reorder_duration_and_duplicates(trace, start, end)
    # depth over the episode plus the last first-delivery before it, so a jump at the boundary counts
    before = [d for d in trace if d.time < start and not d.dup][-1:]
    depth = reorder_depth(before + in_episode)
    return HandoverMetrics(entry.time, entry.ar_from, entry.ar_to, episode, delay, raw, neg,
                           depth, duration, dups, failed)


def build_report(trace: list[Delivery], episodes: list[tuple[MobilityEntry, tuple[float, float]]],
                 emitted: int, topo: Topology, ingress: int, drops: dict) -> MetricsReport:
    per = []
    since = 0.0
    for entry, window in episodes:
        per.append(handover_metrics(trace, entry, window, since))
        since = entry.time
    unique = len({d.seq for d in trace})
    delays = [h.handoff_delay for h in per if h.handoff_delay is not None]
    return MetricsReport(
        handoff_delay=max(delays, default=0.0),
        reorder_depth=max((h.reorder_depth for h in per), default=reorder_depth(trace)),
        reorder_duration=max((h.reorder_duration for h in per), default=0.0),
        duplicates=sum(h.duplicates for h in per),
        routing_efficiency=measured_routing_efficiency(topo, trace, ingress),
        delivery_ratio=unique / emitted if emitted else 0.0,
        drops_by_cause=dict(sorted(drops.items())),
        handovers=per,
        emitted=emitted,
        delivered_unique=unique,
    )

"""Scenario and sweep configuration: JSON in, validated dataclasses out."""
import dataclasses
import hashlib
import json
from typing import Annotated, Dict, List, Literal, Optional, Tuple

import pydantic
from pydantic import ConfigDict, Field, TypeAdapter, model_validator
from pydantic.dataclasses import dataclass

Positive = Annotated[float, Field(gt=0)]
NonNegative = Annotated[float, Field(ge=0)]
SCHEMES = ("mnm", "cip", "hawaii")
Scheme = Literal["mnm", "cip", "hawaii"]
_STRICT = ConfigDict(extra="forbid", populate_by_name=True)


class ConfigError(Exception):
    pass


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    def __init__(self, errors: List[Tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{path}: {msg}" for path, msg in errors))

    @property
    def fields(self) -> List[str]:
        return [p for p, _ in self.errors]


@dataclass(config=_STRICT)
class TreeTopology:
    depth: Annotated[int, Field(ge=1)] = 3
    fanout: Annotated[int, Field(ge=1)] = 2
    link_delay: Optional[Positive] = None  # falls back to the scenario link_delay
    bandwidth: Positive = 10e6


@dataclass(config=_STRICT)
class NodeDecl:
    id: Annotated[int, Field(ge=0)]
    kind: Literal["BorderRouter", "InteriorRouter", "AccessRouter"]


@dataclass(config=_STRICT)
class LinkDecl:
    a: int
    b: int
    delay: Optional[Positive] = None
    bandwidth: Positive = 10e6


@dataclass(config=_STRICT)
class GraphTopology:
    nodes: List[NodeDecl]
    links: List[LinkDecl]

    @model_validator(mode="after")
    def _dense(self):
        ids = sorted(n.id for n in self.nodes)
        if ids != list(range(len(ids))):
            raise ValueError("node ids must be dense 0..N-1")
        return self


@dataclass(config=_STRICT)
class TopologyConfig:
    tree: Optional[TreeTopology] = None
    graph: Optional[GraphTopology] = None
    cells: Optional[Dict[int, List[int]]] = None  # declared radio adjacency
    handover_pair: Optional[Tuple[Annotated[int, Field(ge=1)], Annotated[int, Field(ge=1)]]] = None

    @model_validator(mode="after")
    def _one_kind(self):
        if (self.tree is None) == (self.graph is None):
            raise ValueError("give exactly one of 'tree' or 'graph'")
        if self.handover_pair is not None and self.tree is None:
            raise ValueError("handover_pair needs a tree topology")
        return self


@dataclass(config=_STRICT)
class TrafficConfig:
    interval: Positive = 0.010
    size: Annotated[int, Field(gt=0)] = 512
    start: Optional[NonNegative] = None  # default: once the registration delay has elapsed
    stop: Optional[NonNegative] = None  # default: t_end - drain
    drain: Positive = 1.0
    ingress: Optional[int] = None  # BR where the correspondent's traffic enters
    internet_delay: Positive = 0.010


@dataclass(config=_STRICT)
class ScriptEntry:
    time: NonNegative
    ar_from: int = Field(alias="from")
    ar_to: int = Field(alias="to")
    kind: Literal["proactive", "reactive"] = "proactive"


@dataclass(config=_STRICT)
class RandomWalkConfig:
    count: Annotated[int, Field(ge=0)] = 1
    dwell: Positive = 1.0
    start: NonNegative = 1.0
    seed: Optional[int] = None  # default: scenario seed
    kind: Literal["proactive", "reactive"] = "proactive"


@dataclass(config=_STRICT)
class MobilityConfig:
    attach_ar: Optional[int] = None
    script: List[ScriptEntry] = Field(default_factory=list)
    random_walk: Optional[RandomWalkConfig] = None
    handover_time: NonNegative = 1.0  # used with topology.handover_pair
    kind: Literal["proactive", "reactive"] = "proactive"

    @model_validator(mode="after")
    def _one_source(self):
        if self.script and self.random_walk is not None:
            raise ValueError("give either 'script' or 'random_walk', not both")
        return self


@dataclass(config=_STRICT)
class Timers:
    prune_timeout: Positive = 1.0
    scan_period: Positive = 0.1
    refresh: Optional[Positive] = 0.5  # null disables periodic refresh
    purge: Positive = 0.5
    delayed_leave: Optional[Positive] = None  # null: 2x max intra-CAR-set one-way delay
    overlap: Positive = 1.0  # 30 m cell overlap at 30 m/s
    semisoft_window: NonNegative = 0.2
    registration_delay: Positive = 0.1
    route_timeout: Positive = 1.0


@dataclass(config=_STRICT)
class RoutingConfig:
    rp_candidates: Optional[List[int]] = None  # default: every border router
    rp: Optional[int] = None  # force the tree root (may be an interior router)
    anchor: Optional[int] = None  # CIP/HAWAII gateway; default lowest-id BR


@dataclass(config=_STRICT)
class RadioConfig:
    delay: Positive = 0.002
    bandwidth: Positive = 10e6


@dataclass(config=_STRICT)
class BufferConfig:
    hawaii: Annotated[int, Field(ge=1)] = 256
    mnm: Annotated[int, Field(ge=0)] = 0


@dataclass(config=_STRICT)
class AddressConfig:
    domain_prefix: str = "2001:db8::/48"
    msubnet_sla: Annotated[int, Field(ge=0, le=0xFFFF)] = 0xFFFF


@dataclass(config=_STRICT)
class ScenarioConfig:
    topology: TopologyConfig
    scheme: Scheme
    link_delay: Positive = 0.010
    traffic: TrafficConfig = Field(default_factory=TrafficConfig)
    mobility: MobilityConfig = Field(default_factory=MobilityConfig)
    timers: Timers = Field(default_factory=Timers)
    routing: RoutingConfig = Field(default_factory=RoutingConfig)
    radio: RadioConfig = Field(default_factory=RadioConfig)
    buffers: BufferConfig = Field(default_factory=BufferConfig)
    addressing: AddressConfig = Field(default_factory=AddressConfig)
    t_end: Positive = 5.0
    seed: int = 0


@dataclass(config=_STRICT)
class SweepSpec:
    base: ScenarioConfig
    link_delays: List[Positive] = Field(default_factory=lambda: [0.010, 0.005, 0.002])
    hop_pairs: List[Tuple[int, int]] = Field(default_factory=lambda: [(1, 1), (2, 2), (3, 2), (3, 3)])
    schemes: List[Scheme] = Field(default_factory=lambda: list(SCHEMES))


_SCENARIO = TypeAdapter(ScenarioConfig)
_SWEEP = TypeAdapter(SweepSpec)


def _convert(err: pydantic.ValidationError) -> ValidationError:
    out = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        out.append((path, e["msg"]))
    return ValidationError(out)


def _load(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from None


def config_from_dict(data: dict) -> ScenarioConfig:
    try:
        return _SCENARIO.validate_python(data)
    except pydantic.ValidationError as exc:
        raise _convert(exc) from None


def parse_config(text: str) -> ScenarioConfig:
    return config_from_dict(_load(text))


def sweep_from_dict(data: dict) -> SweepSpec:
    try:
        return _SWEEP.validate_python(data)
    except pydantic.ValidationError as exc:
        raise _convert(exc) from None


def parse_sweep(text: str) -> SweepSpec:
    return sweep_from_dict(_load(text))


def config_to_dict(cfg) -> dict:
    return _SCENARIO.dump_python(cfg, mode="json", by_alias=True) if isinstance(cfg, ScenarioConfig) \
        else dataclasses.asdict(cfg)


def config_hash(cfg: ScenarioConfig) -> str:
    blob = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def with_overrides(cfg: ScenarioConfig, **changes) -> ScenarioConfig:
    """Re-validate a config after changing top-level or dotted fields ('timers.overlap')."""
    data = config_to_dict(cfg)
    for key, value in changes.items():
        node = data
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return config_from_dict(data)

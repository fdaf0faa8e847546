"""Scenario configuration: dataclasses, JSON loading and validation.

Every problem is reported as a :class:`ConfigError` naming the offending
field (``protocol.k``, ``churn[2].targets``...) before any simulation runs.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from ..core import Priority
from ..dissemination import NodeParams, default_ttl
from ..state_store import default_grace_period

CHURN_ACTIONS = ("kill", "revive", "partition", "heal")
ADVERSARY_BEHAVIORS = ("fabricate", "tamper", "flood")
MODES = ("gossip", "broadcast")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class Latency:
    min: int = 1
    max: int = 1

    @property
    def constant(self) -> bool:
        return self.min == self.max


@dataclass
class ProtocolConfig:
    ttl_hops: int | None = None
    hot_rounds: int | None = None
    rate_limit: int | None = None
    buffer_capacity: int = 1024
    k: int = 1
    theta: float = 1.5
    trust_default: float = 0.5
    trust_alpha: float = 0.1
    hold_rounds: int | None = None
    anti_entropy_period: int = 10
    membership: bool = True
    suspicion_timeout: int = 3
    proxy_count: int = 3
    member_priority: str = "critical"
    grace_period: int | None = None
    ttl_rounds: int | None = 64
    decay_rate: float = 0.0
    load_threshold: float = 0.8
    work_rounds: int = 3
    stop_at_full_coverage: bool = False


@dataclass
class ChurnEvent:
    round: int
    action: str
    targets: list = field(default_factory=list)
    claimant_of: str | None = None


@dataclass
class Adversary:
    agents: list[int]
    behavior: str
    rate: int = 1
    key: str = "fact"
    value: str = "false"
    label: str = "false_fact"
    start_round: int = 0
    priority: str = "normal"


@dataclass
class RumorItem:
    label: str
    origins: list[int]
    key: str
    value: str
    round: int = 0
    priority: str = "normal"


@dataclass
class TaskWorkload:
    count: int
    round: int = 1
    origins: list[int] = field(default_factory=lambda: [0])
    descriptor: list[str] = field(default_factory=lambda: ["assembly"])
    capabilities: dict = field(default_factory=dict)
    loads: dict = field(default_factory=dict)
    priority: str = "normal"


@dataclass
class AveragingWorkload:
    start_round: int = 1
    rounds: int = 200
    values: list[float] | None = None


@dataclass
class RandomOps:
    start_round: int = 1
    end_round: int = 20
    ops_per_round: int = 3
    keys: int = 8
    counters: int = 2
    sets: int = 1
    write: float = 0.5
    delete: float = 0.2
    increment: float = 0.2
    set_op: float = 0.1


@dataclass
class ZoneWorkload:
    zones: int = 16
    drones: list[int] | None = None
    dwell_rounds: int = 4
    silence_rounds: int = 6
    start_round: int = 1


@dataclass
class Workload:
    rumors: list[RumorItem] = field(default_factory=list)
    tasks: TaskWorkload | None = None
    averaging: AveragingWorkload | None = None
    random_ops: RandomOps | None = None
    zones: ZoneWorkload | None = None
    load_report_period: int | None = None


@dataclass
class ScenarioConfig:
    n_agents: int
    fanout: int = 3
    rounds: int = 50
    loss_p: float = 0.0
    latency: Latency = field(default_factory=Latency)
    seed: int = 0
    mode: str = "gossip"
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    churn: list[ChurnEvent] = field(default_factory=list)
    adversaries: list[Adversary] = field(default_factory=list)
    workload: Workload = field(default_factory=Workload)

    def node_params(self) -> NodeParams:
        p = self.protocol
        ttl = p.ttl_hops if p.ttl_hops is not None else default_ttl(self.n_agents)
        return NodeParams(
            fanout=self.fanout,
            ttl_hops=ttl,
            hot_rounds=p.hot_rounds if p.hot_rounds is not None else ttl,
            rate_limit=p.rate_limit,
            buffer_capacity=p.buffer_capacity,
            k=p.k,
            theta=p.theta,
            trust_default=p.trust_default,
            trust_alpha=p.trust_alpha,
            hold_rounds=p.hold_rounds if p.hold_rounds is not None else ttl,
            suspicion_timeout=p.suspicion_timeout,
            proxy_count=p.proxy_count,
            member_priority=Priority(p.member_priority),
            grace_period=self.grace_period,
            value_ttl_rounds=p.ttl_rounds,
            load_threshold=p.load_threshold,
            work_rounds=p.work_rounds,
        )

    @property
    def grace_period(self) -> int:
        p = self.protocol
        if p.grace_period is not None:
            return p.grace_period
        return default_grace_period(self.n_agents, p.anti_entropy_period)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def with_overrides(self, **changes: Any) -> "ScenarioConfig":
        return parse_config({**self.to_dict(), **changes})


# ---------------------------------------------------------------------- parsing


def _check_keys(raw: Mapping[str, Any], cls: type, where: str) -> None:
    if not isinstance(raw, Mapping):
        raise ConfigError(where, f"expected an object, got {type(raw).__name__}")
    known = {f.name for f in fields(cls)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{where}.{key}" if where else key, "unknown field")


def _int(value: Any, where: str, lo: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(where, f"expected an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ConfigError(where, f"must be >= {lo}, got {value}")
    return value


def _opt_int(value: Any, where: str, lo: int | None = None) -> int | None:
    return None if value is None else _int(value, where, lo)


def _prob(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not 0.0 <= value <= 1.0:
        raise ConfigError(where, f"must be a probability in [0, 1], got {value!r}")
    return float(value)


def _real(value: Any, where: str, lo: float = 0.0) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or math.isnan(value) or value < lo:
        raise ConfigError(where, f"must be a number >= {lo}, got {value!r}")
    return float(value)


def _choice(value: Any, options: tuple[str, ...], where: str) -> str:
    if value not in options:
        raise ConfigError(where, f"must be one of {', '.join(options)}; got {value!r}")
    return value


def _priority(value: Any, where: str) -> str:
    return _choice(value, tuple(p.value for p in Priority), where)


def _ids(value: Any, n: int, where: str) -> list[int]:
    if not isinstance(value, list):
        raise ConfigError(where, "expected a list of agent ids")
    out = []
    for i, a in enumerate(value):
        a = _int(a, f"{where}[{i}]", 0)
        if a >= n:
            raise ConfigError(f"{where}[{i}]", f"agent id {a} is not below n_agents={n}")
        out.append(a)
    return out


def _parse_protocol(raw: Mapping[str, Any]) -> ProtocolConfig:
    _check_keys(raw, ProtocolConfig, "protocol")
    p = replace(ProtocolConfig(), **raw)
    w = "protocol."
    p.ttl_hops = _opt_int(p.ttl_hops, w + "ttl_hops", 0)
    p.hot_rounds = _opt_int(p.hot_rounds, w + "hot_rounds", 0)
    p.rate_limit = _opt_int(p.rate_limit, w + "rate_limit", 0)
    p.buffer_capacity = _int(p.buffer_capacity, w + "buffer_capacity", 1)
    p.k = _int(p.k, w + "k", 1)
    p.theta = _real(p.theta, w + "theta")
    p.trust_default = _prob(p.trust_default, w + "trust_default")
    p.trust_alpha = _prob(p.trust_alpha, w + "trust_alpha")
    p.hold_rounds = _opt_int(p.hold_rounds, w + "hold_rounds", 0)
    p.anti_entropy_period = _int(p.anti_entropy_period, w + "anti_entropy_period", 0)
    if not isinstance(p.membership, bool):
        raise ConfigError(w + "membership", "expected true or false")
    p.suspicion_timeout = _int(p.suspicion_timeout, w + "suspicion_timeout", 1)
    p.proxy_count = _int(p.proxy_count, w + "proxy_count", 0)
    p.member_priority = _priority(p.member_priority, w + "member_priority")
    p.grace_period = _opt_int(p.grace_period, w + "grace_period", 0)
    p.ttl_rounds = _opt_int(p.ttl_rounds, w + "ttl_rounds", 0)
    p.decay_rate = _real(p.decay_rate, w + "decay_rate")
    p.load_threshold = _prob(p.load_threshold, w + "load_threshold")
    p.work_rounds = _int(p.work_rounds, w + "work_rounds", 0)
    if not isinstance(p.stop_at_full_coverage, bool):
        raise ConfigError(w + "stop_at_full_coverage", "expected true or false")
    return p


def _parse_latency(raw: Any) -> Latency:
    if isinstance(raw, int) and not isinstance(raw, bool):
        return Latency(_int(raw, "latency", 1), raw)
    _check_keys(raw, Latency, "latency")
    lat = Latency(_int(raw.get("min", 1), "latency.min", 1), _int(raw.get("max", raw.get("min", 1)), "latency.max", 1))
    if lat.max < lat.min:
        raise ConfigError("latency.max", "must be >= latency.min")
    return lat


def _parse_churn(raw: Any, n: int, horizon: int) -> list[ChurnEvent]:
    if not isinstance(raw, list):
        raise ConfigError("churn", "expected a list")
    out = []
    for i, ev in enumerate(raw):
        w = f"churn[{i}]"
        _check_keys(ev, ChurnEvent, w)
        if "round" not in ev or "action" not in ev:
            raise ConfigError(w, "needs round and action")
        r = _int(ev["round"], w + ".round", 0)
        if r > horizon:
            raise ConfigError(w + ".round", f"round {r} is beyond the horizon of {horizon} rounds")
        action = _choice(ev["action"], CHURN_ACTIONS, w + ".action")
        targets = ev.get("targets", [])
        claimant_of = ev.get("claimant_of")
        if action == "partition":
            if not isinstance(targets, list) or not targets:
                raise ConfigError(w + ".targets", "partition needs a list of groups")
            groups = targets if all(isinstance(g, list) for g in targets) else [targets]
            targets = [_ids(g, n, f"{w}.targets[{j}]") for j, g in enumerate(groups)]
        elif action in ("kill", "revive"):
            targets = _ids(targets, n, w + ".targets")
            if not targets and not (action == "kill" and claimant_of):
                raise ConfigError(w + ".targets", f"{action} needs at least one target")
        out.append(ChurnEvent(r, action, targets, claimant_of))
    return out


def _parse_adversaries(raw: Any, n: int) -> list[Adversary]:
    if not isinstance(raw, list):
        raise ConfigError("adversaries", "expected a list")
    out = []
    for i, adv in enumerate(raw):
        w = f"adversaries[{i}]"
        _check_keys(adv, Adversary, w)
        if "agents" not in adv or "behavior" not in adv:
            raise ConfigError(w, "needs agents and behavior")
        a = Adversary(**adv)
        a.agents = _ids(a.agents, n, w + ".agents")
        a.behavior = _choice(a.behavior, ADVERSARY_BEHAVIORS, w + ".behavior")
        a.rate = _int(a.rate, w + ".rate", 0)
        a.start_round = _int(a.start_round, w + ".start_round", 0)
        a.priority = _priority(a.priority, w + ".priority")
        out.append(a)
    return out


def _parse_workload(raw: Any, n: int) -> Workload:
    _check_keys(raw, Workload, "workload")
    wl = Workload()
    for i, item in enumerate(raw.get("rumors", [])):
        w = f"workload.rumors[{i}]"
        _check_keys(item, RumorItem, w)
        missing = [k for k in ("label", "origins", "key", "value") if k not in item]
        if missing:
            raise ConfigError(w, f"missing {', '.join(missing)}")
        it = RumorItem(**item)
        it.origins = _ids(it.origins, n, w + ".origins")
        if not it.origins:
            raise ConfigError(w + ".origins", "needs at least one origin")
        it.round = _int(it.round, w + ".round", 0)
        it.priority = _priority(it.priority, w + ".priority")
        wl.rumors.append(it)
    labels = [r.label for r in wl.rumors]
    if len(set(labels)) != len(labels):
        raise ConfigError("workload.rumors", "labels must be unique")
    if raw.get("tasks") is not None:
        _check_keys(raw["tasks"], TaskWorkload, "workload.tasks")
        t = TaskWorkload(**raw["tasks"])
        t.count = _int(t.count, "workload.tasks.count", 0)
        t.round = _int(t.round, "workload.tasks.round", 0)
        t.origins = _ids(t.origins, n, "workload.tasks.origins")
        if not t.origins:
            raise ConfigError("workload.tasks.origins", "needs at least one origin")
        t.priority = _priority(t.priority, "workload.tasks.priority")
        for key in t.capabilities.get("agents", {}):
            if not str(key).isdigit() or int(key) >= n:
                raise ConfigError("workload.tasks.capabilities.agents", f"bad agent id {key!r}")
        for key, v in t.loads.get("agents", {}).items():
            if not str(key).isdigit() or int(key) >= n:
                raise ConfigError("workload.tasks.loads.agents", f"bad agent id {key!r}")
            _prob(v, f"workload.tasks.loads.agents.{key}")
        _prob(t.loads.get("default", 0.0), "workload.tasks.loads.default")
        wl.tasks = t
    if raw.get("averaging") is not None:
        _check_keys(raw["averaging"], AveragingWorkload, "workload.averaging")
        a = AveragingWorkload(**raw["averaging"])
        a.start_round = _int(a.start_round, "workload.averaging.start_round", 1)
        a.rounds = _int(a.rounds, "workload.averaging.rounds", 0)
        if a.values is not None:
            if len(a.values) != n:
                raise ConfigError("workload.averaging.values", f"needs exactly {n} values")
            for i, v in enumerate(a.values):
                if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                    raise ConfigError(f"workload.averaging.values[{i}]", "must be a finite number")
        wl.averaging = a
    if raw.get("random_ops") is not None:
        _check_keys(raw["random_ops"], RandomOps, "workload.random_ops")
        ops = RandomOps(**raw["random_ops"])
        w = "workload.random_ops."
        ops.start_round = _int(ops.start_round, w + "start_round", 1)
        ops.end_round = _int(ops.end_round, w + "end_round", ops.start_round)
        ops.ops_per_round = _int(ops.ops_per_round, w + "ops_per_round", 0)
        ops.keys = _int(ops.keys, w + "keys", 1)
        ops.counters = _int(ops.counters, w + "counters", 0)
        ops.sets = _int(ops.sets, w + "sets", 0)
        for name in ("write", "delete", "increment", "set_op"):
            _real(getattr(ops, name), w + name)
        if ops.write + ops.delete + ops.increment + ops.set_op <= 0:
            raise ConfigError(w + "write", "operation mix must have positive total weight")
        wl.random_ops = ops
    if raw.get("zones") is not None:
        _check_keys(raw["zones"], ZoneWorkload, "workload.zones")
        z = ZoneWorkload(**raw["zones"])
        z.zones = _int(z.zones, "workload.zones.zones", 1)
        if z.drones is not None:
            z.drones = _ids(z.drones, n, "workload.zones.drones")
        z.dwell_rounds = _int(z.dwell_rounds, "workload.zones.dwell_rounds", 1)
        z.silence_rounds = _int(z.silence_rounds, "workload.zones.silence_rounds", 0)
        z.start_round = _int(z.start_round, "workload.zones.start_round", 0)
        wl.zones = z
    wl.load_report_period = _opt_int(raw.get("load_report_period"), "workload.load_report_period", 1)
    return wl


def parse_config(raw: Mapping[str, Any]) -> ScenarioConfig:
    _check_keys(raw, ScenarioConfig, "")
    if "n_agents" not in raw:
        raise ConfigError("n_agents", "required")
    n = _int(raw["n_agents"], "n_agents", 1)
    cfg = ScenarioConfig(n_agents=n)
    cfg.fanout = _int(raw.get("fanout", cfg.fanout), "fanout", 0)
    cfg.rounds = _int(raw.get("rounds", cfg.rounds), "rounds", 0)
    cfg.loss_p = _prob(raw.get("loss_p", cfg.loss_p), "loss_p")
    cfg.latency = _parse_latency(raw.get("latency", 1))
    cfg.seed = _int(raw.get("seed", 0), "seed", 0)
    cfg.mode = _choice(raw.get("mode", "gossip"), MODES, "mode")
    cfg.protocol = _parse_protocol(raw.get("protocol", {}))
    cfg.churn = _parse_churn(raw.get("churn", []), n, cfg.rounds)
    cfg.adversaries = _parse_adversaries(raw.get("adversaries", []), n)
    cfg.workload = _parse_workload(raw.get("workload", {}), n)
    for i, item in enumerate(cfg.workload.rumors):
        if item.round > cfg.rounds:
            raise ConfigError(f"workload.rumors[{i}].round", "beyond the horizon")
    return cfg


@dataclass
class Expectation:
    metric: str
    op: str
    value: Any
    tolerance: float = 0.0


COMPARATORS = ("==", "<=", ">=", "<", ">")


@dataclass
class ScenarioBundle:
    name: str
    config: ScenarioConfig
    expected: list[Expectation] = field(default_factory=list)
    description: str = ""


def parse_bundle(raw: Mapping[str, Any], default_name: str = "scenario") -> ScenarioBundle:
    if not isinstance(raw, Mapping):
        raise ConfigError("", "scenario file must hold a JSON object")
    extra = set(raw) - {"name", "description", "config", "expected"}
    if extra:
        raise ConfigError(sorted(extra)[0], "unknown top-level field")
    if "config" not in raw:
        raise ConfigError("config", "required")
    try:
        cfg = parse_config(raw["config"])
    except ConfigError as exc:
        raise ConfigError(f"config.{exc.field}".rstrip("."), str(exc).split(": ", 1)[-1]) from None
    expected = []
    for i, e in enumerate(raw.get("expected", [])):
        w = f"expected[{i}]"
        if not isinstance(e, Mapping) or not {"metric", "op", "value"} <= set(e):
            raise ConfigError(w, "needs metric, op and value")
        _choice(e["op"], COMPARATORS, w + ".op")
        expected.append(Expectation(e["metric"], e["op"], e["value"], float(e.get("tolerance", 0.0))))
    return ScenarioBundle(raw.get("name", default_name), cfg, expected, raw.get("description", ""))


def load_bundle(path: str | Path) -> ScenarioBundle:
    path = Path(path)
    text = path.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno} column {exc.colno}", exc.msg) from None
    return parse_bundle(raw, path.stem)


def set_path(raw: dict[str, Any], dotted: str, value: Any) -> None:
    """Assign ``value`` at a dotted path such as ``protocol.k`` inside a raw config dict."""
    parts = dotted.split(".")
    node = raw
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(dotted, "not a config section")
    node[parts[-1]] = value


def resolve_knob(raw: Mapping[str, Any], name: str) -> str:
    """Map a bare knob name (``k``) to its dotted config path (``protocol.k``)."""
    if "." in name:
        return name
    top = {f.name for f in fields(ScenarioConfig)}
    if name in top:
        return name
    if name in {f.name for f in fields(ProtocolConfig)}:
        return "protocol." + name
    raise ConfigError(name, "not a config knob")

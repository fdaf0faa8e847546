"""Run metrics, derived purely from a trace.

The simulator never reports a number it could not recompute from its own
trace: :func:`compute_metrics` is the only producer of :class:`RunMetrics`.
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Mapping

from ..temporal import staleness_percentiles

# Message effects that mean the receiver never handled the message.
UNDELIVERED = ("lost", "unreachable", "in_flight")


class TraceError(ValueError):
    """The trace is malformed or cut short."""


@dataclass
class RunMetrics:
    n_agents: int = 0
    seed: int = 0
    rounds: int = 0
    coverage_curve: dict[str, list[float]] = field(default_factory=dict)
    rounds_to_full: dict[str, int | None] = field(default_factory=dict)
    final_coverage: dict[str, float] = field(default_factory=dict)
    adoptions: dict[str, int] = field(default_factory=dict)
    honest_adoptions: dict[str, int] = field(default_factory=dict)
    messages_total: int = 0
    messages_per_round: list[int] = field(default_factory=list)
    max_load: int = 0
    mean_load: float = 0.0
    load_by_node: dict[int, int] = field(default_factory=dict)
    deliveries: int = 0
    duplicates: int = 0
    redundancy_ratio: float = 0.0
    lost: int = 0
    unreachable: int = 0
    in_flight: int = 0
    rate_dropped: int = 0
    trust_held: int = 0
    rejected: int = 0
    filtered: int = 0
    anti_entropy_exchanges: int = 0
    probe_messages: int = 0
    averaging_messages: int = 0
    staleness: dict[str, float] = field(default_factory=lambda: {"p50": 0.0, "p95": 0.0, "max": 0.0})
    consensus_entropy: list[float] = field(default_factory=list)
    averaging_max_deviation: float = 0.0
    max_sum_drift: float = 0.0
    value_entropy: dict[str, float] = field(default_factory=dict)
    detection: list[dict[str, Any]] = field(default_factory=list)
    claims: dict[str, dict[str, Any]] = field(default_factory=dict)
    tasks_agreed: bool = True
    tasks_done: int = 0
    duplicate_claim_rounds: int = 0
    zones_covered: int = 0
    zones_total: int = 0
    all_zones_round: int | None = None

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["load_by_node"] = {str(k): v for k, v in sorted(self.load_by_node.items())}
        return out

    @property
    def rounds_to_full_max(self) -> int | None:
        """Slowest honest rumor; None when any honest rumor never reached everyone."""
        vals = list(self.rounds_to_full.values())
        if not vals or any(v is None for v in vals):
            return None
        return max(vals)

    @property
    def coverage_min(self) -> float:
        return min(self.final_coverage.values(), default=0.0)

    @property
    def false_adoptions(self) -> int:
        honest = set(self.rounds_to_full)
        return sum(v for k, v in self.honest_adoptions.items() if k not in honest)

    def get(self, name: str) -> Any:
        """Look up a metric by dotted name, e.g. ``rounds_to_full.x`` or ``staleness.p95``."""
        head, _, rest = name.partition(".")
        if not hasattr(self, head):
            raise KeyError(name)
        value = getattr(self, head)
        while rest:
            part, _, rest = rest.partition(".")
            if isinstance(value, Mapping):
                if part not in value:
                    raise KeyError(name)
                value = value[part]
            elif isinstance(value, list) and part.lstrip("-").isdigit():
                value = value[int(part)]
            else:
                raise KeyError(name)
        return value

    def scalars(self) -> dict[str, Any]:
        """Flat name -> number view used for CSV export and sweep summaries."""
        out: dict[str, Any] = {
            "n_agents": self.n_agents,
            "seed": self.seed,
            "rounds": self.rounds,
            "rounds_to_full_max": self.rounds_to_full_max,
            "coverage_min": self.coverage_min,
            "false_adoptions": self.false_adoptions,
        }
        for name in ("messages_total", "max_load", "mean_load", "deliveries", "duplicates", "redundancy_ratio",
                     "lost", "unreachable", "in_flight", "rate_dropped", "trust_held", "rejected", "filtered",
                     "anti_entropy_exchanges", "probe_messages", "averaging_messages",
                     "averaging_max_deviation", "max_sum_drift", "tasks_agreed", "tasks_done", "duplicate_claim_rounds",
                     "zones_covered", "zones_total", "all_zones_round"):
            out[name] = getattr(self, name)
        for k, v in self.staleness.items():
            out[f"staleness.{k}"] = v
        for label in sorted(self.rounds_to_full):
            out[f"rounds_to_full.{label}"] = self.rounds_to_full[label]
        for label in sorted(self.final_coverage):
            out[f"final_coverage.{label}"] = self.final_coverage[label]
        for i, d in enumerate(self.detection):
            out[f"detection.{i}.first_suspect"] = d["first_suspect"]
            out[f"detection.{i}.all_dead"] = d["all_dead"]
        return out


def series_csv(m: RunMetrics) -> str:
    """Per-round series as CSV: round, messages, consensus entropy, then one coverage column per rumor."""
    labels = sorted(m.coverage_curve)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["round", "messages", "consensus_entropy", *(f"coverage.{l}" for l in labels)])
    for r in range(m.rounds + 1):
        row: list[Any] = [r]
        row.append(m.messages_per_round[r] if r < len(m.messages_per_round) else 0)
        row.append(m.consensus_entropy[r] if r < len(m.consensus_entropy) else "")
        row.extend(m.coverage_curve[l][r] for l in labels)
        w.writerow(row)
    return buf.getvalue()


def _variance(vals: list[float]) -> float:
    n = len(vals)
    mean = math.fsum(vals) / n
    return math.fsum((v - mean) ** 2 for v in vals) / n


def _entropy(counts: Iterable[int]) -> float:
    counts = [c for c in counts if c > 0]
    total = sum(counts)
    if total == 0:
        return 0.0
    return -sum(c / total * math.log2(c / total) for c in counts) + 0.0


def compute_metrics(trace: Iterable[Mapping[str, Any]]) -> RunMetrics:
    """Derive every run metric from the trace records alone.

    Raises:
        TraceError: when the trace lacks its ``start`` header or ``end`` footer.
    """
    records = list(trace)
    if not records or records[0].get("kind") != "start":
        raise TraceError("trace does not begin with a start record")
    if records[-1].get("kind") != "end":
        raise TraceError("trace is truncated: no end record")
    head = records[0]
    n = int(head["n_agents"])
    end_round = int(records[-1]["rounds"])
    m = RunMetrics(n_agents=n, seed=int(head["seed"]), rounds=end_round)
    adversaries = set(head.get("adversaries", ()))
    honest_labels = list(head.get("honest_labels", ()))
    labels = sorted(head.get("labels", {}))
    tasks = list(head.get("tasks", ()))
    m.zones_total = int(head.get("zones", 0))

    live = [True] * n
    # Coverage denominators count live honest agents only.
    live_count = n - len(adversaries)
    holders: dict[str, set[int]] = {l: set() for l in labels}
    live_holders: dict[str, int] = {l: 0 for l in labels}
    curves: dict[str, list[float]] = {l: [] for l in labels}
    per_round = [0] * (end_round + 1)
    load: Counter[int] = Counter()
    staleness: list[int] = []
    latest_label: dict[str, dict[int, str]] = defaultdict(dict)
    honest_adopt: Counter[str] = Counter()

    avg_vals: list[float] | None = None
    avg_sum0 = 0.0
    avg_var0 = 0.0
    avg_mean0 = 0.0
    entropy: list[float] = []

    kills: list[dict[str, Any]] = []
    dead_marks: dict[int, set[int]] = defaultdict(set)
    task_view: dict[str, dict[int, tuple[str, int | None, int]]] = {t: {} for t in tasks}
    task_claimants: dict[str, set[int]] = defaultdict(set)
    task_first_claim: dict[str, int] = {}
    task_announced: dict[str, int] = {}
    self_claims: dict[str, set[int]] = defaultdict(set)
    dup_rounds: Counter[str] = Counter()
    zone_first: dict[str, int] = {}

    def track_detection(rec: Mapping[str, Any]) -> None:
        peer = rec["peer"]
        status = rec["new_status"]
        for k in kills:
            if k["node"] != peer or k["closed"]:
                continue
            if status in ("suspect", "dead") and rec["node"] != peer and k["first_suspect"] is None:
                k["first_suspect"] = rec["round"] - k["killed_round"] + 1
            if status == "dead":
                dead_marks[peer].add(rec["node"])
            elif rec["node"] in dead_marks[peer]:
                dead_marks[peer].discard(rec["node"])

    def check_all_dead(r: int) -> None:
        for k in kills:
            if k["closed"] or k["all_dead"] is not None:
                continue
            t = k["node"]
            marks = dead_marks[t]
            if all(marks.__contains__(i) for i in range(n) if live[i] and i != t):
                k["all_dead"] = r - k["killed_round"] + 1

    for rec in records[1:-1]:
        kind = rec.get("kind")
        if kind == "msg":
            effect = rec["effect"]
            sent = rec["round"]
            if sent < 0 or sent > end_round:
                raise TraceError(f"message sent in round {sent} outside the run")
            if rec["deliver_round"] < sent:
                raise TraceError("message delivered before it was sent")
            m.messages_total += 1
            per_round[sent] += 1
            load[rec["from"]] += 1
            if effect in UNDELIVERED:
                setattr(m, effect, getattr(m, effect) + 1)
                continue
            m.deliveries += 1
            first = effect.split("+", 1)[0]
            if first == "duplicate_dropped":
                m.duplicates += 1
            elif first in ("rate_dropped", "trust_held", "rejected", "filtered"):
                setattr(m, first, getattr(m, first) + 1)
        elif kind == "ae":
            m.anti_entropy_exchanges += 1
            r = rec["round"]
            m.messages_total += 1
            per_round[r] += 1
            load[rec["a"]] += 1
            if rec["ok"]:
                m.messages_total += 1
                per_round[r] += 1
                load[rec["b"]] += 1
        elif kind == "adopt":
            label = rec["label"]
            node = rec["node"]
            if label not in holders:
                raise TraceError(f"adoption of undeclared label {label!r}")
            if node not in holders[label]:
                holders[label].add(node)
                if node not in adversaries:
                    honest_adopt[label] += 1
                    if live[node]:
                        live_holders[label] += 1
            staleness.append(rec["round"] - rec["born_round"])
            latest_label[rec.get("key", label)][node] = label
        elif kind == "round":
            r = rec["round"]
            for l in labels:
                curves[l].append(live_holders[l] / live_count if live_count else 0.0)
            if avg_vals is not None:
                entropy.append(_variance(avg_vals) / avg_var0 if avg_var0 > 0 else 0.0)
            check_all_dead(r)
            for tid, holders_ in self_claims.items():
                if sum(1 for h in holders_ if live[h]) >= 2:
                    dup_rounds[tid] += 1
        elif kind == "churn":
            action = rec["action"]
            if action in ("kill", "revive"):
                want = action == "revive"
                for t in rec["targets"]:
                    if live[t] == want:
                        continue
                    live[t] = want
                    if t not in adversaries:
                        live_count += 1 if want else -1
                        for l in labels:
                            if t in holders[l]:
                                live_holders[l] += 1 if want else -1
                    if want:
                        for k in kills:
                            if k["node"] == t:
                                k["closed"] = True
                    else:
                        kills.append({"node": t, "killed_round": rec["round"], "first_suspect": None,
                                      "all_dead": None, "closed": False})
        elif kind == "member":
            track_detection(rec)
        elif kind == "task":
            tid = rec["task_id"]
            state = rec["state"]
            task_view.setdefault(tid, {})[rec["node"]] = (state, rec["claimant"], rec["epoch"])
            task_announced.setdefault(tid, rec["round"])
            if state == "claimed" and rec["claimant"] == rec["node"]:
                self_claims[tid].add(rec["node"])
            else:
                self_claims[tid].discard(rec["node"])
            if state == "claimed":
                task_claimants[tid].add(rec["claimant"])
                task_first_claim.setdefault(tid, rec["round"])
        elif kind == "probes":
            m.probe_messages += rec["messages"]
        elif kind == "avg_init":
            avg_vals = [float(v) for v in rec["values"]]
            avg_sum0 = math.fsum(avg_vals)
            avg_mean0 = avg_sum0 / len(avg_vals)
            avg_var0 = _variance(avg_vals)
        elif kind == "avg":
            if avg_vals is None:
                raise TraceError("averaging step before avg_init")
            avg_vals[rec["a"]] = avg_vals[rec["b"]] = rec["value"]
            m.averaging_messages += 2
            drift = abs(math.fsum(avg_vals) - avg_sum0)
            if drift > m.max_sum_drift:
                m.max_sum_drift = drift
        elif kind == "visit":
            zone_first.setdefault(rec["zone"], rec["round"])
            if m.zones_total and len(zone_first) == m.zones_total and m.all_zones_round is None:
                m.all_zones_round = rec["round"]

    m.messages_per_round = per_round
    m.load_by_node = dict(load)
    m.max_load = max(load.values(), default=0)
    m.mean_load = sum(load.values()) / n if n else 0.0
    m.redundancy_ratio = m.duplicates / m.deliveries if m.deliveries else 0.0
    m.coverage_curve = curves
    for l in labels:
        m.final_coverage[l] = curves[l][-1] if curves[l] else 0.0
        m.adoptions[l] = len(holders[l])
        m.honest_adoptions[l] = honest_adopt[l]
    for l in honest_labels:
        born = head["labels"][l]
        m.rounds_to_full[l] = next((r for r, c in enumerate(curves[l]) if r >= born and c >= 1.0), None)
    m.staleness = staleness_percentiles(staleness)
    m.consensus_entropy = entropy
    if avg_vals is not None:
        m.averaging_max_deviation = max(abs(v - avg_mean0) for v in avg_vals)
    for key, by_node in sorted(latest_label.items()):
        m.value_entropy[key] = _entropy(Counter(l for node, l in by_node.items() if live[node]).values())
    m.detection = [
        {"node": k["node"], "killed_round": k["killed_round"], "first_suspect": k["first_suspect"],
         "all_dead": k["all_dead"]}
        for k in kills
    ]

    agreed = True
    done = 0
    for tid in sorted(task_view):
        views = [task_view[tid].get(i) for i in range(n) if live[i]]
        states = {v for v in views}
        final = views[0] if views else None
        ok = len(states) == 1 and final is not None and final[0] != "available" and final[1] is not None
        agreed = agreed and ok
        if ok and final[0] == "done":
            done += 1
        m.claims[tid] = {
            "state": None if final is None else final[0],
            "claimant": None if final is None else final[1],
            "epoch": None if final is None else final[2],
            "agreed": ok,
            "claimants_seen": len(task_claimants[tid]),
            "duplicate_claim_rounds": dup_rounds[tid],
            "time_to_claim": (task_first_claim[tid] - task_announced[tid]) if tid in task_first_claim else None,
        }
    m.tasks_agreed = agreed
    m.tasks_done = done
    m.duplicate_claim_rounds = sum(dup_rounds.values())
    m.zones_covered = len(zone_first)
    return m

"""Round-synchronous network simulator.

Round ``r >= 1`` runs these phases in order:

1. churn events scheduled for ``r`` (kill, revive, partition, heal)
2. expiry sweep and held-rumor timeouts on every live node
3. membership: suspicion timeouts, then one SWIM probe per node
4. task bookkeeping (completion, re-announcement)
5. gossip push from every live node, in id order
6. anti-entropy (every ``anti_entropy_period`` rounds) and averaging exchanges
7. delivery of messages due this round, in (send round, sender, sequence) order
8. workload injections scheduled for ``r``, then a round marker in the trace

Round 0 only applies churn and workload, so a rumor born at round 0 is first
pushed in round 1. A message sent in round ``r`` with latency ``L`` is
handled in round ``r + L - 1``; latency 1 means "arrives before the round
ends".

All randomness comes from per-node streams seeded by hashing the master seed
with the node id, so identical configs give identical traces.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Iterable

from ..coordination import (
    AgentProfile,
    TaskAd,
    TaskState,
    averaging_step,
    pick_uncovered_zone,
)
from ..core import AgentId, Priority, Rumor, canonical_json
from ..dissemination import (
    Effect,
    GossipNode,
    Observer,
    anti_entropy_exchange,
    effect_label,
    select_peers,
)
from ..membership import MemberRecord, probe_round
from ..state_store import LwwRecord
from .config import ScenarioConfig
from .metrics import RunMetrics, compute_metrics


def derive_seed(master: int, *parts: Any) -> int:
    text = "/".join(str(p) for p in (master, *parts))
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "big")


def trace_digest(trace: Iterable[dict]) -> str:
    h = hashlib.sha256()
    for rec in trace:
        h.update(canonical_json(rec).encode())
        h.update(b"\n")
    return h.hexdigest()


def write_trace(trace: Iterable[dict], path) -> None:
    with open(path, "w") as fh:
        for rec in trace:
            fh.write(canonical_json(rec))
            fh.write("\n")


def read_trace(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


class _Recorder(Observer):
    def __init__(self, sim: "Simulation"):
        self.sim = sim
        self.trace = sim.trace

    def kv_changed(self, node, rec: LwwRecord, round_, via, rumor) -> None:
        sim = self.sim
        if rec.tombstone or not sim.label_index:
            return
        label = sim.label_index.get((rec.key, rec.value))
        if label is None:
            return
        holders = sim.holders[label]
        if node.id in holders:
            return
        holders.add(node.id)
        if node.alive and node.id not in sim.adversary_of:
            sim.live_holders[label] += 1
        self.trace.append({
            "kind": "adopt",
            "round": round_,
            "node": node.id,
            "label": label,
            "key": rec.key,
            "born_round": sim.born_round[label],
            "via": via,
            "rumor_id": None if rumor is None else list(rumor.rumor_id),
        })

    def member_changed(self, node, old: MemberRecord | None, new: MemberRecord, round_) -> None:
        self.trace.append({
            "kind": "member",
            "round": round_,
            "node": node.id,
            "peer": new.id,
            "old_status": None if old is None else old.status.label,
            "new_status": new.status.label,
            "incarnation": new.incarnation,
        })

    def task_changed(self, node, old: TaskAd | None, new: TaskAd, round_) -> None:
        self.trace.append({
            "kind": "task",
            "round": round_,
            "node": node.id,
            "task_id": new.task_id,
            "state": new.state.label,
            "claimant": new.claimant,
            "epoch": new.epoch,
        })

    def gate_decision(self, node, rumor, fact, decision, round_) -> None:
        self.trace.append({
            "kind": "gate",
            "round": round_,
            "node": node.id,
            "rumor_id": None if rumor is None else list(rumor.rumor_id),
            "topic": fact[0],
            "gate_decision": "credible" if decision.credible else "held",
            "source_count": decision.source_count,
            "weighted_sum": round(decision.weighted_sum, 12),
        })

    def rejected(self, node, rumor, sender, reason, round_) -> None:
        rid = getattr(rumor, "rumor_id", None)
        self.trace.append({
            "kind": "reject",
            "round": round_,
            "node": node.id,
            "from": sender,
            "rumor_id": list(rid) if isinstance(rid, tuple) else None,
            "reason": reason,
        })


@dataclass
class LiveCounters:
    """Counters kept while the run is in flight; compute_metrics re-derives them from the trace."""

    sends: int = 0
    deliveries: int = 0
    duplicates: int = 0
    lost: int = 0
    unreachable: int = 0
    load: dict[int, int] = field(default_factory=lambda: defaultdict(int))


class Simulation:
    def __init__(self, config: ScenarioConfig):
        self.config = config
        n = config.n_agents
        self.n = n
        self.params = config.node_params()
        self.trace: list[dict] = []
        self.counters = LiveCounters()
        self.label_index: dict[tuple[str, bytes], str] = {}
        self.born_round: dict[str, int] = {}
        self.holders: dict[str, set[int]] = {}
        self.live_holders: dict[str, int] = {}
        self.honest_labels: list[str] = []
        self.recorder = _Recorder(self)
        self.nodes = [
            GossipNode(i, n, self.params, random.Random(derive_seed(config.seed, "node", i)), self.recorder)
            for i in range(n)
        ]
        self.live_count = n
        # Coverage is measured over live honest agents.
        self.honest_live = n
        self.rng = random.Random(derive_seed(config.seed, "workload"))
        self.group_of: list[int] | None = None
        self.pending: dict[int, list] = defaultdict(list)
        self.round = 0
        self.adversary_of: dict[int, Any] = {}
        for adv in config.adversaries:
            for a in adv.agents:
                self.adversary_of[a] = adv
                if adv.behavior == "tamper":
                    self.nodes[a].tamper = True
        self.honest_live = n - len(self.adversary_of)
        self._setup_labels()
        self._setup_tasks()
        self._churn_by_round: dict[int, list] = defaultdict(list)
        for ev in config.churn:
            self._churn_by_round[ev.round].append(ev)
        self.avg_values: list[float] | None = None
        self.zone_names: list[str] = []
        self.zone_next: dict[int, int] = {}

    # ------------------------------------------------------------------ setup

    def _setup_labels(self) -> None:
        for item in self.config.workload.rumors:
            self.label_index[(item.key, item.value.encode())] = item.label
            self.born_round[item.label] = item.round
            self.holders[item.label] = set()
            self.live_holders[item.label] = 0
            self.honest_labels.append(item.label)
        for adv in self.config.adversaries:
            if adv.behavior == "fabricate":
                self.label_index[(adv.key, adv.value.encode())] = adv.label
                self.born_round.setdefault(adv.label, adv.start_round)
                self.holders.setdefault(adv.label, set())
                self.live_holders.setdefault(adv.label, 0)

    def _setup_tasks(self) -> None:
        t = self.config.workload.tasks
        if t is None:
            return
        caps = t.capabilities
        loads = t.loads
        default_caps = frozenset(caps.get("default", t.descriptor))
        for node in self.nodes:
            agent_caps = caps.get("agents", {}).get(str(node.id))
            node.profile = AgentProfile(
                frozenset(agent_caps) if agent_caps is not None else default_caps,
                float(loads.get("agents", {}).get(str(node.id), loads.get("default", 0.0))),
            )

    # ------------------------------------------------------------------ helpers

    def _reachable(self, a: int, b: int) -> bool:
        if not self.nodes[b].alive:
            return False
        g = self.group_of
        return g is None or g[a] == g[b]

    def _send(self, sender: GossipNode, to: int, rumor: Rumor, round_: int) -> None:
        cfg = self.config
        c = self.counters
        c.sends += 1
        c.load[sender.id] += 1
        rng = sender.rng
        lat = cfg.latency
        delay = lat.min if lat.constant else rng.randint(lat.min, lat.max)
        if cfg.loss_p > 0.0 and rng.random() < cfg.loss_p:
            c.lost += 1
            self.trace.append(self._msg_record(round_, round_ + delay - 1, sender.id, to, rumor, "lost"))
            return
        self.pending[round_ + delay - 1].append((round_, sender.id, to, rumor))

    @staticmethod
    def _msg_record(sent: int, due: int, frm: int, to: int, rumor: Rumor, effect: str) -> dict:
        return {
            "kind": "msg",
            "round": sent,
            "deliver_round": due,
            "from": frm,
            "to": to,
            "rumor_id": [rumor.rumor_id[0], rumor.rumor_id[1]],
            "topic": rumor.topic,
            "ttl": rumor.ttl_hops,
            "effect": effect,
        }

    def _lost(self, rng: random.Random) -> bool:
        p = self.config.loss_p
        return p > 0.0 and rng.random() < p

    def live_ids(self) -> list[int]:
        return [n.id for n in self.nodes if n.alive]

    # ------------------------------------------------------------------ phases

    def _apply_churn(self, r: int) -> None:
        for ev in self._churn_by_round.get(r, ()):
            targets = list(ev.targets)
            if ev.action == "kill" and ev.claimant_of:
                who = self._claimant_of(ev.claimant_of)
                if who is not None and who not in targets:
                    targets.append(who)
            if ev.action in ("kill", "revive"):
                want = ev.action == "revive"
                changed = []
                for t in targets:
                    node = self.nodes[t]
                    if node.alive == want:
                        continue
                    node.alive = want
                    self.live_count += 1 if want else -1
                    if t not in self.adversary_of:
                        self.honest_live += 1 if want else -1
                        for label, holders in self.holders.items():
                            if t in holders:
                                self.live_holders[label] += 1 if want else -1
                    changed.append(t)
                self.trace.append({"kind": "churn", "round": r, "action": ev.action, "targets": changed})
                if want:
                    for t in changed:
                        self.nodes[t].rejoin(r)
            elif ev.action == "partition":
                group_of = [len(targets)] * self.n
                for gi, group in enumerate(targets):
                    for a in group:
                        group_of[a] = gi
                self.group_of = group_of
                self.trace.append({"kind": "churn", "round": r, "action": "partition", "targets": targets})
            else:
                self.group_of = None
                self.trace.append({"kind": "churn", "round": r, "action": "heal", "targets": []})

    def _claimant_of(self, task_id: str) -> int | None:
        name = "task/" + task_id
        for node in self.nodes:
            if node.alive:
                ad = node.store.crdts.get(name)
                if ad is not None and ad.state is TaskState.CLAIMED:
                    return ad.claimant
        return None

    def _membership(self, r: int) -> None:
        p = self.params
        probes = 0
        for node in self.nodes:
            if not node.alive:
                continue
            node.tick_membership(r)
            plan = probe_round(node.view, node.rng, p.proxy_count)
            if plan.is_noop:
                continue
            t = plan.target
            rng = node.rng
            probes += 1
            ok = self._reachable(node.id, t) and not self._lost(rng)
            if ok:
                probes += 1
                ok = not self._lost(rng)
            if not ok:
                for proxy in plan.proxies:
                    hops = 0
                    relay_ok = True
                    for a, b in ((node.id, proxy), (proxy, t), (t, proxy), (proxy, node.id)):
                        hops += 1
                        if not (self._reachable(a, b) and not self._lost(rng)):
                            relay_ok = False
                            break
                    probes += hops
                    if relay_ok:
                        ok = True
                        break
            if not ok:
                node.suspect(t, r)
        if probes:
            self.trace.append({"kind": "probes", "round": r, "messages": probes})

    def _gossip(self, r: int) -> None:
        broadcast = self.config.mode == "broadcast"
        for node in self.nodes:
            if not node.alive or not node.buffer.entries:
                continue
            if broadcast:
                for rumor, _, _ in list(node.buffer.entries.values()):
                    if rumor.origin == node.id:
                        fwd = rumor.forwarded()
                        for peer in select_peers(node.view, self.n, node.rng):
                            self._send(node, peer, fwd, r)
                node.buffer.entries.clear()
                continue
            for peer, rumor in node.gossip_round(r):
                self._send(node, peer, rumor, r)

    def _anti_entropy(self, r: int) -> None:
        for node in self.nodes:
            if not node.alive:
                continue
            peers = select_peers(node.view, 1, node.rng)
            if not peers:
                continue
            peer = peers[0]
            c = self.counters
            c.sends += 1
            c.load[node.id] += 1
            if not self._reachable(node.id, peer) or self._lost(node.rng):
                self.trace.append({"kind": "ae", "round": r, "a": node.id, "b": peer, "ok": False,
                                   "pulled_a": [], "pulled_b": []})
                continue
            c.sends += 1
            c.load[peer] += 1
            rep = anti_entropy_exchange(node, self.nodes[peer], r)
            self.trace.append({
                "kind": "ae",
                "round": r,
                "a": node.id,
                "b": peer,
                "ok": True,
                "pulled_a": rep.pulled_by_a + rep.crdts_a,
                "pulled_b": rep.pulled_by_b + rep.crdts_b,
            })

    def _averaging(self, r: int) -> None:
        avg = self.config.workload.averaging
        vals = self.avg_values
        if avg is None or vals is None or not (avg.start_round <= r < avg.start_round + avg.rounds):
            return
        for node in self.nodes:
            if not node.alive:
                continue
            peers = select_peers(node.view, 1, node.rng)
            if not peers:
                continue
            j = peers[0]
            if not self._reachable(node.id, j) or self._lost(node.rng) or self._lost(node.rng):
                continue
            m, _ = averaging_step(vals[node.id], vals[j])
            vals[node.id] = vals[j] = m
            node.value = self.nodes[j].value = m
            self.trace.append({"kind": "avg", "round": r, "a": node.id, "b": j, "value": m})

    def _deliver(self, r: int) -> None:
        batch = self.pending.pop(r, None)
        if not batch:
            return
        nodes = self.nodes
        c = self.counters
        trace = self.trace
        group_of = self.group_of
        broadcast = self.config.mode == "broadcast"
        for sent, frm, to, rumor in batch:
            node = nodes[to]
            if not node.alive or (group_of is not None and group_of[frm] != group_of[to]):
                c.unreachable += 1
                trace.append(self._msg_record(sent, r, frm, to, rumor, "unreachable"))
                continue
            effects = node.handle_gossip(rumor, frm, r)
            c.deliveries += 1
            if effects[0] is Effect.DUPLICATE_DROPPED:
                c.duplicates += 1
            if broadcast:
                node.buffer.entries.pop(rumor.rumor_id, None)
            trace.append(self._msg_record(sent, r, frm, to, rumor, effect_label(effects)))

    def _workload(self, r: int) -> None:
        wl = self.config.workload
        for item in wl.rumors:
            if item.round == r:
                for o in item.origins:
                    node = self.nodes[o]
                    if node.alive:
                        node.write_kv(item.key, item.value.encode(), r, Priority(item.priority))
        for adv in self.config.adversaries:
            if r < adv.start_round:
                continue
            for a in adv.agents:
                node = self.nodes[a]
                if not node.alive:
                    continue
                if adv.behavior == "fabricate":
                    for _ in range(adv.rate):
                        node.write_kv(adv.key, adv.value.encode(), r, Priority(adv.priority))
                elif adv.behavior == "flood":
                    for i in range(adv.rate):
                        node.write_kv(f"spam/{a}/{r}/{i}", b"spam", r, Priority.ROUTINE)
        t = wl.tasks
        if t is not None and t.round == r:
            for i in range(t.count):
                origin = t.origins[i % len(t.origins)]
                node = self.nodes[origin]
                if node.alive:
                    node.announce(f"t{i}", t.descriptor, r, Priority(t.priority))
        avg = wl.averaging
        if avg is not None and r == 0:
            if avg.values is not None:
                vals = [float(v) for v in avg.values]
            else:
                vals = [self.rng.random() for _ in range(self.n)]
            self.avg_values = vals
            for node, v in zip(self.nodes, vals):
                node.value = v
            self.trace.append({"kind": "avg_init", "round": 0, "values": list(vals)})
        ops = wl.random_ops
        if ops is not None and ops.start_round <= r <= ops.end_round:
            self._random_ops(r)
        if wl.zones is not None:
            self._zones(r)
        if wl.load_report_period and r % wl.load_report_period == 0:
            for node in self.nodes:
                if node.alive:
                    node.publish_load(r)

    def _random_ops(self, r: int) -> None:
        ops = self.config.workload.random_ops
        rng = self.rng
        kinds = ["write", "delete", "increment", "set_op"]
        weights = [ops.write, ops.delete, ops.increment if ops.counters else 0.0, ops.set_op if ops.sets else 0.0]
        live = self.live_ids()
        if not live:
            return
        for _ in range(ops.ops_per_round):
            node = self.nodes[live[rng.randrange(len(live))]]
            kind = rng.choices(kinds, weights)[0]
            if kind == "write":
                node.write_kv(f"k{rng.randrange(ops.keys)}", f"v{r}.{node.id}.{rng.randrange(1000)}".encode(), r)
            elif kind == "delete":
                node.delete_kv(f"k{rng.randrange(ops.keys)}", r)
            elif kind == "increment":
                node.increment_counter(f"ctr/{rng.randrange(ops.counters)}", 1 + rng.randrange(5), r)
            else:
                name = f"set/{rng.randrange(ops.sets)}"
                elem = f"e{rng.randrange(6)}"
                if rng.random() < 0.6:
                    node.orset_add(name, elem, r)
                else:
                    node.orset_remove(name, elem, r)

    def _zones(self, r: int) -> None:
        z = self.config.workload.zones
        if r < z.start_round:
            return
        if not self.zone_names:
            self.zone_names = [f"z{i}" for i in range(z.zones)]
        drones = z.drones if z.drones is not None else range(self.n)
        for d in drones:
            node = self.nodes[d]
            if not node.alive or self.zone_next.get(d, z.start_round) > r:
                continue
            zone = pick_uncovered_zone(node.intents, self.zone_names, node.rng, z.silence_rounds, r)
            node.declare_intent("search", zone, r)
            self.zone_next[d] = r + z.dwell_rounds
            self.trace.append({"kind": "visit", "round": r, "node": d, "zone": zone})

    # ------------------------------------------------------------------ driver

    def _all_covered(self) -> bool:
        if not self.honest_labels:
            return False
        live = self.honest_live
        return all(self.live_holders[l] >= live for l in self.honest_labels)

    def _workload_pending(self, r: int) -> bool:
        wl = self.config.workload
        return any(item.round > r for item in wl.rumors) or any(ev.round > r for ev in self.config.churn)

    def run(self) -> tuple[RunMetrics, list[dict]]:
        cfg = self.config
        self.trace.append({
            "kind": "start",
            "n_agents": self.n,
            "seed": cfg.seed,
            "rounds": cfg.rounds,
            "mode": cfg.mode,
            "fanout": cfg.fanout,
            "loss_p": cfg.loss_p,
            "adversaries": sorted(self.adversary_of),
            "labels": {label: self.born_round[label] for label in sorted(self.born_round)},
            "honest_labels": list(self.honest_labels),
            "tasks": [] if cfg.workload.tasks is None else [f"t{i}" for i in range(cfg.workload.tasks.count)],
            "zones": 0 if cfg.workload.zones is None else cfg.workload.zones.zones,
        })
        self._apply_churn(0)
        self._workload(0)
        self.trace.append({"kind": "round", "round": 0, "live": self.live_count})
        p = cfg.protocol
        gossip = cfg.mode == "gossip"
        last = 0
        stop = p.stop_at_full_coverage and self._all_covered() and not self._workload_pending(0)
        for r in range(1, cfg.rounds + 1) if not stop else ():
            self.round = r
            last = r
            self._apply_churn(r)
            for node in self.nodes:
                if node.alive and (node.held or node.store.lww):
                    node.start_round(r)
            if gossip and p.membership:
                self._membership(r)
            if cfg.workload.tasks is not None:
                for node in self.nodes:
                    if node.alive:
                        node.tick_tasks(r)
            self._gossip(r)
            if gossip and p.anti_entropy_period and r % p.anti_entropy_period == 0:
                self._anti_entropy(r)
            self._averaging(r)
            self._deliver(r)
            self._workload(r)
            self.trace.append({"kind": "round", "round": r, "live": self.live_count})
            if p.stop_at_full_coverage and self._all_covered() and not self._workload_pending(r):
                break
        for due in sorted(self.pending):
            for sent, frm, to, rumor in self.pending[due]:
                self.trace.append(self._msg_record(sent, due, frm, to, rumor, "in_flight"))
        self.pending.clear()
        self.trace.append({"kind": "end", "rounds": last})
        return compute_metrics(self.trace), self.trace

    def store_dumps(self, live_only: bool = True) -> dict[int, str]:
        return {n.id: n.store.dump() for n in self.nodes if n.alive or not live_only}


def run(config: ScenarioConfig) -> tuple[RunMetrics, list[dict]]:
    return Simulation(config).run()


def direct_broadcast_baseline(config: ScenarioConfig) -> RunMetrics:
    """Same scenario, but each origin sends every rumor straight to every peer, once, with no relaying."""
    cfg = config.with_overrides(mode="broadcast")
    return Simulation(cfg).run()[0]

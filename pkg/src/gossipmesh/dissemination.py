"""The per-node epidemic engine.

Each round a node pushes every rumor in its hot buffer to ``fanout`` random
live peers it does not already know to hold it, with the hop budget spent by
one. Incoming rumors pass a duplicate check, an optional topic filter, the
rate limiter and the credibility gate before they touch local state.
Periodic push-pull anti-entropy reconciles whatever the rumors missed.
"""

from __future__ import annotations

import enum
import functools
import json
import math
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Collection, Hashable, Iterable

from .coordination import (
    TASK_PREFIX,
    AgentProfile,
    IntentRecord,
    IntentRegistry,
    TaskAd,
    TaskState,
    announce_task,
    complete_task,
    estimate_load,
    evaluate_claim,
    reannounce,
    task_topic,
    update_intent,
)
from .core import (
    AgentId,
    Priority,
    Rumor,
    RumorId,
    Version,
    canonical_json,
    digest_diff,
    next_version,
    rumor_problem,
)
from .membership import MemberRecord, MembershipView, Status, mark_suspect, refute, sample_ids
from .state_store import (
    KV_PREFIX,
    GCounter,
    LwwRecord,
    ORSet,
    Store,
    crdt_from_payload,
    crdt_payload,
    delete,
    kv_topic,
    record_from_rumor,
    record_payload,
    write,
)
from .temporal import expire_sweep
from .trust import ConfirmationTracker, Outcome, TrustLedger, gate

MEMBER_PREFIX = "member/"
INTENT_PREFIX = "intent/"
LOAD_PREFIX = "load/"


class Effect(str, enum.Enum):
    ADOPTED = "adopted"
    BUFFERED = "buffered"
    DUPLICATE_DROPPED = "duplicate_dropped"
    TTL_DROPPED = "ttl_dropped"
    RATE_DROPPED = "rate_dropped"
    TRUST_HELD = "trust_held"
    FILTERED = "filtered"
    REJECTED = "rejected"


@functools.lru_cache(maxsize=None)
def _joined(effects: tuple[Effect, ...]) -> str:
    return "+".join(e.value for e in effects)


def effect_label(effects: Iterable[Effect]) -> str:
    return _joined(tuple(effects))


def default_ttl(n_agents: int) -> int:
    return math.ceil(math.log2(max(n_agents, 2))) + 4


def forward_probability(priority: Priority, rounds_seen: int) -> float:
    """Chance of pushing a buffered rumor again after ``rounds_seen`` rounds in the buffer."""
    if rounds_seen < 1:
        raise ValueError("rounds_seen starts at 1")
    if priority is Priority.CRITICAL:
        return 1.0
    if priority is Priority.NORMAL:
        return 1.0 / rounds_seen
    return 1.0 / (2 * rounds_seen)


def select_peers(
    view: MembershipView,
    fanout: int,
    rng: random.Random,
    exclude: Collection[AgentId] = (),
) -> list[AgentId]:
    """Up to ``fanout`` distinct alive peers outside ``exclude``, uniform without replacement."""
    if fanout <= 0:
        return []
    blocked = set(exclude)
    blocked.add(view.self_id)
    if view.not_alive:
        blocked |= view.not_alive
    return sample_ids(view.n, fanout, rng, blocked)


class HotBuffer:
    """Rumors still being mongered, with how many rounds each has been pushed.

    Each entry is ``[rumor, rounds_seen, known_holders]``. When full, the
    stalest entry (most rounds seen, then oldest) makes room.
    """

    def __init__(self, capacity: int = 1024):
        if capacity < 1:
            raise ValueError("buffer capacity must be positive")
        self.capacity = capacity
        self.entries: dict[RumorId, list] = {}

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, rid: object) -> bool:
        return rid in self.entries

    def add(self, rumor: Rumor, known: Iterable[AgentId] = ()) -> RumorId | None:
        if rumor.rumor_id in self.entries:
            return None
        evicted = None
        if len(self.entries) >= self.capacity:
            evicted = max(
                self.entries,
                key=lambda rid: (self.entries[rid][1], -self.entries[rid][0].created_round, rid),
            )
            del self.entries[evicted]
        self.entries[rumor.rumor_id] = [rumor, 1, set(known)]
        return evicted

    def rounds_seen(self, rid: RumorId) -> int:
        return self.entries[rid][1]


@dataclass
class RateLimiter:
    max_new_per_round: int | None = None
    admitted_this_round: int = 0
    round: int = -1
    admitted_ids: set = field(default_factory=set)

    def reset(self, round_: int) -> None:
        self.round = round_
        self.admitted_this_round = 0
        self.admitted_ids = set()


def admit(limiter: RateLimiter, rumor: Rumor, round_: int) -> bool:
    """Admit at most ``max_new_per_round`` distinct new rumors per round; critical ones always pass."""
    if round_ != limiter.round:
        limiter.reset(round_)
    if rumor.priority is Priority.CRITICAL or limiter.max_new_per_round is None:
        return True
    if rumor.rumor_id in limiter.admitted_ids:
        return True
    if limiter.admitted_this_round >= limiter.max_new_per_round:
        return False
    limiter.admitted_this_round += 1
    limiter.admitted_ids.add(rumor.rumor_id)
    return True


@dataclass
class NodeParams:
    fanout: int = 3
    ttl_hops: int = 8
    hot_rounds: int = 8
    rate_limit: int | None = None
    buffer_capacity: int = 1024
    k: int = 1
    theta: float = math.inf
    trust_default: float = 0.5
    trust_alpha: float = 0.1
    hold_rounds: int = 8
    suspicion_timeout: int = 3
    proxy_count: int = 3
    member_priority: Priority = Priority.CRITICAL
    grace_period: int = 64
    value_ttl_rounds: int | None = None
    load_threshold: float = 0.8
    work_rounds: int = 3


@dataclass
class SyncReport:
    pulled_by_a: list[str] = field(default_factory=list)
    pulled_by_b: list[str] = field(default_factory=list)
    crdts_a: list[str] = field(default_factory=list)
    crdts_b: list[str] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not (self.pulled_by_a or self.pulled_by_b or self.crdts_a or self.crdts_b)


class Observer:
    """Receives notable node events; the simulator subclasses this to build its trace."""

    def kv_changed(self, node: "GossipNode", rec: LwwRecord, round_: int, via: str, rumor: Rumor | None) -> None:
        pass

    def member_changed(self, node: "GossipNode", old: MemberRecord, new: MemberRecord, round_: int) -> None:
        pass

    def task_changed(self, node: "GossipNode", old: TaskAd | None, new: TaskAd, round_: int) -> None:
        pass

    def gate_decision(self, node: "GossipNode", rumor: Rumor | None, fact: Hashable, decision: Any, round_: int) -> None:
        pass

    def rejected(self, node: "GossipNode", rumor: Any, sender: AgentId, reason: str, round_: int) -> None:
        pass


_NULL_OBSERVER = Observer()


def member_payload(rec: MemberRecord) -> bytes:
    return canonical_json({"id": rec.id, "status": rec.status.label, "incarnation": rec.incarnation}).encode()


def member_from_payload(payload: bytes, round_: int) -> MemberRecord:
    body = json.loads(payload)
    return MemberRecord(int(body["id"]), Status.parse(body["status"]), int(body["incarnation"]), round_)


class GossipNode:
    """All protocol state held by one agent.

    Only the simulator's event loop calls into a node, one call at a time.
    """

    def __init__(
        self,
        node_id: AgentId,
        n: int,
        params: NodeParams | None = None,
        rng: random.Random | None = None,
        observer: Observer | None = None,
    ):
        self.id = node_id
        self.params = params or NodeParams()
        self.rng = rng or random.Random(node_id)
        self.observer = observer or _NULL_OBSERVER
        self.alive = True
        self.view = MembershipView(node_id, n, self.params.suspicion_timeout)
        self.store = Store()
        self.tracker = ConfirmationTracker(node_id)
        self.ledger = TrustLedger(self.params.trust_default, self.params.trust_alpha)
        self.buffer = HotBuffer(self.params.buffer_capacity)
        self.limiter = RateLimiter(self.params.rate_limit)
        self.seen: set[RumorId] = set()
        self.held: dict[RumorId, tuple[Rumor, int, AgentId]] = {}
        self.held_by_fact: dict[Hashable, list[RumorId]] = {}
        self.clock = Version(0, node_id)
        self.seq = 0
        self.accept: Callable[[Rumor], bool] | None = None
        self.tamper = False
        self.profile = AgentProfile()
        self.intents = IntentRegistry()
        self.relayers: dict[str, set[AgentId]] = {}
        self.announced: set[str] = set()
        self.claimed_at: dict[str, int] = {}
        self.my_suspicions: set[AgentId] = set()
        self.value = 0.0

    # ------------------------------------------------------------------ origination

    def _tick(self, observed: Version | None = None) -> Version:
        self.clock = next_version(self.clock, observed or self.clock)
        return self.clock

    def originate(
        self,
        topic: str,
        payload: bytes,
        round_: int,
        priority: Priority = Priority.NORMAL,
        version: Version | None = None,
    ) -> Rumor:
        """Wrap a local update in a fresh rumor and start mongering it."""
        if version is None:
            version = self._tick()
        elif version > self.clock:
            self.clock = Version(version.lamport, self.id)
        self.seq += 1
        rumor = Rumor((self.id, self.seq), topic, payload, version, priority, self.params.ttl_hops, round_)
        self.seen.add(rumor.rumor_id)
        if rumor.ttl_hops > 0:
            self.buffer.add(rumor)
        return rumor

    def write_kv(self, key: str, value: bytes, round_: int, priority: Priority = Priority.NORMAL,
                 ttl_rounds: int | None = -1) -> Rumor:
        ttl = self.params.value_ttl_rounds if ttl_rounds == -1 else ttl_rounds
        rec = write(self.store, key, value, self.clock, round_, ttl)
        self.clock = Version(max(self.clock.lamport, rec.version.lamport), self.id)
        self.relayers[key] = set()
        self._kv_hooks(rec, round_)
        rumor = self.originate(kv_topic(key), record_payload(rec), round_, priority, rec.version)
        self.observer.kv_changed(self, rec, round_, "local", rumor)
        return rumor

    def delete_kv(self, key: str, round_: int, priority: Priority = Priority.NORMAL) -> Rumor:
        tomb = delete(self.store, key, self.clock, round_, self.params.grace_period)
        self.clock = Version(max(self.clock.lamport, tomb.version.lamport), self.id)
        self.relayers[key] = set()
        rumor = self.originate(kv_topic(key), record_payload(tomb), round_, priority, tomb.version)
        self.observer.kv_changed(self, tomb, round_, "local", rumor)
        return rumor

    def update_crdt(self, name: str, obj: Any, round_: int, priority: Priority = Priority.NORMAL) -> Rumor:
        self.store.merge_crdt(name, obj)
        return self.originate(name, crdt_payload(self.store.crdts[name]), round_, priority)

    def increment_counter(self, name: str, amount: int, round_: int) -> Rumor:
        cur = self.store.crdts.get(name, GCounter())
        return self.update_crdt(name, cur.increment(self.id, amount), round_)

    def orset_add(self, name: str, elem: str, round_: int) -> Rumor:
        cur = self.store.crdts.get(name, ORSet())
        self.seq += 1
        return self.update_crdt(name, cur.add(elem, (self.id, self.seq)), round_)

    def orset_remove(self, name: str, elem: str, round_: int) -> Rumor:
        cur = self.store.crdts.get(name, ORSet())
        return self.update_crdt(name, cur.remove(elem), round_)

    # ------------------------------------------------------------------ receiving

    def start_round(self, round_: int) -> list[str]:
        """Round-start housekeeping: expiry sweep and held-rumor timeouts."""
        if self.held:
            limit = self.params.hold_rounds
            stale = [rid for rid, (_, since, _) in self.held.items() if round_ - since >= limit]
            for rid in stale:
                rumor = self.held.pop(rid)[0]
                ids = self.held_by_fact.get(rumor.fact_key)
                if ids is not None:
                    ids.remove(rid)
                    if not ids:
                        del self.held_by_fact[rumor.fact_key]
        return expire_sweep(self.store, round_) if self.store.lww else []

    def _vouch(self, rumor: Rumor, sender: AgentId, round_: int) -> None:
        fact = rumor.fact_key
        self.tracker.record(fact, rumor.rumor_id[0], round_)
        self.tracker.record(fact, sender, round_)

    def _credible(self, rumor: Rumor | None, fact: Hashable, round_: int, priority: Priority) -> bool:
        p = self.params
        if p.k <= 1:
            return True
        decision = gate(self.tracker, self.ledger, fact, p.k, p.theta, priority)
        self.observer.gate_decision(self, rumor, fact, decision, round_)
        return decision.credible

    def handle_gossip(self, msg: Rumor, sender: AgentId, round_: int) -> tuple[Effect, ...]:
        problem = rumor_problem(msg)
        if problem is not None:
            self.observer.rejected(self, msg, sender, problem, round_)
            return (Effect.REJECTED,)
        if not msg.authentic:
            self.observer.rejected(self, msg, sender, "failed authenticity check", round_)
            return (Effect.TRUST_HELD,)
        rid = msg.rumor_id
        if rid in self.seen:
            self._vouch(msg, sender, round_)
            fact = msg.fact_key
            if fact in self.held_by_fact and self._credible(msg, fact, round_, msg.priority):
                return (Effect.DUPLICATE_DROPPED,) + self._release(fact, round_)
            if self.params.k > 1:
                self._note_relay(msg, sender)
            return (Effect.DUPLICATE_DROPPED,)
        if self.accept is not None and not self.accept(msg):
            return (Effect.FILTERED,)
        if not admit(self.limiter, msg, round_):
            return (Effect.RATE_DROPPED,)
        self.seen.add(rid)
        self._vouch(msg, sender, round_)
        fact = msg.fact_key
        if not self._credible(msg, fact, round_, msg.priority):
            self.held[rid] = (msg, round_, sender)
            self.held_by_fact.setdefault(fact, []).append(rid)
            return (Effect.TRUST_HELD,)
        if fact in self.held_by_fact:
            self._release(fact, round_)
        return self._adopt(msg, sender, round_)

    def _release(self, fact: Hashable, round_: int) -> tuple[Effect, ...]:
        effects: tuple[Effect, ...] = ()
        for rid in self.held_by_fact.pop(fact, []):
            rumor, _, via = self.held.pop(rid)
            effects = self._adopt(rumor, via, round_)
        return effects

    def _adopt(self, msg: Rumor, sender: AgentId, round_: int) -> tuple[Effect, ...]:
        if msg.version.lamport >= self.clock.lamport:
            self.clock = Version(msg.version.lamport, self.id)
        if not self._apply(msg, sender, round_):
            # Nothing new to this node (older or identical content under a fresh id): keep it quiet.
            return (Effect.ADOPTED,)
        if msg.ttl_hops > 0:
            self.buffer.add(msg, (sender, msg.rumor_id[0]))
            return (Effect.ADOPTED, Effect.BUFFERED)
        return (Effect.ADOPTED, Effect.TTL_DROPPED)

    def _apply(self, msg: Rumor, sender: AgentId, round_: int) -> bool:
        topic = msg.topic
        if topic.startswith(KV_PREFIX):
            rec = record_from_rumor(topic, msg.payload, msg.version)
            return self._apply_record(rec, sender, round_, "rumor", msg)
        if topic.startswith(MEMBER_PREFIX):
            return self._apply_member(member_from_payload(msg.payload, round_), round_)
        return self._apply_crdt(topic, crdt_from_payload(msg.payload), round_)

    def _apply_record(self, rec: LwwRecord, sender: AgentId, round_: int, via: str, rumor: Rumor | None) -> bool:
        changed, displaced = self.store.apply(rec, round_)
        if not changed:
            return False
        key = rec.key
        if displaced is not None and (displaced.value, displaced.tombstone) != (rec.value, rec.tombstone):
            for peer in sorted(self.relayers.get(key, ())):
                self.ledger.update(peer, Outcome.CONTRADICTED)
        self.relayers[key] = {sender}
        if self.params.k > 1:
            self.ledger.update(sender, Outcome.CORROBORATED)
        self._kv_hooks(rec, round_)
        self.observer.kv_changed(self, rec, round_, via, rumor)
        return True

    def _note_relay(self, msg: Rumor, sender: AgentId) -> None:
        if not msg.topic.startswith(KV_PREFIX):
            return
        key = msg.topic[len(KV_PREFIX):]
        cur = self.store.lww.get(key)
        if cur is None or cur.version != msg.version:
            return
        peers = self.relayers.setdefault(key, set())
        if sender not in peers:
            peers.add(sender)
            self.ledger.update(sender, Outcome.CORROBORATED)

    def _kv_hooks(self, rec: LwwRecord, round_: int) -> None:
        if rec.key.startswith(INTENT_PREFIX) and not rec.tombstone:
            body = json.loads(rec.value)
            intent = IntentRecord(int(rec.key[len(INTENT_PREFIX):]), body["activity"], body["zone"], rec.version)
            update_intent(self.intents, intent, round_)

    def _apply_member(self, remote: MemberRecord, round_: int) -> bool:
        old = self.view.get(remote.id) if remote.id in self.view else None
        new = self.view.apply(remote, round_)
        if new is None:
            return False
        self.observer.member_changed(self, old, new, round_)
        if new.id == self.id:
            _, alive = refute(self.view, round_)
            if alive is not None:
                self.observer.member_changed(self, new, alive, round_)
                self.originate(MEMBER_PREFIX + str(self.id), member_payload(alive), round_,
                               self.params.member_priority)
        return True

    def _apply_crdt(self, name: str, obj: Any, round_: int) -> bool:
        old = self.store.crdts.get(name)
        if not self.store.merge_crdt(name, obj):
            return False
        if isinstance(obj, TaskAd):
            self._on_task(old, self.store.crdts[name], round_)
        return True

    # ------------------------------------------------------------------ sending

    def gossip_round(self, round_: int) -> list[tuple[AgentId, Rumor]]:
        """Push each hot rumor to fresh peers; returns the outgoing ``(peer, rumor)`` batch."""
        out: list[tuple[AgentId, Rumor]] = []
        entries = self.buffer.entries
        if not entries:
            return out
        p = self.params
        rng = self.rng
        retired = []
        for rid, entry in entries.items():
            rumor, rs, known = entry
            if rs > p.hot_rounds or rumor.ttl_hops <= 0:
                retired.append(rid)
                continue
            entry[1] = rs + 1
            if rumor.priority is not Priority.CRITICAL and rng.random() >= forward_probability(rumor.priority, rs):
                continue
            peers = select_peers(self.view, p.fanout, rng, known)
            if not peers:
                continue
            fwd = rumor.forwarded()
            if self.tamper:
                fwd = fwd.tampered()
            for peer in peers:
                known.add(peer)
                out.append((peer, fwd))
        for rid in retired:
            del entries[rid]
        return out

    # ------------------------------------------------------------------ anti-entropy

    def receive_record(self, rec: LwwRecord, peer: AgentId, round_: int) -> bool:
        """Take a record handed over by anti-entropy, subject to the same credibility gate as rumors."""
        if self.params.k > 1:
            fact = (kv_topic(rec.key), record_payload(rec))
            self.tracker.record(fact, rec.version.author, round_)
            self.tracker.record(fact, peer, round_)
            if not self._credible(None, fact, round_, Priority.NORMAL):
                return False
        if rec.version.lamport >= self.clock.lamport:
            self.clock = Version(rec.version.lamport, self.id)
        return self._apply_record(rec, peer, round_, "anti_entropy", None)

    # ------------------------------------------------------------------ membership

    def suspect(self, member: AgentId, round_: int) -> Rumor | None:
        old = self.view.get(member)
        rec = mark_suspect(self.view, member, round_)
        if rec is None:
            return None
        self.my_suspicions.add(member)
        self.observer.member_changed(self, old, rec, round_)
        return self.originate(MEMBER_PREFIX + str(member), member_payload(rec), round_, self.params.member_priority)

    def tick_membership(self, round_: int) -> list[MemberRecord]:
        if not self.view.suspect_since:
            return []
        before = {m: self.view.get(m) for m in self.view.suspect_since}
        dead = self.view.tick(round_)
        for rec in dead:
            self.observer.member_changed(self, before[rec.id], rec, round_)
            if rec.id in self.my_suspicions:
                self.my_suspicions.discard(rec.id)
                self.originate(MEMBER_PREFIX + str(rec.id), member_payload(rec), round_, self.params.member_priority)
        return dead

    def rejoin(self, round_: int) -> Rumor:
        """Come back after a crash under a bumped incarnation."""
        me = self.view.me
        alive = MemberRecord(self.id, Status.ALIVE, me.incarnation + 1, round_)
        self.view.set(alive)
        self.observer.member_changed(self, me, alive, round_)
        return self.originate(MEMBER_PREFIX + str(self.id), member_payload(alive), round_, self.params.member_priority)

    # ------------------------------------------------------------------ tasks

    def announce(self, task_id: str, descriptor: Iterable[str], round_: int,
                 priority: Priority = Priority.NORMAL) -> Rumor:
        ad = announce_task(self.announced, self.id, task_id, descriptor, self.clock, priority)
        self.clock = ad.claim_version
        name = task_topic(task_id)
        old = self.store.crdts.get(name)
        self.store.merge_crdt(name, ad)
        self.observer.task_changed(self, old, self.store.crdts[name], round_)
        return self.originate(name, crdt_payload(self.store.crdts[name]), round_, priority)

    def _on_task(self, old: TaskAd | None, ad: TaskAd, round_: int) -> None:
        self.observer.task_changed(self, old, ad, round_)
        if ad.state is TaskState.AVAILABLE and ad.origin != self.id:
            claim = evaluate_claim(self.profile, ad, self.params.load_threshold, self.id, self.clock)
            if claim is not None:
                self.clock = claim.claim_version
                name = task_topic(ad.task_id)
                self.store.merge_crdt(name, claim)
                self.claimed_at[ad.task_id] = round_
                self.observer.task_changed(self, ad, self.store.crdts[name], round_)
                self.originate(name, crdt_payload(self.store.crdts[name]), round_, ad.priority)

    def tick_tasks(self, round_: int) -> None:
        for name in sorted(n for n in self.store.crdts if n.startswith(TASK_PREFIX)):
            ad: TaskAd = self.store.crdts[name]
            if ad.state is not TaskState.CLAIMED:
                continue
            if ad.claimant == self.id:
                since = self.claimed_at.get(ad.task_id)
                if since is not None and round_ - since >= self.params.work_rounds:
                    self._set_task(name, complete_task(ad), round_)
            elif ad.claimant in self.view.dead and self._should_reannounce(ad):
                self._set_task(name, reannounce(ad, self.clock), round_)

    def _should_reannounce(self, ad: TaskAd) -> bool:
        if ad.origin == self.id:
            return True
        if self.view.status(ad.origin) is not Status.DEAD:
            return False
        first_alive = next(i for i in range(self.view.n) if i not in self.view.not_alive or i == self.id)
        return first_alive == self.id

    def _set_task(self, name: str, ad: TaskAd, round_: int) -> None:
        old = self.store.crdts.get(name)
        if ad.claim_version > self.clock:
            self.clock = Version(ad.claim_version.lamport, self.id)
        if self.store.merge_crdt(name, ad):
            self.observer.task_changed(self, old, self.store.crdts[name], round_)
            self.originate(name, crdt_payload(self.store.crdts[name]), round_, ad.priority)

    # ------------------------------------------------------------------ intents and load

    def declare_intent(self, activity: str, zone: str, round_: int) -> Rumor:
        body = canonical_json({"activity": activity, "zone": zone}).encode()
        return self.write_kv(INTENT_PREFIX + str(self.id), body, round_, Priority.NORMAL, None)

    def publish_load(self, round_: int) -> Rumor:
        body = canonical_json({"load": self.profile.load, "round": round_}).encode()
        return self.write_kv(LOAD_PREFIX + str(self.id), body, round_, Priority.ROUTINE, None)

    def estimated_load(self, now: int, ttl: float | None, decay_rate: float) -> float | None:
        samples = []
        for key, rec in self.store.lww.items():
            if key.startswith(LOAD_PREFIX) and not rec.tombstone:
                body = json.loads(rec.value)
                samples.append((body["load"], body["round"]))
        return estimate_load(samples, now, ttl, decay_rate)


def anti_entropy_exchange(a: GossipNode, b: GossipNode, round_: int) -> SyncReport:
    """Push-pull reconciliation: each side ends up with the newer copy of every key the other had."""
    report = SyncReport()
    need, send = digest_diff(a.store.digest(), b.store.digest())
    for key in sorted(need):
        if a.receive_record(b.store.lww[key], b.id, round_):
            report.pulled_by_a.append(key)
    for key in sorted(send):
        if b.receive_record(a.store.lww[key], a.id, round_):
            report.pulled_by_b.append(key)
    for name in sorted(set(a.store.crdts) | set(b.store.crdts)):
        if name in b.store.crdts and a._apply_crdt(name, b.store.crdts[name], round_):
            report.crdts_a.append(name)
        if name in a.store.crdts and b._apply_crdt(name, a.store.crdts[name], round_):
            report.crdts_b.append(name)
    _sync_views(a, b, round_)
    return report


def _sync_views(a: GossipNode, b: GossipNode, round_: int) -> None:
    ra = list(a.view._records.values())
    rb = list(b.view._records.values())
    for rec in rb:
        a._apply_member(rec, round_)
    for rec in ra:
        b._apply_member(rec, round_)

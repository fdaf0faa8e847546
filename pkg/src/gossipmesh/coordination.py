"""Agent behaviours layered on gossip: task pooling, load averaging, zone intents."""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .core import AgentId, Priority, Version, next_version
from .state_store import register_crdt
from .temporal import decay_weight

TASK_PREFIX = "task/"


class TaskState(enum.IntEnum):
    AVAILABLE = 0
    CLAIMED = 1
    DONE = 2

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class TaskAd:
    """A task advertisement as one replica currently sees it.

    ``epoch`` counts announcements: a re-announcement after the claimant
    dies starts a new epoch, which outranks every claim from older ones.
    """

    task_id: str
    descriptor: frozenset[str]
    priority: Priority = Priority.NORMAL
    state: TaskState = TaskState.AVAILABLE
    claimant: AgentId | None = None
    claim_version: Version = Version(0, 0)
    epoch: int = 0
    origin: AgentId = 0

    type_name = "task"

    def __post_init__(self) -> None:
        if (self.claimant is None) != (self.state is TaskState.AVAILABLE):
            raise ValueError("claimant must be set exactly when the task is not available")

    def _rank(self) -> tuple:
        lamport, author = self.claim_version
        claimant = -1 if self.claimant is None else self.claimant
        return (
            self.epoch,
            int(self.state),
            -lamport,
            -claimant,
            -author,
            tuple(sorted(self.descriptor)),
            self.priority.value,
            -self.origin,
        )

    def merge(self, other: "TaskAd") -> "TaskAd":
        return resolve_claims(self, other)

    def to_state(self) -> dict:
        return {
            "task_id": self.task_id,
            "descriptor": sorted(self.descriptor),
            "priority": self.priority.value,
            "state": self.state.label,
            "claimant": self.claimant,
            "claim_version": self.claim_version.to_list(),
            "epoch": self.epoch,
            "origin": self.origin,
        }

    @classmethod
    def from_state(cls, raw: dict) -> "TaskAd":
        return cls(
            task_id=raw["task_id"],
            descriptor=frozenset(raw["descriptor"]),
            priority=Priority(raw["priority"]),
            state=TaskState[raw["state"].upper()],
            claimant=raw["claimant"],
            claim_version=Version.from_list(raw["claim_version"]),
            epoch=int(raw["epoch"]),
            origin=int(raw["origin"]),
        )


register_crdt(TaskAd.type_name, TaskAd.from_state)


def task_topic(task_id: str) -> str:
    return TASK_PREFIX + task_id


def resolve_claims(a: TaskAd, b: TaskAd) -> TaskAd:
    """Deterministic join of two views of one task.

    Newer epoch first, then done > claimed > available, then the earliest
    claim by ``(lamport, claimant)``.
    """
    if a.task_id != b.task_id:
        raise ValueError(f"task id mismatch: {a.task_id!r} vs {b.task_id!r}")
    return b if b._rank() > a._rank() else a


@dataclass
class AgentProfile:
    capabilities: frozenset[str] = frozenset()
    load: float = 0.0
    zone: str | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.load <= 1.0:
            raise ValueError(f"load {self.load} outside [0, 1]")


def announce_task(
    announced: set[str],
    origin: AgentId,
    task_id: str,
    descriptor: Iterable[str],
    clock: Version,
    priority: Priority = Priority.NORMAL,
    epoch: int = 0,
) -> TaskAd:
    """New available ad; ``announced`` is the origin's set of ids already used."""
    if task_id in announced:
        raise ValueError(f"task {task_id!r} already announced by agent {origin}")
    announced.add(task_id)
    return TaskAd(task_id, frozenset(descriptor), priority, TaskState.AVAILABLE, None,
                  next_version(clock, clock), epoch, origin)


def evaluate_claim(
    agent: AgentProfile,
    ad: TaskAd,
    load_threshold: float,
    self_id: AgentId,
    clock: Version,
) -> TaskAd | None:
    if ad.state is not TaskState.AVAILABLE:
        return None
    if not ad.descriptor <= agent.capabilities or agent.load >= load_threshold:
        return None
    v = next_version(clock, ad.claim_version)
    return TaskAd(ad.task_id, ad.descriptor, ad.priority, TaskState.CLAIMED, self_id, v, ad.epoch, ad.origin)


def complete_task(ad: TaskAd) -> TaskAd:
    if ad.state is not TaskState.CLAIMED:
        raise ValueError("only a claimed task can be completed")
    return TaskAd(ad.task_id, ad.descriptor, ad.priority, TaskState.DONE, ad.claimant,
                  ad.claim_version, ad.epoch, ad.origin)


def reannounce(ad: TaskAd, clock: Version) -> TaskAd:
    return TaskAd(ad.task_id, ad.descriptor, ad.priority, TaskState.AVAILABLE, None,
                  next_version(clock, ad.claim_version), ad.epoch + 1, ad.origin)


def averaging_step(x_i: float, x_j: float) -> tuple[float, float]:
    if not (math.isfinite(x_i) and math.isfinite(x_j)):
        raise ValueError("averaging needs finite inputs")
    m = (x_i + x_j) / 2.0
    return m, m


def estimate_load(samples: Iterable[tuple[float, int]], now: int, ttl: float | None, decay_rate: float) -> float | None:
    """Age-discounted mean of ``(load, born_round)`` reports; None when every report has expired."""
    total = weight = 0.0
    for value, born in samples:
        w = decay_weight(now - born, ttl, decay_rate)
        total += w * value
        weight += w
    if weight == 0.0:
        return None
    return total / weight


@dataclass(frozen=True)
class IntentRecord:
    agent: AgentId
    activity: str
    zone: str
    version: Version


@dataclass
class IntentRegistry:
    intents: dict[AgentId, IntentRecord] = field(default_factory=dict)
    last_mention: dict[str, int] = field(default_factory=dict)


def update_intent(registry: IntentRegistry, intent: IntentRecord, now: int) -> IntentRegistry:
    cur = registry.intents.get(intent.agent)
    if cur is None or intent.version > cur.version:
        registry.intents[intent.agent] = intent
        registry.last_mention[intent.zone] = max(now, registry.last_mention.get(intent.zone, now))
    return registry


def pick_uncovered_zone(
    registry: IntentRegistry,
    zones: Sequence[str],
    rng: random.Random,
    silence_rounds: int,
    now: int,
) -> str:
    """A random zone nobody has mentioned in ``silence_rounds``, else the stalest one."""
    if not zones:
        raise ValueError("no zones to pick from")
    cutoff = now - silence_rounds
    quiet = [z for z in zones if registry.last_mention.get(z, -math.inf) <= cutoff]
    if quiet:
        return quiet[rng.randrange(len(quiet))]
    return min(zones, key=lambda z: (registry.last_mention.get(z, -math.inf), z))

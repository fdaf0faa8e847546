"""Credibility gating for incoming rumors.

A rumor is acted on only once enough distinct peers vouch for the same fact,
or once the peers that did vouch are collectively trusted enough. Peer trust
is an exponentially weighted record of whether their past relays held up.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Hashable, Iterable

from .core import AgentId, Priority, Rumor

CRITICAL_BYPASS_SCORE = 0.9


class Outcome(str, enum.Enum):
    CORROBORATED = "corroborated"
    CONTRADICTED = "contradicted"


class ConfirmationTracker:
    """Distinct sources seen per fact; the owner never counts as its own witness."""

    def __init__(self, owner: AgentId):
        self.owner = owner
        self.sources: dict[Hashable, set[AgentId]] = {}
        self.first_seen_round: dict[Hashable, int] = {}

    def record(self, key: Hashable, source: AgentId, round_: int = 0) -> int:
        seen = self.sources.get(key)
        if seen is None:
            seen = self.sources[key] = set()
            self.first_seen_round[key] = round_
        if source != self.owner:
            seen.add(source)
        return len(seen)

    def count(self, key: Hashable) -> int:
        return len(self.sources.get(key, ()))

    def confirmers(self, key: Hashable) -> set[AgentId]:
        return self.sources.get(key, set())

    def forget(self, key: Hashable) -> None:
        self.sources.pop(key, None)
        self.first_seen_round.pop(key, None)


def record_confirmation(tracker: ConfirmationTracker, key: Hashable, source: AgentId, round_: int = 0) -> int:
    return tracker.record(key, source, round_)


@dataclass
class TrustLedger:
    default_score: float = 0.5
    learning_rate: float = 0.1
    scores: dict[AgentId, float] = field(default_factory=dict)

    def score(self, peer: AgentId) -> float:
        return self.scores.get(peer, self.default_score)

    def update(self, peer: AgentId, outcome: Outcome) -> float:
        target = 1.0 if outcome is Outcome.CORROBORATED else 0.0
        s = (1.0 - self.learning_rate) * self.score(peer) + self.learning_rate * target
        s = min(1.0, max(0.0, s))
        self.scores[peer] = s
        return s

    def weighted_sum(self, peers: Iterable[AgentId]) -> float:
        return sum(self.score(p) for p in peers)


def update_trust(ledger: TrustLedger, peer: AgentId, outcome: Outcome) -> float:
    return ledger.update(peer, outcome)


@dataclass(frozen=True)
class GateDecision:
    credible: bool
    source_count: int
    weighted_sum: float


def gate(
    tracker: ConfirmationTracker,
    ledger: TrustLedger,
    key: Hashable,
    k: int,
    theta: float,
    priority: Priority = Priority.NORMAL,
) -> GateDecision:
    sources = tracker.confirmers(key)
    n = len(sources)
    weighted = ledger.weighted_sum(sources)
    ok = n >= k or weighted >= theta
    if not ok and priority is Priority.CRITICAL:
        ok = any(ledger.score(s) >= CRITICAL_BYPASS_SCORE for s in sources)
    return GateDecision(ok, n, weighted)


def is_credible(
    tracker: ConfirmationTracker,
    ledger: TrustLedger,
    key: Hashable,
    k: int,
    theta: float,
    priority: Priority = Priority.NORMAL,
) -> bool:
    """True once ``k`` distinct sources vouch for ``key`` or their trust sums to ``theta``.

    Critical rumors need only one source whose score is at least 0.9.
    """
    if k < 1 or theta < 0:
        raise ValueError("need k >= 1 and theta >= 0")
    return gate(tracker, ledger, key, k, theta, priority).credible


def authenticity_gate(msg: Rumor) -> bool:
    """Accept only rumors whose (simulated) signature still verifies."""
    return msg.authentic

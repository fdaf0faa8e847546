"""Age-of-information bookkeeping and expiry.

Ages are measured in rounds. A value's weight decays exponentially with age
and drops to zero once the age reaches its TTL, whatever the decay rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, Mapping

import numpy as np

from .state_store import Store


@dataclass(frozen=True)
class AgedValue:
    value: Any
    born_round: int
    ttl_rounds: float = math.inf
    decay_rate: float = 0.0

    def __post_init__(self) -> None:
        if self.ttl_rounds < 0:
            raise ValueError("ttl_rounds must be >= 0")
        if self.decay_rate < 0:
            raise ValueError("decay_rate must be >= 0")

    def weight(self, now: int) -> float:
        return decay_weight(age_of(self, now), self.ttl_rounds, self.decay_rate)


def age_of(v: AgedValue, now: int) -> int:
    if now < v.born_round:
        raise ValueError(f"round {now} precedes birth round {v.born_round}")
    return now - v.born_round


def decay_weight(age: int, ttl: float | None, decay_rate: float) -> float:
    if age < 0:
        raise ValueError("age must be >= 0")
    if ttl is not None and age >= ttl:
        return 0.0
    return math.exp(-decay_rate * age)


def expire_sweep(store: Store, now: int) -> list[str]:
    """Drop every record whose expiry round has arrived; tombstones carry their grace period as expiry."""
    gone = sorted(k for k, r in store.lww.items() if r.expiry_round is not None and r.expiry_round <= now)
    for k in gone:
        store.purge(k)
    return gone


def staleness_histogram(trace: Iterable[Mapping[str, Any]]) -> list[int]:
    """Adoption latencies (adoption round minus birth round) over every adopt record."""
    return [rec["round"] - rec["born_round"] for rec in trace if rec.get("kind") == "adopt"]


def staleness_percentiles(samples: list[int]) -> dict[str, float]:
    if not samples:
        return {"p50": 0.0, "p95": 0.0, "max": 0.0}
    arr = np.asarray(samples, dtype=float)
    return {
        "p50": float(np.percentile(arr, 50)),
        "p95": float(np.percentile(arr, 95)),
        "max": float(arr.max()),
    }

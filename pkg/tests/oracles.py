"""Independent reference models used to check the implementation.

None of these import the code under test's algorithms; each restates the
expected behaviour in the most direct (and slowest) way available.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field


# ---------------------------------------------------------------- statistics


def chi2_critical(df: int, z: float = 3.09) -> float:
    """Upper chi-square quantile via Wilson-Hilferty; z = 3.09 is roughly the 0.999 point."""
    return df * (1 - 2 / (9 * df) + z * math.sqrt(2 / (9 * df))) ** 3


def chi2_statistic(counts: list[int], expected: float) -> float:
    return sum((c - expected) ** 2 / expected for c in counts)


def broadcast_coverage_moments(n: int, loss_p: float) -> tuple[float, float]:
    """Mean and standard deviation of coverage when one origin sends once to each of n-1 peers.

    Each peer independently receives with probability 1 - loss_p; the origin
    always holds the rumor.
    """
    q = 1.0 - loss_p
    mean = (1 + (n - 1) * q) / n
    sd = math.sqrt((n - 1) * q * (1 - q)) / n
    return mean, sd


def ewma_after(score: float, alpha: float, contradictions: int) -> float:
    return (1 - alpha) ** contradictions * score


def linear_r2(xs: list[float], ys: list[float]) -> tuple[float, float, float]:
    """Plain least squares y = a x + b with R^2, written out longhand."""
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    a = sxy / sxx
    b = my - a * mx
    ss_res = sum((y - (a * x + b)) ** 2 for x, y in zip(xs, ys))
    ss_tot = sum((y - my) ** 2 for y in ys)
    return a, b, 1 - ss_res / ss_tot if ss_tot else 1.0


# ---------------------------------------------------------------- OR-set


@dataclass
class _Event:
    eid: int
    kind: str  # "add" or "remove"
    elem: str
    observed_adds: frozenset[int] = frozenset()


@dataclass
class EventSetReplica:
    """Add-wins set modelled directly as a set of observed events.

    An element is present when some observed add of it was not observed by
    any observed remove of it. This is the textbook specification, with no
    tags or tombstone sets.
    """

    events: dict[int, _Event] = field(default_factory=dict)

    def contains(self, elem: str) -> bool:
        adds = [e for e in self.events.values() if e.kind == "add" and e.elem == elem]
        removes = [e for e in self.events.values() if e.kind == "remove" and e.elem == elem]
        return any(all(a.eid not in r.observed_adds for r in removes) for a in adds)


class EventSetModel:
    def __init__(self, replicas: int):
        self.replicas = [EventSetReplica() for _ in range(replicas)]
        self.next_id = 0

    def add(self, r: int, elem: str) -> None:
        self.next_id += 1
        self.replicas[r].events[self.next_id] = _Event(self.next_id, "add", elem)

    def remove(self, r: int, elem: str) -> None:
        self.next_id += 1
        seen = frozenset(e.eid for e in self.replicas[r].events.values() if e.kind == "add" and e.elem == elem)
        self.replicas[r].events[self.next_id] = _Event(self.next_id, "remove", elem, seen)

    def clone(self) -> "EventSetModel":
        # events are never mutated after creation, so sharing them is safe
        out = EventSetModel(0)
        out.replicas = [EventSetReplica(dict(rep.events)) for rep in self.replicas]
        out.next_id = self.next_id
        return out

    def deliver(self, src: int, dst: int) -> None:
        self.replicas[dst].events.update(self.replicas[src].events)

    def union_contains(self, elem: str) -> bool:
        union = EventSetReplica()
        for rep in self.replicas:
            union.events.update(rep.events)
        return union.contains(elem)


def orset_alphabet(replicas: int) -> list[tuple]:
    ops: list[tuple] = []
    for r in range(replicas):
        ops.append(("add", r))
        ops.append(("remove", r))
    for a, b in itertools.permutations(range(replicas), 2):
        ops.append(("merge", a, b))
    return ops


def canonical_under_relabel(seq: tuple, replicas: int) -> bool:
    """True when replicas appear in first-use order 0, 1, 2...; prunes symmetric duplicates."""
    seen: list[int] = []
    for op in seq:
        for r in op[1:]:
            if r not in seen:
                if r != len(seen):
                    return False
                seen.append(r)
    return True


# ---------------------------------------------------------------- LWW / counters


def lww_reference(writes: list[tuple[tuple[int, int], bool, bytes]]) -> tuple[tuple[int, int], bool, bytes]:
    """Winner among (version, tombstone, value) writes: the greatest by that tuple order."""
    return max(writes)


def gcounter_reference(increments: list[tuple[int, int]]) -> int:
    """Total of all (agent, amount) increments, i.e. the value after every replica has merged."""
    return sum(a for _, a in increments)


def exact_mean(values: list[float]) -> float:
    return math.fsum(values) / len(values)

"""Replicated per-node state.

Last-writer-wins records (with tombstones) are reconciled by digest during
anti-entropy. Grow-only counters, observed-remove sets and any other type
registered with :func:`register_crdt` are small enough to be exchanged whole
and joined.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Protocol

from .core import AgentId, Digest, Version, canonical_json, decode_bytes, encode_bytes, next_version

KV_PREFIX = "kv/"


@dataclass(frozen=True)
class LwwRecord:
    key: str
    value: bytes
    version: Version
    tombstone: bool = False
    expiry_round: int | None = None

    def _order(self) -> tuple:
        # version decides; the rest only matters for byte-different records at an equal version
        return (self.version, self.tombstone, self.value, -1 if self.expiry_round is None else self.expiry_round)

    def to_dict(self) -> dict[str, Any]:
        return {
            "key": self.key,
            "value": encode_bytes(self.value),
            "version": self.version.to_list(),
            "tombstone": self.tombstone,
            "expiry_round": self.expiry_round,
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "LwwRecord":
        return cls(
            key=raw["key"],
            value=decode_bytes(raw["value"]),
            version=Version.from_list(raw["version"]),
            tombstone=bool(raw["tombstone"]),
            expiry_round=raw.get("expiry_round"),
        )


def lww_merge(a: LwwRecord, b: LwwRecord) -> LwwRecord:
    """Keep whichever record carries the greater version, tombstone flag included."""
    if a.key != b.key:
        raise ValueError(f"key mismatch: {a.key!r} vs {b.key!r}")
    return b if b._order() > a._order() else a


def kv_topic(key: str) -> str:
    return KV_PREFIX + key


def record_payload(rec: LwwRecord) -> bytes:
    """Rumor payload for a record; the version travels in the rumor envelope."""
    body = {"value": encode_bytes(rec.value), "tombstone": rec.tombstone, "expiry": rec.expiry_round}
    return canonical_json(body).encode()


def record_from_rumor(topic: str, payload: bytes, version: Version) -> LwwRecord:
    if not topic.startswith(KV_PREFIX):
        raise ValueError(f"not a kv topic: {topic!r}")
    body = json.loads(payload)
    return LwwRecord(
        key=topic[len(KV_PREFIX):],
        value=decode_bytes(body["value"]),
        version=version,
        tombstone=bool(body["tombstone"]),
        expiry_round=body.get("expiry"),
    )


class Crdt(Protocol):
    type_name: str

    def merge(self, other: Any) -> Any: ...

    def to_state(self) -> Any: ...


_CRDT_TYPES: dict[str, Callable[[Any], Any]] = {}


def register_crdt(type_name: str, from_state: Callable[[Any], Any]) -> None:
    _CRDT_TYPES[type_name] = from_state


def crdt_payload(obj: Crdt) -> bytes:
    return canonical_json({"type": obj.type_name, "state": obj.to_state()}).encode()


def crdt_from_payload(payload: bytes) -> Any:
    body = json.loads(payload)
    try:
        loader = _CRDT_TYPES[body["type"]]
    except KeyError:
        raise ValueError(f"unknown crdt type {body.get('type')!r}") from None
    return loader(body["state"])


@dataclass(frozen=True)
class GCounter:
    counts: Mapping[AgentId, int] = field(default_factory=dict)

    type_name = "gcounter"

    def increment(self, agent: AgentId, amount: int = 1) -> "GCounter":
        if amount < 0:
            raise ValueError("G-counter increments must be non-negative")
        counts = dict(self.counts)
        counts[agent] = counts.get(agent, 0) + amount
        return GCounter(counts)

    def merge(self, other: "GCounter") -> "GCounter":
        counts = dict(self.counts)
        for agent, c in other.counts.items():
            if c > counts.get(agent, 0):
                counts[agent] = c
        return GCounter(counts)

    @property
    def value(self) -> int:
        return sum(self.counts.values())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GCounter):
            return NotImplemented
        # absent and zero entries are the same state
        return {a: c for a, c in self.counts.items() if c} == {a: c for a, c in other.counts.items() if c}

    def __hash__(self) -> int:
        return hash(frozenset((a, c) for a, c in self.counts.items() if c))

    def to_state(self) -> dict[str, int]:
        return {str(a): c for a, c in sorted(self.counts.items()) if c}

    @classmethod
    def from_state(cls, raw: Mapping[str, int]) -> "GCounter":
        return cls({int(a): int(c) for a, c in raw.items()})


def gcounter_increment(c: GCounter, agent: AgentId, amount: int = 1) -> GCounter:
    return c.increment(agent, amount)


def gcounter_merge(a: GCounter, b: GCounter) -> GCounter:
    return a.merge(b)


def gcounter_value(c: GCounter) -> int:
    return c.value


Tag = tuple[AgentId, int]


@dataclass(frozen=True)
class ORSet:
    """Observed-remove set with add-wins semantics."""

    adds: Mapping[str, frozenset[Tag]] = field(default_factory=dict)
    removes: frozenset[Tag] = frozenset()

    type_name = "orset"

    def add(self, elem: str, tag: Tag) -> "ORSet":
        adds = dict(self.adds)
        adds[elem] = adds.get(elem, frozenset()) | {tag}
        return ORSet(adds, self.removes)

    def remove(self, elem: str) -> "ORSet":
        """Tombstone every tag observed locally for ``elem``; unseen concurrent adds survive."""
        return ORSet(dict(self.adds), self.removes | self.adds.get(elem, frozenset()))

    def merge(self, other: "ORSet") -> "ORSet":
        adds = dict(self.adds)
        for elem, tags in other.adds.items():
            adds[elem] = adds.get(elem, frozenset()) | tags
        return ORSet(adds, self.removes | other.removes)

    def contains(self, elem: str) -> bool:
        return bool(self.adds.get(elem, frozenset()) - self.removes)

    def elements(self) -> set[str]:
        return {e for e, tags in self.adds.items() if tags - self.removes}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ORSet):
            return NotImplemented
        return self.to_state() == other.to_state()

    def __hash__(self) -> int:
        return hash(canonical_json(self.to_state()))

    def to_state(self) -> dict[str, Any]:
        return {
            "adds": {e: sorted(list(t) for t in tags) for e, tags in sorted(self.adds.items()) if tags},
            "removes": sorted(list(t) for t in self.removes),
        }

    @classmethod
    def from_state(cls, raw: Mapping[str, Any]) -> "ORSet":
        adds = {e: frozenset((int(a), int(s)) for a, s in tags) for e, tags in raw["adds"].items()}
        return cls(adds, frozenset((int(a), int(s)) for a, s in raw["removes"]))


def orset_add(s: ORSet, elem: str, tag: Tag) -> ORSet:
    return s.add(elem, tag)


def orset_remove(s: ORSet, elem: str) -> ORSet:
    return s.remove(elem)


def orset_merge(a: ORSet, b: ORSet) -> ORSet:
    return a.merge(b)


def orset_contains(s: ORSet, elem: str) -> bool:
    return s.contains(elem)


register_crdt(GCounter.type_name, GCounter.from_state)
register_crdt(ORSet.type_name, ORSet.from_state)


class Store:
    """One node's replica.

    ``purged`` remembers the version of every record swept away so that a
    straggler copy at or below it cannot resurrect the key.
    """

    def __init__(self) -> None:
        self.lww: dict[str, LwwRecord] = {}
        self.crdts: dict[str, Any] = {}
        self.purged: dict[str, Version] = {}

    def apply(self, rec: LwwRecord, now: int) -> tuple[bool, LwwRecord | None]:
        """Merge ``rec``; returns (changed, displaced record)."""
        if rec.expiry_round is not None and rec.expiry_round <= now:
            return False, None
        floor = self.purged.get(rec.key)
        if floor is not None and rec.version <= floor:
            return False, None
        cur = self.lww.get(rec.key)
        if cur is None:
            self.lww[rec.key] = rec
            return True, None
        won = lww_merge(cur, rec)
        if won is cur:
            return False, None
        self.lww[rec.key] = won
        return True, cur

    def merge_crdt(self, name: str, obj: Any) -> bool:
        cur = self.crdts.get(name)
        merged = obj if cur is None else cur.merge(obj)
        if cur is not None and merged == cur:
            return False
        self.crdts[name] = merged
        return True

    def get(self, key: str) -> bytes | None:
        rec = self.lww.get(key)
        if rec is None or rec.tombstone:
            return None
        return rec.value

    def digest(self) -> Digest:
        return Digest({k: r.version for k, r in self.lww.items()})

    def purge(self, key: str) -> None:
        rec = self.lww.pop(key)
        floor = self.purged.get(key)
        if floor is None or rec.version > floor:
            self.purged[key] = rec.version

    def to_dict(self) -> dict[str, Any]:
        return {
            "lww": {k: self.lww[k].to_dict() for k in sorted(self.lww)},
            "crdt": {
                n: {"type": self.crdts[n].type_name, "state": self.crdts[n].to_state()}
                for n in sorted(self.crdts)
            },
        }

    def dump(self) -> str:
        return canonical_json(self.to_dict())


def write(store: Store, key: str, value: bytes, clock: Version, now: int, ttl_rounds: int | None = None) -> LwwRecord:
    """Write a live value at a version newer than anything held for ``key``."""
    cur = store.lww.get(key)
    observed = cur.version if cur is not None else store.purged.get(key, clock)
    rec = LwwRecord(key, value, next_version(clock, observed), False, None if ttl_rounds is None else now + ttl_rounds)
    store.apply(rec, now)
    return rec


def delete(store: Store, key: str, clock: Version, now: int, grace_period: int) -> LwwRecord:
    """Replace ``key`` with a tombstone that is purged ``grace_period`` rounds from now.

    Deleting an unknown key is legal and still produces a tombstone.
    """
    cur = store.lww.get(key)
    observed = cur.version if cur is not None else store.purged.get(key, clock)
    tomb = LwwRecord(key, b"", next_version(clock, observed), True, now + grace_period)
    store.apply(tomb, now)
    return tomb


def default_grace_period(n_agents: int, anti_entropy_period: int) -> int:
    from math import ceil, log2

    return 4 * (ceil(log2(max(n_agents, 2))) + anti_entropy_period)


def records_for(store: Store, keys: Iterable[str]) -> list[LwwRecord]:
    return [store.lww[k] for k in sorted(keys) if k in store.lww]

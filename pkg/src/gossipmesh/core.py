"""Identifiers, versions, the rumor envelope and state digests.

Every protocol layer speaks in terms of these immutable values. ``Version``
is a Lamport pair ``(lamport, author)`` and compares lexicographically, so two
distinct versions are never equal and last-writer-wins needs no wall clock.
"""

from __future__ import annotations

import base64
import enum
import json
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, NamedTuple

AgentId = int
RumorId = tuple[int, int]


class Ordering(enum.IntEnum):
    LESS = -1
    EQUAL = 0
    GREATER = 1


class Version(NamedTuple):
    """Lamport timestamp with the author id as tie-break."""

    lamport: int
    author: AgentId

    def to_list(self) -> list[int]:
        return [self.lamport, self.author]

    @classmethod
    def from_list(cls, raw: Iterable[int]) -> "Version":
        lamport, author = raw
        if not isinstance(lamport, int) or not isinstance(author, int) or lamport < 0 or author < 0:
            raise ValueError(f"bad version {raw!r}")
        return cls(lamport, author)


ZERO_VERSION = Version(0, 0)


class Priority(str, enum.Enum):
    CRITICAL = "critical"
    NORMAL = "normal"
    ROUTINE = "routine"


@dataclass(frozen=True, slots=True)
class Rumor:
    """A versioned, hop-limited gossip message.

    ``authentic`` stands in for a signature check: a relay that tampers with
    a rumor flips it to False and every receiver can tell.
    """

    rumor_id: RumorId
    topic: str
    payload: bytes
    version: Version
    priority: Priority = Priority.NORMAL
    ttl_hops: int = 0
    created_round: int = 0
    authentic: bool = True
    confidence: float = 1.0

    @property
    def origin(self) -> AgentId:
        return self.rumor_id[0]

    @property
    def fact_key(self) -> tuple[str, bytes]:
        """What the rumor asserts, independent of who said it or when."""
        return (self.topic, self.payload)

    def forwarded(self) -> "Rumor":
        """Copy with one hop spent."""
        return Rumor(
            self.rumor_id,
            self.topic,
            self.payload,
            self.version,
            self.priority,
            self.ttl_hops - 1,
            self.created_round,
            self.authentic,
            self.confidence,
        )

    def tampered(self) -> "Rumor":
        return Rumor(
            self.rumor_id,
            self.topic,
            self.payload,
            self.version,
            self.priority,
            self.ttl_hops,
            self.created_round,
            False,
            self.confidence,
        )


def rumor_problem(rumor: Any) -> str | None:
    """Return a description of what is wrong with ``rumor``, or None if it is well formed."""
    if not isinstance(rumor, Rumor):
        return "not a rumor"
    rid = rumor.rumor_id
    if type(rid) is not tuple or len(rid) != 2:
        return "bad rumor_id"
    a, b = rid
    if type(a) is not int or type(b) is not int or a < 0 or b < 0:
        return "bad rumor_id"
    if not isinstance(rumor.topic, str) or not rumor.topic:
        return "empty topic"
    if not isinstance(rumor.payload, bytes):
        return "payload is not bytes"
    if not isinstance(rumor.version, Version):
        return "bad version"
    if not isinstance(rumor.priority, Priority):
        return "bad priority"
    if not isinstance(rumor.ttl_hops, int) or rumor.ttl_hops < 0:
        return "negative ttl_hops"
    if not 0.0 <= rumor.confidence <= 1.0:
        return "confidence outside [0, 1]"
    return None


def compare_versions(a: Version, b: Version) -> Ordering:
    if a == b:
        return Ordering.EQUAL
    return Ordering.LESS if a < b else Ordering.GREATER


def next_version(clock: Version, observed: Version) -> Version:
    """Lamport tick: one past the larger of the local clock and an observed stamp."""
    return Version(max(clock.lamport, observed.lamport) + 1, clock.author)


class Digest:
    """Map of state key to the newest version held for it."""

    __slots__ = ("entries",)

    def __init__(self, entries: Mapping[str, Version] | None = None):
        self.entries: dict[str, Version] = dict(entries or {})

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Digest) and self.entries == other.entries

    def __repr__(self) -> str:
        return f"Digest({self.entries!r})"

    def to_dict(self) -> dict[str, list[int]]:
        return {k: self.entries[k].to_list() for k in sorted(self.entries)}

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, raw: Mapping[str, Iterable[int]]) -> "Digest":
        return cls({k: Version.from_list(v) for k, v in raw.items()})


def digest_diff(local: Digest, remote: Digest) -> tuple[set[str], set[str]]:
    """Keys to pull from ``remote`` and keys to push to it.

    A key is pulled when the remote copy is strictly newer or missing locally;
    keys at equal versions appear in neither set.
    """
    mine, theirs = local.entries, remote.entries
    need = {k for k, v in theirs.items() if k not in mine or mine[k] < v}
    send = {k for k, v in mine.items() if k not in theirs or theirs[k] < v}
    return need, send


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def encode_bytes(data: bytes) -> dict[str, str]:
    try:
        return {"text": data.decode("utf-8")}
    except UnicodeDecodeError:
        return {"b64": base64.b64encode(data).decode("ascii")}


def decode_bytes(raw: Mapping[str, str]) -> bytes:
    if "text" in raw:
        return raw["text"].encode("utf-8")
    return base64.b64decode(raw["b64"])


def rumor_to_dict(rumor: Rumor) -> dict[str, Any]:
    return {
        "rumor_id": list(rumor.rumor_id),
        "topic": rumor.topic,
        "payload": encode_bytes(rumor.payload),
        "version": rumor.version.to_list(),
        "priority": rumor.priority.value,
        "ttl_hops": rumor.ttl_hops,
        "created_round": rumor.created_round,
        "authentic": rumor.authentic,
        "confidence": rumor.confidence,
    }


def rumor_from_dict(raw: Mapping[str, Any]) -> Rumor:
    origin, seq = raw["rumor_id"]
    return Rumor(
        rumor_id=(int(origin), int(seq)),
        topic=str(raw["topic"]),
        payload=decode_bytes(raw["payload"]),
        version=Version.from_list(raw["version"]),
        priority=Priority(raw["priority"]),
        ttl_hops=int(raw["ttl_hops"]),
        created_round=int(raw["created_round"]),
        authentic=bool(raw["authentic"]),
        confidence=float(raw["confidence"]),
    )


def rumor_to_json(rumor: Rumor) -> str:
    return canonical_json(rumor_to_dict(rumor))

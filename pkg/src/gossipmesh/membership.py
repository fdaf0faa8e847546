"""SWIM-style liveness: probe planning, suspicion, refutation and record merging.

A view covers the dense id space ``[0, n)``. Members nobody has said anything
about read as ``alive`` at incarnation 0, so a view only stores the records
that differ from that default; this keeps 25k-node simulations affordable.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from typing import Collection, Iterator, NamedTuple

from .core import AgentId


class Status(enum.IntEnum):
    # order is merge precedence at equal incarnation
    ALIVE = 0
    SUSPECT = 1
    DEAD = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, name: str) -> "Status":
        return cls[name.upper()]


class MemberRecord(NamedTuple):
    id: AgentId
    status: Status = Status.ALIVE
    incarnation: int = 0
    last_update_round: int = 0

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "status": self.status.label,
            "incarnation": self.incarnation,
            "last_update_round": self.last_update_round,
        }


def _precedence(r: MemberRecord) -> tuple[int, int, int]:
    return (r.incarnation, int(r.status), r.last_update_round)


def merge_member(local: MemberRecord, remote: MemberRecord) -> MemberRecord:
    """Join two records about the same member.

    Higher incarnation wins; at equal incarnation ``dead > suspect > alive``.
    The update round only breaks otherwise-exact ties, which keeps the
    operation commutative and associative.
    """
    if local.id != remote.id:
        raise ValueError(f"cannot merge records for {local.id} and {remote.id}")
    return remote if _precedence(remote) > _precedence(local) else local


def sample_ids(
    n: int,
    k: int,
    rng: random.Random,
    blocked: Collection[int],
) -> list[AgentId]:
    """Draw ``k`` distinct ids from ``[0, n)`` minus ``blocked``, uniformly without replacement.

    Returns every candidate (sorted) when there are no more than ``k``.
    """
    if k <= 0 or n <= 0:
        return []
    if (len(blocked) + k) * 4 <= n:
        # Plenty of room: rejection sampling without counting the blocked set.
        chosen: list[int] = []
        while len(chosen) < k:
            x = rng.randrange(n)
            if x not in blocked and x not in chosen:
                chosen.append(x)
        return chosen
    n_blocked = sum(1 for b in blocked if 0 <= b < n)
    available = n - n_blocked
    if available <= 0:
        return []
    if available <= k:
        return [i for i in range(n) if i not in blocked]
    if available * 4 >= n:
        chosen = []
        while len(chosen) < k:
            x = rng.randrange(n)
            if x not in blocked and x not in chosen:
                chosen.append(x)
        return chosen
    return rng.sample([i for i in range(n) if i not in blocked], k)


@dataclass
class ProbePlan:
    target: AgentId | None = None
    proxies: list[AgentId] = field(default_factory=list)

    @property
    def is_noop(self) -> bool:
        return self.target is None


class MembershipView:
    """One node's picture of who is alive.

    Mutated only by the owning node's handlers. ``suspect_since`` remembers
    when each local suspicion started so the timeout can fire.
    """

    def __init__(self, self_id: AgentId, n: int, suspicion_timeout: int = 3):
        if not 0 <= self_id < n:
            raise ValueError(f"self id {self_id} outside [0, {n})")
        self.self_id = self_id
        self.n = n
        self.suspicion_timeout = suspicion_timeout
        self._records: dict[AgentId, MemberRecord] = {}
        self.not_alive: set[AgentId] = set()
        self.dead: set[AgentId] = set()
        self.suspect_since: dict[AgentId, int] = {}

    def __contains__(self, member: object) -> bool:
        return isinstance(member, int) and 0 <= member < self.n

    def __len__(self) -> int:
        return self.n

    def __iter__(self) -> Iterator[AgentId]:
        return iter(range(self.n))

    def get(self, member: AgentId) -> MemberRecord:
        if member not in self:
            raise KeyError(member)
        rec = self._records.get(member)
        return rec if rec is not None else MemberRecord(member)

    __getitem__ = get

    @property
    def records(self) -> dict[AgentId, MemberRecord]:
        return {i: self.get(i) for i in range(self.n)}

    @property
    def me(self) -> MemberRecord:
        return self.get(self.self_id)

    def status(self, member: AgentId) -> Status:
        rec = self._records.get(member)
        return Status.ALIVE if rec is None else rec.status

    def set(self, record: MemberRecord) -> None:
        i = record.id
        self._records[i] = record
        if record.status is Status.ALIVE:
            self.not_alive.discard(i)
            self.dead.discard(i)
            self.suspect_since.pop(i, None)
        else:
            self.not_alive.add(i)
            if record.status is Status.DEAD:
                self.dead.add(i)
                self.suspect_since.pop(i, None)
            else:
                self.dead.discard(i)

    def alive_peers(self) -> list[AgentId]:
        return [i for i in range(self.n) if i != self.self_id and i not in self.not_alive]

    def apply(self, remote: MemberRecord, round_: int) -> MemberRecord | None:
        """Merge a gossiped record; return the new local record if status or incarnation moved."""
        if remote.id not in self:
            return None
        local = self.get(remote.id)
        if remote.id == self.self_id and remote.status is not Status.ALIVE:
            # never believe our own death; surface it as suspicion so refute() fires
            if remote.incarnation < local.incarnation:
                return None
            remote = MemberRecord(remote.id, Status.SUSPECT, remote.incarnation, round_)
        merged = merge_member(local, remote)
        if (merged.status, merged.incarnation) == (local.status, local.incarnation):
            return None
        merged = merged._replace(last_update_round=round_)
        self.set(merged)
        if merged.status is Status.SUSPECT and merged.id != self.self_id:
            self.suspect_since[merged.id] = round_
        return merged

    def tick(self, round_: int) -> list[MemberRecord]:
        """Promote suspicions older than the timeout to dead."""
        expired = [
            m for m, since in self.suspect_since.items() if round_ - since >= self.suspicion_timeout
        ]
        out = []
        for m in sorted(expired):
            rec = self.get(m)
            dead = MemberRecord(m, Status.DEAD, rec.incarnation, round_)
            self.set(dead)
            out.append(dead)
        return out


def probe_round(view: MembershipView, rng: random.Random, proxy_count: int = 3) -> ProbePlan:
    """Pick a direct probe target among alive or suspect peers, plus indirect-probe proxies."""
    blocked = set(view.dead)
    blocked.add(view.self_id)
    picked = sample_ids(view.n, 1, rng, blocked)
    if not picked:
        return ProbePlan()
    target = picked[0]
    proxy_blocked = set(view.not_alive)
    proxy_blocked.update((view.self_id, target))
    proxies = sample_ids(view.n, proxy_count, rng, proxy_blocked)
    return ProbePlan(target, proxies)


def mark_suspect(
    view: MembershipView, member: AgentId, round_: int, suspicion_timeout: int | None = None
) -> MemberRecord | None:
    """Flag an alive member as suspect at its current incarnation.

    Returns the suspicion record to gossip, or None when the member is
    unknown or not currently alive.
    """
    if member not in view or member == view.self_id:
        return None
    rec = view.get(member)
    if rec.status is not Status.ALIVE:
        return None
    if suspicion_timeout is not None:
        view.suspicion_timeout = suspicion_timeout
    sus = MemberRecord(member, Status.SUSPECT, rec.incarnation, round_)
    view.set(sus)
    view.suspect_since[member] = round_
    return sus


def refute(view: MembershipView, round_: int) -> tuple[MembershipView, MemberRecord | None]:
    """Bump our own incarnation if anyone has suspected us."""
    me = view.me
    if me.status is Status.ALIVE:
        return view, None
    alive = MemberRecord(view.self_id, Status.ALIVE, me.incarnation + 1, round_)
    view.set(alive)
    return view, alive

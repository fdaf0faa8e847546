import random
from collections import Counter

import pytest

from gossipmesh.core import Priority, Rumor, Version
from gossipmesh.dissemination import (
    Effect,
    GossipNode,
    HotBuffer,
    NodeParams,
    RateLimiter,
    admit,
    anti_entropy_exchange,
    default_ttl,
    forward_probability,
    select_peers,
)
from gossipmesh.membership import MemberRecord, MembershipView, Status
from gossipmesh.state_store import LwwRecord, kv_topic, record_payload
from gossipmesh.trust import Outcome
from oracles import chi2_critical, chi2_statistic


def kv_rumor(origin=1, seq=1, key="x", value=b"X", lamport=1, ttl=3, priority=Priority.NORMAL):
    rec = LwwRecord(key, value, Version(lamport, origin))
    return Rumor((origin, seq), kv_topic(key), record_payload(rec), rec.version, priority, ttl, 0)


def node(i=0, n=4, **params):
    return GossipNode(i, n, NodeParams(**params), random.Random(i))


def test_select_peers_small_cases():
    view = MembershipView(0, 2)
    assert select_peers(view, 3, random.Random(1)) == [1]
    assert select_peers(MembershipView(0, 10), 0, random.Random(1)) == []
    view = MembershipView(0, 5)
    view.set(MemberRecord(3, Status.DEAD, 0, 0))
    got = select_peers(view, 10, random.Random(1), exclude={1})
    assert sorted(got) == [2, 4]


def test_select_peers_uniform():
    view = MembershipView(0, 101)
    rng = random.Random(2024)
    counts = Counter()
    trials = 100_000
    for _ in range(trials):
        picked = select_peers(view, 3, rng)
        assert len(set(picked)) == 3 and 0 not in picked
        counts.update(picked)
    freqs = [counts[i] / trials for i in range(1, 101)]
    assert all(abs(f - 0.03) <= 0.005 for f in freqs)
    assert chi2_statistic([counts[i] for i in range(1, 101)], 3 * trials / 100) < chi2_critical(99)


def test_gossip_round_forwards_with_one_hop_spent():
    n = node(0, 4, fanout=2)
    n.buffer.add(kv_rumor(origin=0, ttl=2, priority=Priority.CRITICAL))
    out = n.gossip_round(1)
    assert len(out) == 2 and len({p for p, _ in out}) == 2
    assert all(r.ttl_hops == 1 for _, r in out)
    second = n.gossip_round(2)
    assert len(second) == 1 and second[0][0] not in {p for p, _ in out}


def test_gossip_round_empty_and_exhausted():
    n = node(0, 4, fanout=2)
    assert n.gossip_round(1) == []
    n.buffer.add(kv_rumor(ttl=0))
    assert n.gossip_round(1) == []
    assert len(n.buffer) == 0


def test_gossip_round_skips_known_holders():
    n = node(0, 4, fanout=3)
    n.buffer.add(kv_rumor(origin=1, ttl=5), known=(1,))
    peers = {p for p, _ in n.gossip_round(1)}
    assert peers == {2, 3}
    assert n.gossip_round(2) == []


@pytest.mark.parametrize(
    "priority, rs, want",
    [(Priority.CRITICAL, 10, 1.0), (Priority.NORMAL, 1, 1.0), (Priority.NORMAL, 4, 0.25), (Priority.ROUTINE, 2, 0.25)],
)
def test_forward_probability(priority, rs, want):
    assert forward_probability(priority, rs) == want


def test_forward_probability_rejects_zero_rounds():
    with pytest.raises(ValueError):
        forward_probability(Priority.NORMAL, 0)


def test_admit_counts_distinct_and_resets():
    lim = RateLimiter(2)
    r1, r2, r3 = (kv_rumor(seq=i) for i in (1, 2, 3))
    assert [admit(lim, r, 1) for r in (r1, r2, r3)] == [True, True, False]
    assert admit(lim, r1, 1)
    assert lim.admitted_this_round == 2
    assert admit(lim, r3, 2)
    assert admit(RateLimiter(0), kv_rumor(priority=Priority.CRITICAL), 1)
    assert not admit(RateLimiter(0), kv_rumor(), 1)


def test_handle_gossip_first_and_duplicate_receipt():
    n = node(0)
    x = kv_rumor(origin=1)
    assert n.handle_gossip(x, 1, 1) == (Effect.ADOPTED, Effect.BUFFERED)
    assert n.store.get("x") == b"X"
    before = n.tracker.count(x.fact_key)
    assert n.handle_gossip(x, 2, 2) == (Effect.DUPLICATE_DROPPED,)
    assert n.tracker.count(x.fact_key) == before + 1


def test_handle_gossip_last_hop_is_not_buffered():
    n = node(0)
    assert n.handle_gossip(kv_rumor(ttl=0), 1, 1) == (Effect.ADOPTED, Effect.TTL_DROPPED)
    assert len(n.buffer) == 0


def test_handle_gossip_inauthentic_never_adopted():
    n = node(0)
    x = kv_rumor().tampered()
    assert n.handle_gossip(x, 1, 1) == (Effect.TRUST_HELD,)
    assert n.handle_gossip(x, 2, 1) == (Effect.TRUST_HELD,)
    assert n.store.get("x") is None


def test_handle_gossip_rejects_malformed_filters_and_rate_limits():
    n = node(0, rate_limit=1)
    assert n.handle_gossip(kv_rumor(ttl=-1), 1, 1) == (Effect.REJECTED,)
    n.accept = lambda r: r.topic != "kv/spam"
    assert n.handle_gossip(kv_rumor(key="spam"), 1, 1) == (Effect.FILTERED,)
    assert n.handle_gossip(kv_rumor(seq=5), 1, 1)[0] is Effect.ADOPTED
    assert n.handle_gossip(kv_rumor(seq=6, key="y"), 1, 1) == (Effect.RATE_DROPPED,)


def test_k2_holds_until_second_source_then_adopts():
    n = node(0, n=8, k=2)
    x = kv_rumor(origin=1)
    assert n.handle_gossip(x, 1, 1) == (Effect.TRUST_HELD,)
    assert n.store.get("x") is None
    effects = n.handle_gossip(x, 2, 2)
    assert effects[0] is Effect.DUPLICATE_DROPPED and Effect.ADOPTED in effects
    assert n.store.get("x") == b"X"


def test_held_rumors_time_out():
    n = node(0, n=8, k=2, hold_rounds=3)
    n.handle_gossip(kv_rumor(origin=1), 1, 1)
    n.start_round(3)
    assert n.held
    n.start_round(4)
    assert not n.held and not n.held_by_fact


def test_contradiction_only_hits_relayers_of_losing_value():
    n = node(0, n=8, k=2)
    old = kv_rumor(origin=1, value=b"old", lamport=1)
    n.handle_gossip(old, 2, 1)
    n.handle_gossip(old, 3, 1)
    assert n.store.get("x") == b"old"
    new = kv_rumor(origin=4, seq=1, value=b"new", lamport=5)
    n.handle_gossip(new, 5, 2)
    n.handle_gossip(new, 6, 2)
    assert n.store.get("x") == b"new"
    assert n.ledger.score(2) < 0.5 or n.ledger.score(3) < 0.5
    assert n.ledger.score(6) >= 0.5 and n.ledger.score(5) >= 0.5
    assert n.ledger.score(7) == 0.5


def test_anti_entropy_pulls_newer_version():
    a, b = node(0), node(1)
    a.store.apply(LwwRecord("k", b"5", Version(3, 0)), 0)
    b.store.apply(LwwRecord("k", b"7", Version(5, 1)), 0)
    rep = anti_entropy_exchange(a, b, 1)
    assert rep.pulled_by_a == ["k"] and rep.pulled_by_b == []
    assert a.store.get("k") == b.store.get("k") == b"7"
    assert anti_entropy_exchange(a, b, 2).empty


def test_anti_entropy_disjoint_stores_union():
    a, b = node(0), node(1)
    for i in range(5):
        a.store.apply(LwwRecord(f"a{i}", b"1", Version(1, 0)), 0)
        b.store.apply(LwwRecord(f"b{i}", b"1", Version(1, 1)), 0)
    want = set(a.store.lww) | set(b.store.lww)
    rep = anti_entropy_exchange(a, b, 1)
    assert len(rep.pulled_by_a) == len(rep.pulled_by_b) == 5
    assert a.store.dump() == b.store.dump()
    assert set(a.store.lww) == want


def test_hot_buffer_evicts_stalest():
    buf = HotBuffer(capacity=2)
    buf.add(kv_rumor(seq=1))
    buf.add(kv_rumor(seq=2))
    buf.entries[(1, 1)][1] = 5
    assert buf.add(kv_rumor(seq=3)) == (1, 1)
    assert set(buf.entries) == {(1, 2), (1, 3)}
    with pytest.raises(ValueError):
        HotBuffer(0)


def test_default_ttl():
    assert default_ttl(1024) == 14
    assert default_ttl(25000) == 19


def test_tampering_relay_is_caught_downstream():
    relay = node(1, n=4)
    relay.tamper = True
    relay.handle_gossip(kv_rumor(origin=2), 2, 1)
    out = relay.gossip_round(2)
    receiver = node(3, n=4)
    for _, r in out:
        assert receiver.handle_gossip(r, 1, 2) == (Effect.TRUST_HELD,)
    assert receiver.store.get("x") is None


def test_refuting_node_gossips_new_incarnation():
    n = node(2, n=4)
    rumor = Rumor((0, 1), "member/2", b'{"id":2,"incarnation":0,"status":"suspect"}', Version(1, 0),
                  Priority.CRITICAL, 3, 0)
    n.handle_gossip(rumor, 0, 1)
    assert n.view.me.status is Status.ALIVE and n.view.me.incarnation == 1
    assert any(e[0].topic == "member/2" and e[0].origin == 2 for e in n.buffer.entries.values())


def test_trust_outcome_enum_values():
    assert Outcome("corroborated") is Outcome.CORROBORATED

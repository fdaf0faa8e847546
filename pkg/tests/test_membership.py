import random
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gossipmesh.membership import (
    MemberRecord,
    MembershipView,
    Status,
    mark_suspect,
    merge_member,
    probe_round,
    refute,
    sample_ids,
)
from oracles import chi2_critical, chi2_statistic


def rec(status, inc, member=1, round_=0):
    return MemberRecord(member, status, inc, round_)


@pytest.mark.parametrize(
    "a, b, want",
    [
        (rec(Status.ALIVE, 2), rec(Status.SUSPECT, 1), rec(Status.ALIVE, 2)),
        (rec(Status.ALIVE, 1), rec(Status.SUSPECT, 1), rec(Status.SUSPECT, 1)),
        (rec(Status.DEAD, 1), rec(Status.ALIVE, 1), rec(Status.DEAD, 1)),
    ],
)
def test_merge_member_examples(a, b, want):
    assert merge_member(a, b) == want
    assert merge_member(b, a) == want


def test_merge_member_rejects_different_ids():
    with pytest.raises(ValueError):
        merge_member(rec(Status.ALIVE, 0, member=1), rec(Status.ALIVE, 0, member=2))


records = st.builds(MemberRecord, st.just(3), st.sampled_from(list(Status)), st.integers(0, 4), st.integers(0, 3))


@given(records, records, records)
def test_merge_member_semilattice(a, b, c):
    assert merge_member(a, b) == merge_member(b, a)
    assert merge_member(merge_member(a, b), c) == merge_member(a, merge_member(b, c))
    assert merge_member(a, a) == a


def test_probe_only_candidate():
    view = MembershipView(0, 2)
    for seed in range(20):
        plan = probe_round(view, random.Random(seed))
        assert plan.target == 1
        assert plan.proxies == []


def test_probe_all_peers_dead_is_noop():
    view = MembershipView(0, 4)
    for m in (1, 2, 3):
        view.set(MemberRecord(m, Status.DEAD, 0, 0))
    assert probe_round(view, random.Random(1)).is_noop


def test_probe_target_reproducible_and_uniform():
    view = MembershipView(0, 11)
    first = probe_round(view, random.Random(42))
    assert probe_round(view, random.Random(42)) == first
    # Reference sampler: uniform draws from [0, n) with rejection of self.
    ref = random.Random(42)
    while (want := ref.randrange(11)) == 0:
        pass
    assert first.target == want == 10
    assert len(first.proxies) == 3 and first.target not in first.proxies and 0 not in first.proxies
    rng = random.Random(7)
    counts = Counter(probe_round(view, rng).target for _ in range(20000))
    assert set(counts) == set(range(1, 11))
    assert chi2_statistic([counts[i] for i in range(1, 11)], 2000) < chi2_critical(9)


def test_suspect_then_dead_after_timeout():
    view = MembershipView(0, 4, suspicion_timeout=3)
    view.set(MemberRecord(2, Status.ALIVE, 1, 0))
    sus = mark_suspect(view, 2, 10)
    assert sus == MemberRecord(2, Status.SUSPECT, 1, 10)
    assert view.tick(12) == []
    dead = view.tick(13)
    assert dead == [MemberRecord(2, Status.DEAD, 1, 13)]
    assert view.status(2) is Status.DEAD


def test_refutation_overrides_suspicion():
    view = MembershipView(0, 4)
    view.set(MemberRecord(2, Status.ALIVE, 1, 0))
    mark_suspect(view, 2, 5)
    new = view.apply(MemberRecord(2, Status.ALIVE, 2, 6), 6)
    assert new is not None and new.status is Status.ALIVE and new.incarnation == 2
    assert view.tick(100) == []


def test_refute_bumps_incarnation_each_time():
    view = MembershipView(0, 4)
    view.set(MemberRecord(0, Status.SUSPECT, 3, 1))
    view, alive = refute(view, 2)
    assert alive == MemberRecord(0, Status.ALIVE, 4, 2)
    view.apply(MemberRecord(0, Status.SUSPECT, 4, 3), 3)
    view, again = refute(view, 3)
    assert again.incarnation == 5


def test_refute_without_suspicion_is_noop():
    view = MembershipView(0, 4)
    _, alive = refute(view, 1)
    assert alive is None


def test_self_death_rumor_is_treated_as_suspicion():
    view = MembershipView(0, 4)
    got = view.apply(MemberRecord(0, Status.DEAD, 0, 1), 1)
    assert got.status is Status.SUSPECT
    _, alive = refute(view, 1)
    assert alive.incarnation == 1


def test_mark_suspect_ignores_self_and_non_alive():
    view = MembershipView(0, 4)
    assert mark_suspect(view, 0, 1) is None
    view.set(MemberRecord(1, Status.DEAD, 0, 0))
    assert mark_suspect(view, 1, 1) is None


def test_sample_ids_respects_blocked_and_distinctness():
    rng = random.Random(3)
    for n in (5, 50, 500):
        for k in (1, 3, 10):
            blocked = set(range(0, n, 3))
            got = sample_ids(n, k, rng, blocked)
            assert len(got) == len(set(got)) == min(k, n - len(blocked))
            assert not set(got) & blocked


def test_view_rejects_out_of_range_self():
    with pytest.raises(ValueError):
        MembershipView(4, 4)

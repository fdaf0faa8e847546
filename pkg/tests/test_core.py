import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gossipmesh.core import (
    Digest,
    Ordering,
    Priority,
    Rumor,
    Version,
    canonical_json,
    compare_versions,
    digest_diff,
    next_version,
    rumor_from_dict,
    rumor_problem,
    rumor_to_dict,
    rumor_to_json,
)

versions = st.builds(Version, st.integers(0, 50), st.integers(0, 5))


@pytest.mark.parametrize(
    "a, b, want",
    [
        (Version(5, 1), Version(7, 0), Ordering.LESS),
        (Version(5, 1), Version(5, 1), Ordering.EQUAL),
        (Version(5, 2), Version(5, 1), Ordering.GREATER),
    ],
)
def test_compare_versions_examples(a, b, want):
    assert compare_versions(a, b) is want


@pytest.mark.parametrize(
    "clock, observed, want",
    [
        (Version(3, 2), Version(7, 5), Version(8, 2)),
        (Version(3, 2), Version(1, 0), Version(4, 2)),
        (Version(0, 0), Version(0, 0), Version(1, 0)),
    ],
)
def test_next_version_examples(clock, observed, want):
    assert next_version(clock, observed) == want


def test_digest_diff_examples():
    assert digest_diff(Digest({"k": Version(3, 0)}), Digest({"k": Version(5, 1)})) == ({"k"}, set())
    same = Digest({"k": Version(3, 0)})
    assert digest_diff(same, same) == (set(), set())
    assert digest_diff(Digest({"a": Version(2, 0)}), Digest({"b": Version(1, 1)})) == ({"b"}, {"a"})


@given(versions, versions)
def test_version_order_is_total_and_antisymmetric(a, b):
    ab, ba = compare_versions(a, b), compare_versions(b, a)
    assert ab == -ba
    assert (ab is Ordering.EQUAL) == (a == b)


@given(versions, versions, versions)
def test_version_order_is_transitive(a, b, c):
    if compare_versions(a, b) is Ordering.LESS and compare_versions(b, c) is Ordering.LESS:
        assert compare_versions(a, c) is Ordering.LESS


@given(versions, versions)
def test_next_version_exceeds_both_inputs(clock, observed):
    v = next_version(clock, observed)
    assert compare_versions(v, clock) is Ordering.GREATER
    assert compare_versions(v, observed) is Ordering.GREATER
    assert v.author == clock.author


digests = st.dictionaries(st.sampled_from("abcdef"), versions, max_size=6).map(Digest)


@given(digests, digests)
def test_digest_diff_is_antisymmetric(a, b):
    need, send = digest_diff(a, b)
    assert digest_diff(b, a) == (send, need)


def test_digest_serialization_is_sorted_and_round_trips():
    d = Digest({"z": Version(1, 0), "a": Version(2, 3)})
    assert d.to_json() == '{"a":[2,3],"z":[1,0]}'
    assert Digest.from_dict(json.loads(d.to_json())) == d


def make_rumor(**kw):
    base = dict(rumor_id=(1, 1), topic="kv/x", payload=b"X", version=Version(1, 1), ttl_hops=3)
    base.update(kw)
    return Rumor(**base)


def test_rumor_json_is_canonical_and_round_trips():
    r = make_rumor(payload=b"\xff\x00", priority=Priority.CRITICAL, confidence=0.25)
    text = rumor_to_json(r)
    assert text == canonical_json(json.loads(text))
    assert list(json.loads(text)) == sorted(json.loads(text))
    assert rumor_from_dict(json.loads(text)) == r
    assert rumor_to_dict(make_rumor())["payload"] == {"text": "X"}


def test_forwarded_spends_one_hop_and_tampered_fails_authenticity():
    r = make_rumor()
    assert r.forwarded().ttl_hops == 2
    assert r.forwarded().rumor_id == r.rumor_id
    assert r.tampered().authentic is False
    assert r.origin == 1


@pytest.mark.parametrize(
    "rumor, problem",
    [
        ("not a rumor", "not a rumor"),
        (make_rumor(ttl_hops=-1), "negative ttl_hops"),
        (make_rumor(topic=""), "empty topic"),
        (make_rumor(rumor_id=(1, -2)), "bad rumor_id"),
        (make_rumor(confidence=1.5), "confidence outside [0, 1]"),
        (make_rumor(payload="str"), "payload is not bytes"),
    ],
)
def test_rumor_problem_flags_malformed_envelopes(rumor, problem):
    assert rumor_problem(rumor) == problem


def test_rumor_problem_accepts_well_formed():
    assert rumor_problem(make_rumor()) is None


def test_version_from_list_rejects_negative():
    with pytest.raises(ValueError):
        Version.from_list([-1, 0])

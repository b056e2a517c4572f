import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evmvuln.errors import DimensionMismatch, EmptyIndex
from evmvuln.sibling import (
    Outcome, SiblingConfig, TrainingIndex, Voter, band_threshold, euclidean, find_contradictions,
    sibling_lookup, vote,
)


def scan_oracle(q, ids, vectors, labels, max_distance=0.1, step=0.00001):
    """Grow the radius from zero in fixed steps; stop at the first entry reached."""
    d = [math.dist(q, v) for v in vectors]
    nearest = min(d)
    k = 0
    while k * step < nearest:
        k += 1
        if k * step > max_distance + step:
            return "Unknown", []
    t = k * step
    if nearest > max_distance:
        return "Unknown", []
    voters = sorted((d[i], ids[i]) for i in range(len(d)) if d[i] <= t)
    pos = sum(labels[ids.index(i)] for _, i in voters)
    return ("Vulnerable" if pos * 2 > len(voters) else "NonVulnerable"), [i for _, i in voters]


def pairs_oracle(ids, vectors, labels, eps):
    out = []
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            if labels[i] != labels[j]:
                d = math.dist(vectors[i], vectors[j])
                if d <= eps:
                    a, b = sorted((ids[i], ids[j]))
                    out.append((a, b, d))
    return sorted(out, key=lambda r: (r[2], r[0], r[1]))


def random_index(n, dim, seed):
    """Clustered entries, with some exact duplicates carrying opposite labels."""
    rng = np.random.default_rng(seed)
    centres = rng.normal(size=(n // 10, dim))
    vecs = centres[rng.integers(len(centres), size=n)] + rng.normal(0, 0.03, size=(n, dim))
    labels = rng.integers(0, 2, size=n)
    for i in range(0, 60, 2):  # 30 tied pairs
        vecs[i + 1] = vecs[i]
        labels[i], labels[i + 1] = 1, 0
    ids = [f"0x{i:04x}" for i in range(n)]
    return TrainingIndex("reentrancy-eth", ids, vecs, labels)


def test_lookup_matches_scan_oracle():
    index = random_index(1000, 6, 0)
    rng = np.random.default_rng(1)
    queries = []
    for i in range(100):
        kind = i % 4
        if kind == 0:  # next to a tied pair
            queries.append(index.vectors[2 * (i % 30)] + rng.normal(0, 1e-4, 6))
        elif kind == 1:  # far away
            queries.append(rng.normal(5, 1, 6))
        else:
            queries.append(index.vectors[rng.integers(1000)] + rng.normal(0, 0.02, 6))
    seen = set()
    for q in queries:
        got = sibling_lookup(q, index)
        outcome, voter_ids = scan_oracle(q, index.ids, index.vectors, list(index.labels))
        assert got.outcome.value == outcome
        assert [v.id for v in got.voters] == voter_ids
        seen.add(outcome)
        if len(voter_ids) == 2 and outcome == "NonVulnerable":
            seen.add("tie")
    assert seen == {"Unknown", "Vulnerable", "NonVulnerable", "tie"}


def test_contradictions_match_pair_oracle():
    index = random_index(500, 4, 2)
    eps = 0.02
    got = find_contradictions(index, eps, chunk=64)
    ref = pairs_oracle(index.ids, index.vectors, list(index.labels), eps)
    assert [(a, b) for a, b, _ in got] == [(a, b) for a, b, _ in ref]
    assert np.allclose([d for *_, d in got], [d for *_, d in ref])
    assert len(got) >= 30


@given(st.floats(0, 0.2), st.sampled_from([1e-5, 1e-3, 0.01]))
def test_band_threshold_is_smallest_grid_point_above(nearest, step):
    t = band_threshold(nearest, step)
    m = round(t / step)
    assert m * step == t
    assert t >= nearest
    assert m == 0 or (m - 1) * step < nearest


def test_vote_requires_strict_majority():
    v = lambda *labels: [Voter(str(i), 0.0, y) for i, y in enumerate(labels)]
    assert vote(v(1, 1, 0)) is Outcome.VULNERABLE
    assert vote(v(1, 0)) is Outcome.NON_VULNERABLE
    assert vote(v(0)) is Outcome.NON_VULNERABLE


def test_verdict_invariants():
    index = TrainingIndex.build("x", [("a", [0.0, 0.0], 1), ("b", [0.05, 0.0], 0), ("c", [1.0, 1.0], 1)])
    far = sibling_lookup([3.0, 3.0], index)
    assert far.outcome is Outcome.UNKNOWN and far.voters == () and far.band_threshold is None
    near = sibling_lookup([0.0, 0.0], index)
    assert near.band_threshold == 0.0 and [v.id for v in near.voters] == ["a"]
    mid = sibling_lookup([0.06, 0.0], index)
    assert [v.id for v in mid.voters] == ["b"]


def test_errors():
    with pytest.raises(EmptyIndex):
        sibling_lookup([0.0], TrainingIndex.build("x", []))
    index = TrainingIndex.build("x", [("a", [0.0, 0.0], 1)])
    with pytest.raises(DimensionMismatch):
        sibling_lookup([0.0], index)
    with pytest.raises(DimensionMismatch):
        euclidean([1, 2], [1, 2, 3])
    with pytest.raises(DimensionMismatch):
        TrainingIndex.build("x", [("a", [0.0], 1), ("b", [0.0, 1.0], 0)])
    with pytest.raises(ValueError):
        TrainingIndex.build("x", [("a", [0.0], 1), ("a", [1.0], 0)])
    with pytest.raises(ValueError):
        SiblingConfig(max_distance=0.1, step=0.2)


def test_index_file_roundtrip(tmp_path):
    index = random_index(80, 3, 4)
    index.save(tmp_path / "i.jsonl")
    back = TrainingIndex.load(tmp_path / "i.jsonl")
    assert back.ids == index.ids and np.array_equal(back.vectors, index.vectors)
    assert np.array_equal(back.labels, index.labels) and back.vulnerability == index.vulnerability

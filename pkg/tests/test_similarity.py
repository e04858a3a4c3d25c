import sys
from pathlib import Path

# Add project root to path for imports
sys.path.append(str(Path(__file__).parent.parent))

import numpy as np
import pytest

from src.core.errors import ArgumentError
from src.core.models import CountFingerprint
from src.processors.similarity import (
    FingerprintSimilarity,
    hits_frame,
    max_similarity,
    naive_max_similarity,
    near_duplicate_filter,
    padded_dim,
    tanimoto_count,
)

DIM = 4093


def _random_fingerprints(rng, n, prefix, dim=DIM, nnz=10):
    fps = []
    for i in range(n):
        idx = rng.choice(dim, size=nnz, replace=False)
        counts = rng.integers(1, 4, size=nnz)
        fps.append(CountFingerprint(f"{prefix}{i:04d}", dim, dict(zip(idx.tolist(), counts.tolist()))))
    return fps


def test_worked_value():
    x = CountFingerprint("x", 2, {0: 1, 1: 2})
    y = CountFingerprint("y", 2, {0: 2, 1: 1})
    assert tanimoto_count(x, y) == 2 / 3
    assert tanimoto_count(y, x) == 2 / 3


def test_identity_and_disjoint():
    x = CountFingerprint("x", 8, {0: 3, 5: 1})
    assert tanimoto_count(x, x) == 1.0
    assert tanimoto_count(x, CountFingerprint("y", 8, {1: 1})) == 0.0


def test_dimension_mismatch():
    with pytest.raises(ArgumentError):
        tanimoto_count(CountFingerprint("x", 8, {0: 1}), CountFingerprint("y", 16, {0: 1}))


def test_padded_dim():
    assert padded_dim(4093) == 4096
    assert padded_dim(4096) == 4096
    assert padded_dim(1) == 1


def test_blocked_kernel_matches_naive_oracle():
    rng = np.random.default_rng(0)
    queries = _random_fingerprints(rng, 1000, "q")
    references = _random_fingerprints(rng, 1000, "r")
    blocked = FingerprintSimilarity(block=256).max_similarity(queries, references)
    naive = naive_max_similarity(queries, references)
    for b, n in zip(blocked, naive):
        assert b.query_id == n.query_id
        assert b.reference_id == n.reference_id
        assert abs(b.max_sim - n.max_sim) <= 1e-12


def test_ties_go_to_the_smallest_reference_id():
    q = CountFingerprint("q", 8, {0: 1})
    refs = [CountFingerprint("r2", 8, {0: 1}), CountFingerprint("r1", 8, {0: 1}), CountFingerprint("r0", 8, {1: 1})]
    for block in (1, 2, 1024):
        hit = max_similarity([q], refs, block=block)[0]
        assert (hit.reference_id, hit.max_sim) == ("r1", 1.0)


def test_queries_equal_references():
    rng = np.random.default_rng(1)
    fps = _random_fingerprints(rng, 50, "m", dim=64, nnz=5)
    hits = max_similarity(fps, fps, block=16)
    assert all(h.max_sim == pytest.approx(1.0) for h in hits)
    assert all(h.query_id == h.reference_id for h in hits)


def test_single_reference_equals_direct_similarity():
    rng = np.random.default_rng(2)
    queries = _random_fingerprints(rng, 20, "q", dim=32, nnz=4)
    ref = _random_fingerprints(rng, 1, "r", dim=32, nnz=4)[0]
    for hit, q in zip(max_similarity(queries, [ref]), queries):
        assert hit.max_sim == pytest.approx(tanimoto_count(q, ref), abs=1e-12)


def test_padding_does_not_change_similarity():
    x = CountFingerprint("x", 5, {0: 1, 4: 2})
    y = CountFingerprint("y", 5, {0: 2, 3: 1})
    wide_x = CountFingerprint("x", 64, x.counts)
    wide_y = CountFingerprint("y", 64, y.counts)
    assert tanimoto_count(x, y) == tanimoto_count(wide_x, wide_y)


def test_empty_references():
    with pytest.raises(ArgumentError):
        max_similarity([CountFingerprint("q", 8, {0: 1})], [])


def test_near_duplicate_filter():
    refs = [CountFingerprint("t1", 8, {0: 1, 1: 1}), CountFingerprint("t2", 8, {5: 2, 6: 1})]
    queries = [CountFingerprint("q1", 8, {0: 1, 1: 1, 2: 1}), CountFingerprint("q2", 8, {5: 2, 6: 1})]
    assert near_duplicate_filter(queries, refs, 0.95) == ["q1"]
    assert near_duplicate_filter(queries, refs, 1.0) == ["q1"]
    assert near_duplicate_filter(refs, refs, 0.5) == []
    with pytest.raises(ArgumentError):
        near_duplicate_filter(queries, refs, 0.0)


def test_all_retained_at_threshold_one():
    queries = [CountFingerprint("q1", 8, {0: 1}), CountFingerprint("q2", 8, {1: 1, 2: 1})]
    refs = [CountFingerprint("t1", 8, {0: 1, 1: 1})]
    assert near_duplicate_filter(queries, refs, 1.0) == ["q1", "q2"]


def test_hits_frame_columns():
    q = CountFingerprint("q", 8, {0: 1})
    frame = hits_frame(max_similarity([q], [CountFingerprint("r", 8, {0: 1, 1: 1})]))
    assert list(frame.columns) == ["input_id", "value", "reference_id"]
    assert frame.iloc[0]["value"] == pytest.approx(0.5)

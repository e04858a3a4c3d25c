import math
import sys
from pathlib import Path

# Add project root to path for imports
sys.path.append(str(Path(__file__).parent.parent))

import numpy as np
import pytest

from src.core.errors import ArgumentError, DegeneracyError
from src.core.models import ComparisonRecord, Ratings
from src.services.elo import (
    ELO_SCALE,
    bootstrap_win_rate_ci,
    elo_report,
    fit_bradley_terry,
    predicted_win_rate,
    to_elo,
)


def _sample_comparisons(true_scores, n, seed):
    rng = np.random.default_rng(seed)
    sources = list(true_scores)
    records = []
    for _ in range(n):
        i, j = rng.choice(len(sources), size=2, replace=False)
        a, b = sources[i], sources[j]
        p_a = 1.0 / (1.0 + math.exp(true_scores[b] - true_scores[a]))
        records.append(ComparisonRecord(a, b, "a" if rng.random() < p_a else "b"))
    return records


@pytest.fixture(scope="module")
def synthetic():
    return _sample_comparisons({"s0": 0.0, "s1": 0.4, "s2": 0.8}, 10_000, seed=1)


@pytest.fixture
def balanced():
    return [ComparisonRecord("x", "y", "a"), ComparisonRecord("x", "y", "b")] * 3


def test_equal_wins_give_equal_scores(balanced):
    scores = fit_bradley_terry(balanced)
    assert scores["x"] == pytest.approx(scores["y"], abs=1e-9)
    ratings = to_elo(scores, "x")
    assert predicted_win_rate(ratings, "x", "y") == pytest.approx(0.5)


def test_recovers_known_scores(synthetic):
    ratings = to_elo(fit_bradley_terry(synthetic), "s0")
    assert ratings.scores["s0"] == 0.0
    assert abs(ratings.scores["s1"] - 0.4) < 0.1
    assert abs(ratings.scores["s2"] - 0.8) < 0.1


def test_reversing_winners_negates_scores(synthetic):
    forward = to_elo(fit_bradley_terry(synthetic), "s0")
    backward = to_elo(fit_bradley_terry([r.reversed() for r in synthetic]), "s0")
    for source in forward.scores:
        assert backward.scores[source] == pytest.approx(-forward.scores[source], abs=1e-8)


def test_elo_scaling():
    ratings = to_elo({"dummy": 0.3, "model": 0.7029}, "dummy")
    assert ratings.elo["dummy"] == 0.0
    assert ratings.elo["model"] == pytest.approx(ELO_SCALE * 0.4029)
    assert ratings.elo["model"] == pytest.approx(70.0, abs=0.05)


def test_elo_differences_are_shift_invariant():
    scores = {"a": 0.1, "b": -0.5, "c": 1.25}
    shifted = {k: v + 3.0 for k, v in scores.items()}
    r1, r2 = to_elo(scores, "a"), to_elo(shifted, "a")
    for i in scores:
        for j in scores:
            assert r1.elo[i] - r1.elo[j] == pytest.approx(r2.elo[i] - r2.elo[j], abs=1e-12)


def test_missing_anchor():
    with pytest.raises(ArgumentError):
        to_elo({"a": 0.0}, "b")


def test_seventy_points_is_about_sixty_percent():
    ratings = Ratings(scores={}, elo={"i": 70.0, "j": 0.0}, anchor="j")
    assert predicted_win_rate(ratings, "i", "j") == pytest.approx(0.5997, abs=5e-4)
    assert predicted_win_rate(ratings, "i", "j") + predicted_win_rate(ratings, "j", "i") == pytest.approx(1.0)
    with pytest.raises(ArgumentError):
        predicted_win_rate(ratings, "i", "k")


def test_win_rate_reproduces_bradley_terry_probability(synthetic):
    scores = fit_bradley_terry(synthetic)
    ratings = to_elo(scores, "s1")
    expected = math.exp(scores["s2"]) / (math.exp(scores["s2"]) + math.exp(scores["s0"]))
    assert predicted_win_rate(ratings, "s2", "s0") == pytest.approx(expected, rel=1e-12)


def test_degenerate_graphs_name_the_source():
    with pytest.raises(DegeneracyError, match="'y'"):
        fit_bradley_terry([ComparisonRecord("x", "y", "a"), ComparisonRecord("y", "z", "b"),
                           ComparisonRecord("x", "z", "b"), ComparisonRecord("z", "x", "b")])
    with pytest.raises(DegeneracyError, match="disconnected"):
        fit_bradley_terry([ComparisonRecord("a", "b", "a"), ComparisonRecord("a", "b", "b"),
                           ComparisonRecord("c", "d", "a"), ComparisonRecord("c", "d", "b")])


def test_empty_comparisons():
    with pytest.raises(ArgumentError):
        fit_bradley_terry([])


def test_bootstrap_brackets_the_point_estimate(synthetic):
    ratings = to_elo(fit_bradley_terry(synthetic), "s0")
    intervals = bootstrap_win_rate_ci(synthetic, n_resamples=200, seed=3)
    assert len(intervals) == 6
    for (i, j), (low, high) in intervals.items():
        assert low <= predicted_win_rate(ratings, i, j) <= high


def test_bootstrap_is_deterministic(balanced):
    a = bootstrap_win_rate_ci(balanced * 5, n_resamples=50, seed=9)
    b = bootstrap_win_rate_ci(balanced * 5, n_resamples=50, seed=9)
    assert a == b


def test_single_resample_gives_zero_width(balanced):
    intervals = bootstrap_win_rate_ci(balanced * 5, n_resamples=1, seed=0)
    for low, high in intervals.values():
        assert low == high


def test_interval_shrinks_with_more_records():
    truth = {"s0": 0.0, "s1": 0.4, "s2": 0.8}
    small = bootstrap_win_rate_ci(_sample_comparisons(truth, 500, seed=4), n_resamples=200, seed=1)
    large = bootstrap_win_rate_ci(_sample_comparisons(truth, 5000, seed=4), n_resamples=200, seed=1)
    pair = ("s2", "s0")
    assert large[pair][1] - large[pair][0] < small[pair][1] - small[pair][0]


def test_bootstrap_argument_checks(balanced):
    with pytest.raises(ArgumentError):
        bootstrap_win_rate_ci(balanced, n_resamples=0)
    with pytest.raises(ArgumentError):
        bootstrap_win_rate_ci(balanced, n_resamples=10, confidence=1.0)


def test_report_contents(balanced):
    report = elo_report(balanced, "x", n_resamples=100, seed=0)
    assert report["ratings"]["x"]["elo"] == 0.0
    rows = {(r["source"], r["opponent"]): r for r in report["win_rates"]}
    assert rows[("x", "y")]["predicted_win_rate"] == pytest.approx(0.5)
    assert rows[("x", "y")]["wins"] == 3
    assert rows[("x", "y")]["losses"] == 3
    assert rows[("x", "y")]["ci_low"] <= 0.5 <= rows[("x", "y")]["ci_high"]

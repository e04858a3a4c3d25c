"""Bradley-Terry ratings from pairwise preference judgments, reported on an ELO scale."""
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from tqdm import tqdm

from src.core.errors import ArgumentError, DegeneracyError
from src.core.models import ComparisonRecord, Ratings

logger = logging.getLogger(__name__)

ELO_SCALE = 400.0 * math.log10(math.e)
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000


def _index(comparisons: Sequence[ComparisonRecord]) -> Tuple[List[str], np.ndarray, np.ndarray]:
    if not comparisons:
        raise ArgumentError("At least one comparison is required")
    sources = sorted({c.source_a for c in comparisons} | {c.source_b for c in comparisons})
    pos = {s: i for i, s in enumerate(sources)}
    winners = np.array([pos[c.winner_id] for c in comparisons], dtype=np.int64)
    losers = np.array([pos[c.loser_id] for c in comparisons], dtype=np.int64)
    return sources, winners, losers


def _win_matrix(n: int, winners: np.ndarray, losers: np.ndarray, counts: Optional[np.ndarray] = None) -> np.ndarray:
    """wins[i, j] = number of times i beat j."""
    flat = np.bincount(winners * n + losers, weights=counts, minlength=n * n)
    return flat.reshape(n, n)


def _degeneracy(sources: Sequence[str], wins: np.ndarray) -> Optional[str]:
    """Reason the likelihood has no finite maximizer, or None."""
    games = wins + wins.T
    n_weak, labels = connected_components(csr_matrix(games > 0), directed=False)
    if n_weak > 1:
        stray = sources[int(np.argmax(labels != labels[0]))]
        return f"comparison graph is disconnected; {stray!r} is not connected to {sources[0]!r}"
    for i, source in enumerate(sources):
        if wins[i].sum() == 0:
            return f"source {source!r} has no wins"
        if wins[:, i].sum() == 0:
            return f"source {source!r} has no losses"
    n_strong, labels = connected_components(csr_matrix(wins > 0), directed=True, connection="strong")
    if n_strong > 1:
        stray = sources[int(np.argmax(labels != labels[0]))]
        return f"source {stray!r} is separated: some group of sources never loses to the rest"
    return None


def _mm_fit(wins: np.ndarray, tol: float, max_iter: int, s0: Optional[np.ndarray] = None) -> Tuple[np.ndarray, int, bool]:
    """Zermelo / minorization-maximization iterations; returns mean-zero scores."""
    games = wins + wins.T
    total_wins = wins.sum(axis=1)
    s = np.zeros(len(wins)) if s0 is None else np.array(s0, dtype=float)
    p = np.exp(s)
    for iteration in range(1, max_iter + 1):
        denom = (games / (p[:, None] + p[None, :])).sum(axis=1)
        p = total_wins / denom
        s_new = np.log(p)
        s_new -= s_new.mean()
        p = np.exp(s_new)
        change = np.max(np.abs(s_new - s))
        s = s_new
        if change < tol:
            return s, iteration, True
    return s, max_iter, False


def fit_bradley_terry(
    comparisons: Sequence[ComparisonRecord],
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> Dict[str, float]:
    """Maximum-likelihood Bradley-Terry scores s_i (mean zero)."""
    sources, winners, losers = _index(comparisons)
    wins = _win_matrix(len(sources), winners, losers)
    reason = _degeneracy(sources, wins)
    if reason:
        raise DegeneracyError(f"Degenerate Bradley-Terry likelihood: {reason}")
    s, iterations, converged = _mm_fit(wins, tol, max_iter)
    if converged:
        logger.debug(f"Bradley-Terry converged after {iterations} iterations")
    else:
        logger.warning(f"⚠️ Bradley-Terry did not reach tol={tol} within {max_iter} iterations")
    return {source: float(v) for source, v in zip(sources, s)}


def to_elo(scores: Dict[str, float], anchor: str) -> Ratings:
    if anchor not in scores:
        raise ArgumentError(f"Anchor {anchor!r} is not among the rated sources {sorted(scores)}")
    base = scores[anchor]
    shifted = {source: s - base for source, s in scores.items()}
    return Ratings(
        scores=shifted,
        elo={source: ELO_SCALE * s for source, s in shifted.items()},
        anchor=anchor,
    )


def predicted_win_rate(ratings: Ratings, i: str, j: str) -> float:
    for source in (i, j):
        if source not in ratings.elo:
            raise ArgumentError(f"Unknown source {source!r}")
    return 1.0 / (1.0 + 10.0 ** (-(ratings.elo[i] - ratings.elo[j]) / 400.0))


def bootstrap_win_rate_ci(
    comparisons: Sequence[ComparisonRecord],
    n_resamples: int = 10_000,
    confidence: float = 0.95,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    max_retries: int = 10,
    progress: bool = False,
) -> Dict[Tuple[str, str], Tuple[float, float]]:
    """Percentile intervals of predicted win rates over record-level resamples."""
    if n_resamples < 1:
        raise ArgumentError(f"n_resamples must be positive, got {n_resamples}")
    if n_resamples < 100:
        logger.warning(f"⚠️ Only {n_resamples} bootstrap resamples; intervals will be coarse")
    if not 0 < confidence < 1:
        raise ArgumentError(f"confidence must lie in (0, 1), got {confidence}")
    sources, winners, losers = _index(comparisons)
    n, n_records = len(sources), len(winners)
    full = _win_matrix(n, winners, losers)
    reason = _degeneracy(sources, full)
    if reason:
        raise DegeneracyError(f"Degenerate Bradley-Terry likelihood: {reason}")
    s_hat, _, _ = _mm_fit(full, tol, max_iter)

    rates = np.empty((n_resamples, n, n))
    children = np.random.SeedSequence(seed).spawn(n_resamples)
    for b in tqdm(range(n_resamples), desc="bootstrap", disable=not progress):
        rng = np.random.default_rng(children[b])
        for attempt in range(max_retries + 1):
            counts = np.bincount(rng.integers(0, n_records, n_records), minlength=n_records).astype(float)
            wins = _win_matrix(n, winners, losers, counts)
            if _degeneracy(sources, wins) is None:
                break
            logger.debug(f"Resample {b} degenerate, redrawing (attempt {attempt + 1})")
        else:
            raise DegeneracyError(f"Bootstrap resample {b} stayed degenerate after {max_retries} redraws")
        s, _, _ = _mm_fit(wins, tol, max_iter, s0=s_hat)
        rates[b] = 1.0 / (1.0 + np.exp(-(s[:, None] - s[None, :])))

    alpha = 100.0 * (1.0 - confidence) / 2.0
    low, high = np.percentile(rates, [alpha, 100.0 - alpha], axis=0)
    return {
        (sources[i], sources[j]): (float(low[i, j]), float(high[i, j]))
        for i in range(n) for j in range(n) if i != j
    }


def elo_report(
    comparisons: Sequence[ComparisonRecord],
    anchor: str,
    n_resamples: int = 10_000,
    confidence: float = 0.95,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    progress: bool = False,
) -> Dict:
    ratings = to_elo(fit_bradley_terry(comparisons, tol, max_iter), anchor)
    intervals = (
        bootstrap_win_rate_ci(comparisons, n_resamples, confidence, seed, tol, max_iter, progress=progress)
        if n_resamples > 0 else {}
    )
    sources, winners, losers = _index(comparisons)
    wins = _win_matrix(len(sources), winners, losers)
    pos = {s: i for i, s in enumerate(sources)}
    pairs = []
    for i in sources:
        for j in sources:
            if i == j:
                continue
            low, high = intervals.get((i, j), (None, None))
            pairs.append({
                "source": i,
                "opponent": j,
                "predicted_win_rate": predicted_win_rate(ratings, i, j),
                "ci_low": low,
                "ci_high": high,
                "wins": int(wins[pos[i], pos[j]]),
                "losses": int(wins[pos[j], pos[i]]),
            })
    logger.info(f"✅ Rated {len(sources)} sources from {len(comparisons)} comparisons (anchor {anchor!r})")
    return {
        "anchor": anchor,
        "n_comparisons": len(comparisons),
        "n_resamples": n_resamples,
        "confidence": confidence,
        "seed": seed,
        "ratings": {s: {"score": ratings.scores[s], "elo": ratings.elo[s]} for s in sources},
        "win_rates": pairs,
    }

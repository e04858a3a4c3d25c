import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.core.errors import ArgumentError, DegeneracyError
from src.core.models import CountFingerprint

logger = logging.getLogger(__name__)

DEFAULT_BLOCK = 1024
NEAR_DUPLICATE_THRESHOLD = 0.95


@dataclass(frozen=True)
class SimilarityHit:
    query_id: str
    max_sim: float
    reference_id: str


def tanimoto_count(x: CountFingerprint, y: CountFingerprint) -> float:
    """Tanimoto similarity generalized to count vectors: <x,y> / (|x|^2 + |y|^2 - <x,y>)."""
    if x.dim != y.dim:
        raise ArgumentError(f"Dimension mismatch: {x.id!r} has {x.dim}, {y.id!r} has {y.dim}")
    small, large = (x, y) if len(x.counts) <= len(y.counts) else (y, x)
    dot = sum(c * large.counts.get(i, 0) for i, c in small.counts.items())
    denom = x.squared_norm + y.squared_norm - dot
    if denom == 0:
        raise DegeneracyError(f"Similarity of all-zero fingerprints {x.id!r} and {y.id!r} is undefined")
    return dot / denom


def padded_dim(dim: int) -> int:
    return 1 << max(dim - 1, 0).bit_length()


def _uniform_dim(*groups: Sequence[CountFingerprint]) -> int:
    dims = {fp.dim for group in groups for fp in group}
    if len(dims) != 1:
        raise ArgumentError(f"Fingerprints must share one dimension, found {sorted(dims)}")
    return dims.pop()


def _dense(fps: Sequence[CountFingerprint], width: int) -> Tuple[np.ndarray, np.ndarray]:
    """Dense count panel and per-row squared norms."""
    panel = np.zeros((len(fps), width))
    for row, fp in enumerate(fps):
        idx = np.fromiter(fp.counts.keys(), dtype=np.int64, count=len(fp.counts))
        panel[row, idx] = np.fromiter(fp.counts.values(), dtype=float, count=len(fp.counts))
    return panel, np.einsum("ij,ij->i", panel, panel)


class FingerprintSimilarity:
    """All-pairs max similarity computed as blocked dense inner products."""

    def __init__(self, block: int = DEFAULT_BLOCK):
        if block <= 0:
            raise ArgumentError(f"Block size must be positive, got {block}")
        self.block = block

    def max_similarity(
        self, queries: Sequence[CountFingerprint], references: Sequence[CountFingerprint]
    ) -> List[SimilarityHit]:
        if not references:
            raise ArgumentError("At least one reference fingerprint is required")
        if not queries:
            return []
        width = padded_dim(_uniform_dim(queries, references))
        # Sorted ids make the first maximum the smallest reference id
        refs = sorted(references, key=lambda fp: fp.id)
        best = np.full(len(queries), -1.0)
        best_idx = np.zeros(len(queries), dtype=np.int64)

        for r0 in range(0, len(refs), self.block):
            r_panel, r_norm = _dense(refs[r0:r0 + self.block], width)
            for q0 in range(0, len(queries), self.block):
                q_panel, q_norm = _dense(queries[q0:q0 + self.block], width)
                dot = q_panel @ r_panel.T
                sim = dot / (q_norm[:, None] + r_norm[None, :] - dot)
                arg = np.argmax(sim, axis=1)
                top = sim[np.arange(len(arg)), arg]
                better = top > best[q0:q0 + len(arg)]
                best[q0:q0 + len(arg)][better] = top[better]
                best_idx[q0:q0 + len(arg)][better] = arg[better] + r0
            logger.debug(f"Reference block {r0 // self.block + 1} done")
        return [SimilarityHit(q.id, float(s), refs[i].id) for q, s, i in zip(queries, best, best_idx)]

    def near_duplicate_filter(
        self,
        queries: Sequence[CountFingerprint],
        references: Sequence[CountFingerprint],
        threshold: float = NEAR_DUPLICATE_THRESHOLD,
    ) -> List[str]:
        """Ids of queries whose max similarity to any reference is strictly below threshold."""
        if not 0 < threshold <= 1:
            raise ArgumentError(f"Threshold must lie in (0, 1], got {threshold}")
        return self.below_threshold(self.max_similarity(queries, references), threshold)

    @staticmethod
    def below_threshold(hits: Sequence[SimilarityHit], threshold: float = NEAR_DUPLICATE_THRESHOLD) -> List[str]:
        if not 0 < threshold <= 1:
            raise ArgumentError(f"Threshold must lie in (0, 1], got {threshold}")
        kept = [hit.query_id for hit in hits if hit.max_sim < threshold]
        logger.info(f"✅ Kept {len(kept)} of {len(hits)} queries below similarity {threshold}")
        return kept


def max_similarity(
    queries: Sequence[CountFingerprint], references: Sequence[CountFingerprint], block: int = DEFAULT_BLOCK
) -> List[SimilarityHit]:
    return FingerprintSimilarity(block).max_similarity(queries, references)


def near_duplicate_filter(
    queries: Sequence[CountFingerprint],
    references: Sequence[CountFingerprint],
    threshold: float = NEAR_DUPLICATE_THRESHOLD,
    block: int = DEFAULT_BLOCK,
) -> List[str]:
    return FingerprintSimilarity(block).near_duplicate_filter(queries, references, threshold)


def naive_max_similarity(
    queries: Sequence[CountFingerprint], references: Sequence[CountFingerprint]
) -> List[SimilarityHit]:
    """Pairwise reference computation; ties go to the smallest reference id."""
    if not references:
        raise ArgumentError("At least one reference fingerprint is required")
    hits = []
    for q in queries:
        best: Optional[Tuple[float, str]] = None
        for r in references:
            s = tanimoto_count(q, r)
            if best is None or s > best[0] or (s == best[0] and r.id < best[1]):
                best = (s, r.id)
        hits.append(SimilarityHit(q.id, best[0], best[1]))
    return hits


def hits_frame(hits: Sequence[SimilarityHit]) -> pd.DataFrame:
    """CSV-ready table (input_id, value, reference_id), usable as bucketing metadata."""
    return pd.DataFrame(
        [(h.query_id, h.max_sim, h.reference_id) for h in hits],
        columns=["input_id", "value", "reference_id"],
    )

import logging
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from src.core.errors import ArgumentError, DataError
from src.core.schemas import BucketRow, EvaluationReport, ModelScore

logger = logging.getLogger(__name__)

DEFAULT_KS = (1, 3, 5, 10, 20, 50)


def truth_ranks(merged: Mapping[str, Sequence[str]], truth: Mapping[str, str]) -> Dict[str, float]:
    """1-based rank of the ground truth per input, inf when absent."""
    if not merged:
        raise DataError("No instances to evaluate")
    missing_truth = [iid for iid in merged if iid not in truth]
    if missing_truth:
        raise DataError(f"No ground truth for input {missing_truth[0]!r}")
    missing_merged = [iid for iid in truth if iid not in merged]
    if missing_merged:
        raise DataError(f"No ranked output for input {missing_merged[0]!r}")
    ranks = {}
    for iid, ranked in merged.items():
        target = truth[iid]
        ranks[iid] = next((pos for pos, key in enumerate(ranked, start=1) if key == target), np.inf)
    return ranks


def topk_accuracy(
    merged: Mapping[str, Sequence[str]], truth: Mapping[str, str], ks: Iterable[int] = DEFAULT_KS
) -> Dict[int, float]:
    ks = sorted(set(int(k) for k in ks))
    if not ks or ks[0] <= 0:
        raise ArgumentError(f"ks must be positive integers, got {ks}")
    ranks = np.fromiter(truth_ranks(merged, truth).values(), dtype=float)
    return {k: float(np.mean(ranks <= k)) for k in ks}


def mrr(merged: Mapping[str, Sequence[str]], truth: Mapping[str, str]) -> float:
    ranks = np.fromiter(truth_ranks(merged, truth).values(), dtype=float)
    return float(np.mean(1.0 / ranks))  # 1 / inf = 0


def bucketed_accuracy(
    merged: Mapping[str, Sequence[str]],
    truth: Mapping[str, str],
    metadata: Mapping[str, float],
    boundaries: Sequence[float],
    k: int,
) -> List[BucketRow]:
    """Top-k accuracy per metadata bucket [b_j, b_j+1); the last bucket is open-ended."""
    bounds = np.asarray(boundaries, dtype=float)
    if bounds.ndim != 1 or len(bounds) == 0:
        raise ArgumentError("At least one bucket boundary is required")
    if np.any(np.diff(bounds) <= 0):
        raise ArgumentError(f"Bucket boundaries must be strictly increasing, got {list(bounds)}")
    if k <= 0:
        raise ArgumentError(f"k must be positive, got {k}")

    ranks = truth_ranks(merged, truth)
    ids = list(ranks)
    missing = [iid for iid in ids if iid not in metadata]
    if missing:
        raise DataError(f"No metadata value for input {missing[0]!r}")
    values = np.array([metadata[iid] for iid in ids], dtype=float)
    below = values < bounds[0]
    if np.any(below):
        raise DataError(
            f"Metadata value {values[below][0]} for input {ids[int(np.argmax(below))]!r} "
            f"is below the first boundary {bounds[0]}"
        )
    hits = np.array([ranks[iid] <= k for iid in ids])
    bucket = np.searchsorted(bounds, values, side="right") - 1

    rows = []
    for j, lower in enumerate(bounds):
        in_bucket = bucket == j
        count = int(in_bucket.sum())
        rows.append(BucketRow(
            lower=float(lower),
            upper=float(bounds[j + 1]) if j + 1 < len(bounds) else None,
            count=count,
            accuracy=float(hits[in_bucket].mean()) if count else None,
        ))
    return rows


def buckets_frame(rows: Sequence[BucketRow]) -> pd.DataFrame:
    return pd.DataFrame([row.model_dump() for row in rows], columns=["lower", "upper", "count", "accuracy"])


def evaluate(
    merged: Mapping[str, Sequence[str]],
    truth: Mapping[str, str],
    ks: Iterable[int] = DEFAULT_KS,
    metadata: Optional[Mapping[str, float]] = None,
    boundaries: Optional[Sequence[float]] = None,
    bucket_k: Optional[int] = None,
    per_model: Optional[Mapping[str, Mapping[str, Sequence[str]]]] = None,
) -> EvaluationReport:
    ks = sorted(set(ks))
    accuracy = topk_accuracy(merged, truth, ks)
    report = EvaluationReport(accuracy=accuracy, mrr=mrr(merged, truth), n_instances=len(merged))
    if metadata is not None:
        if boundaries is None:
            raise ArgumentError("Bucketed accuracy needs boundaries")
        report.bucket_k = bucket_k or ks[0]
        report.buckets = bucketed_accuracy(merged, truth, metadata, boundaries, report.bucket_k)
        if sum(row.count for row in report.buckets) != report.n_instances:
            raise DataError("Bucket counts do not cover every instance")
    if per_model:
        report.per_model = [
            ModelScore(model_id=model_id, accuracy=topk_accuracy(lists, truth, ks), mrr=mrr(lists, truth))
            for model_id, lists in per_model.items()
        ]
    logger.info(f"✅ Evaluated {report.n_instances} inputs: " +
                ", ".join(f"top-{k}={v:.4f}" for k, v in accuracy.items()) + f", MRR={report.mrr:.4f}")
    return report

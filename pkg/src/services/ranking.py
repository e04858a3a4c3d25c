from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.errors import ArgumentError, ConfigurationError
from src.core.models import EnsembleInstance, PredictionKey, ThetaMatrix

BASELINE_KINDS = ("linear", "reciprocal", "weighted_reciprocal")


def _check_order(instance: EnsembleInstance, theta: ThetaMatrix) -> None:
    if instance.model_ids != theta.model_ids:
        raise ConfigurationError(
            f"Theta model order {list(theta.model_ids)} does not match input "
            f"{instance.input_id!r} model order {list(instance.model_ids)}"
        )


def score_prediction(r: PredictionKey, instance: EnsembleInstance, theta: ThetaMatrix) -> float:
    """Sum of theta[i, k] over every (model i, rank k <= k_max) slot holding r."""
    _check_order(instance, theta)
    r = r.strip()
    score = 0.0
    for i, output in enumerate(instance.outputs):
        rank = output.rank_of(r)
        if rank is not None and rank <= theta.k_max:
            score += float(theta.theta[i, rank - 1])
    return score


def merge(
    instance: EnsembleInstance, theta: ThetaMatrix, output_limit: int
) -> List[Tuple[PredictionKey, float]]:
    """Fuse the model lists into one ranking by decreasing score.

    Ties break on best rank across models, then the lowest model index holding
    that rank, then the key itself.
    """
    if output_limit <= 0:
        raise ArgumentError(f"output_limit must be positive, got {output_limit}")
    _check_order(instance, theta)
    k_max = theta.k_max
    scores: Dict[PredictionKey, float] = {}
    best: Dict[PredictionKey, Tuple[int, int]] = {}
    for i, output in enumerate(instance.outputs):
        row = theta.theta[i]
        for rank, key in enumerate(output.predictions[:k_max], start=1):
            scores[key] = scores.get(key, 0.0) + float(row[rank - 1])
            if key not in best or (rank, i) < best[key]:
                best[key] = (rank, i)
    ordered = sorted(scores, key=lambda key: (-scores[key], best[key][0], best[key][1], key))
    return [(key, scores[key]) for key in ordered[:output_limit]]


def merged_keys(instance: EnsembleInstance, theta: ThetaMatrix, output_limit: int) -> List[PredictionKey]:
    return [key for key, _ in merge(instance, theta, output_limit)]


def baseline_theta(
    kind: str,
    m: int,
    k_max: int,
    weights: Optional[Sequence[float]] = None,
    model_ids: Optional[Sequence[str]] = None,
) -> ThetaMatrix:
    """Hand-designed weighting schemes: linear (k_max + 1 - k), reciprocal (1 / k), weighted reciprocal (c_i / k)."""
    if m <= 0 or k_max <= 0:
        raise ArgumentError(f"m and k_max must be positive, got m={m}, k_max={k_max}")
    if model_ids is None:
        model_ids = [f"model_{i}" for i in range(m)]
    if len(model_ids) != m:
        raise ArgumentError(f"Expected {m} model ids, got {len(model_ids)}")
    k = np.arange(1, k_max + 1, dtype=float)
    if kind == "linear":
        row = k_max + 1 - k
        theta = np.tile(row, (m, 1))
    elif kind == "reciprocal":
        theta = np.tile(1.0 / k, (m, 1))
    elif kind == "weighted_reciprocal":
        if weights is None:
            raise ArgumentError("weighted_reciprocal requires per-model weights")
        c = np.asarray(weights, dtype=float)
        if c.shape != (m,):
            raise ArgumentError(f"Expected {m} weights, got {len(c)}")
        if not np.all(c > 0):
            raise ArgumentError(f"Weights must be positive, got {list(c)}")
        theta = c[:, None] / k[None, :]
    else:
        raise ArgumentError(f"Unknown baseline kind {kind!r}; expected one of {BASELINE_KINDS}")
    return ThetaMatrix(tuple(model_ids), theta)


def weights_from_top1(dataset: Sequence[EnsembleInstance]) -> List[float]:
    """c_i = 2 for the model with the best top-1 accuracy (first on ties), 1 for the rest."""
    if not dataset:
        raise ArgumentError("Cannot derive weights from an empty dataset")
    m = len(dataset[0].outputs)
    hits = np.zeros(m)
    for inst in dataset:
        for i, output in enumerate(inst.outputs):
            if output.predictions and output.predictions[0] == inst.ground_truth:
                hits[i] += 1
    weights = [1.0] * m
    weights[int(np.argmax(hits))] = 2.0
    return weights


def merge_all(
    dataset: Sequence[EnsembleInstance], theta: ThetaMatrix, output_limit: int
) -> Dict[str, List[PredictionKey]]:
    return {inst.input_id: merged_keys(inst, theta, output_limit) for inst in dataset}


def single_model_lists(dataset: Sequence[EnsembleInstance]) -> Dict[str, Dict[str, List[PredictionKey]]]:
    lists: Dict[str, Dict[str, List[PredictionKey]]] = {}
    for inst in dataset:
        for output in inst.outputs:
            lists.setdefault(output.model_id, {})[inst.input_id] = list(output.predictions)
    return lists


def truth_map(dataset: Sequence[EnsembleInstance]) -> Dict[str, PredictionKey]:
    return {inst.input_id: inst.ground_truth for inst in dataset if inst.ground_truth is not None}

import logging
from itertools import combinations
from typing import Iterable, Optional, Sequence

import pandas as pd

from src.core.errors import ArgumentError
from src.core.models import EnsembleInstance, ThetaMatrix, check_model_order
from src.core.schemas import TrainConfig
from src.services.metrics import DEFAULT_KS, topk_accuracy
from src.services.ranking import BASELINE_KINDS, baseline_theta, merge_all, truth_map, weights_from_top1
from src.services.theta_learner import ThetaLearner

logger = logging.getLogger(__name__)

STUDY_SCHEMES = ("learned", "unconstrained") + BASELINE_KINDS
STUDY_COLUMNS = ["model_a", "model_b", "k", "ensemble", "best_single", "gain"]


def _pair_theta(
    pair: Sequence[EnsembleInstance], scheme: str, k_max: int, cfg: TrainConfig, progress: bool
) -> ThetaMatrix:
    model_ids = pair[0].model_ids
    if scheme == "learned":
        return ThetaLearner(cfg).fit(pair, k_max, progress=progress).theta
    if scheme == "unconstrained":
        naive = cfg.model_copy(update={"parameterization": "unconstrained", "w_reg": 0.0})
        return ThetaLearner(naive).fit(pair, k_max, progress=progress).theta
    weights = weights_from_top1(pair) if scheme == "weighted_reciprocal" else None
    return baseline_theta(scheme, len(model_ids), k_max, weights, model_ids)


def pairwise_study(
    dataset: Sequence[EnsembleInstance],
    ks: Iterable[int] = DEFAULT_KS,
    scheme: str = "learned",
    cfg: Optional[TrainConfig] = None,
    k_max: int = 50,
    progress: bool = False,
) -> pd.DataFrame:
    """Ensemble every model pair and compare it with the better of its two members, per k."""
    if scheme not in STUDY_SCHEMES:
        raise ArgumentError(f"Unknown scheme {scheme!r}; expected one of {STUDY_SCHEMES}")
    if not dataset:
        raise ArgumentError("Cannot study an empty dataset")
    model_ids = check_model_order(dataset)
    if len(model_ids) < 2:
        raise ArgumentError(f"A pairwise study needs at least two models, got {len(model_ids)}")
    ks = sorted(set(ks))
    cfg = cfg or TrainConfig()
    truth = truth_map(dataset)
    limit = max(ks)

    rows = []
    for a, b in combinations(model_ids, 2):
        pair = [inst.select((a, b)) for inst in dataset]
        theta = _pair_theta(pair, scheme, k_max, cfg, progress)
        ensemble = topk_accuracy(merge_all(pair, theta, limit), truth, ks)
        singles = [
            topk_accuracy({inst.input_id: list(inst.outputs[i].predictions) for inst in pair}, truth, ks)
            for i in (0, 1)
        ]
        for k in ks:
            best = max(singles[0][k], singles[1][k])
            rows.append((a, b, k, ensemble[k], best, ensemble[k] - best))
        logger.info(f"✅ {a} + {b} ({scheme}): top-{ks[0]} gain {ensemble[ks[0]] - max(s[ks[0]] for s in singles):+.4f}")
    return pd.DataFrame(rows, columns=STUDY_COLUMNS)


def average_gain(study: pd.DataFrame) -> pd.DataFrame:
    """Mean gain over model pairs for each k."""
    return study.groupby("k", as_index=False)["gain"].mean()

"""Learning ensembling weights from validation predictions.

The weights theta (m x k_max) are parameterized through free parameters x so that
every row is positive, strictly decreasing and strictly convex:

    theta_i = flip(cumsum(cumsum(exp(x_i))))

and fitted by full-batch Adam on a pairwise sigmoid ranking loss (ground truth
against every other prediction of the same input) plus a regularizer keeping
the relative importance of two models smooth across ranks. The common scale of
theta is pinned (largest weight 1) from the first step on, so the annealed
temperature is measured against weights of a fixed size.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit
from tqdm import tqdm

from src.core.errors import ArgumentError, ConfigurationError, DataError
from src.core.models import EnsembleInstance, ThetaMatrix, check_model_order
from src.core.schemas import TrainConfig

logger = logging.getLogger(__name__)


@dataclass
class PairTable:
    """All surviving (r+, r-) pairs of a dataset as rank arrays.

    Ranks are 1-based; k_max + 1 marks a prediction absent from a model's top-k_max.
    Row p of pos_ranks/neg_ranks belongs to instance pair_instance[p].
    """

    model_ids: Tuple[str, ...]
    k_max: int
    instance_ids: Tuple[str, ...]
    pos_ranks: np.ndarray
    neg_ranks: np.ndarray
    pair_instance: np.ndarray
    n_candidate_pairs: int = 0

    @property
    def absent(self) -> int:
        return self.k_max + 1

    @property
    def n_instances(self) -> int:
        return len(self.instance_ids)

    @property
    def n_pairs(self) -> int:
        return int(self.pos_ranks.shape[0])

    @property
    def is_empty(self) -> bool:
        return self.n_pairs == 0


# --- Parameterization ---

def _theta_array(x: np.ndarray, parameterization: str = "constrained") -> Tuple[np.ndarray, np.ndarray]:
    """Return (theta, exp(x)); exp(x) is kept for the backward pass."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    e = np.exp(x)
    if parameterization == "unconstrained":
        return e, e
    return np.cumsum(np.cumsum(e, axis=1), axis=1)[:, ::-1], e


def _reverse_cumsum(a: np.ndarray) -> np.ndarray:
    return np.cumsum(a[:, ::-1], axis=1)[:, ::-1]


def _backprop(grad_theta: np.ndarray, e: np.ndarray, parameterization: str) -> np.ndarray:
    if parameterization == "unconstrained":
        return grad_theta * e
    # flip -> cumsum -> cumsum -> exp, in reverse
    g = grad_theta[:, ::-1]
    g = _reverse_cumsum(g)
    g = _reverse_cumsum(g)
    return g * e


def normalize_scale(x: np.ndarray, parameterization: str = "constrained") -> np.ndarray:
    """Shift x in place so the largest weight is 1.

    theta(x + c) = exp(c) * theta(x) for both parameterizations, and merged
    orderings do not depend on a common scale, so this only fixes the gauge.
    Keeping theta <= 1 bounds an Adam step in theta-space by about lr.
    """
    theta, _ = _theta_array(x, parameterization)
    x -= np.log(theta.max())
    return x


def param_to_theta(
    x: np.ndarray,
    model_ids: Optional[Sequence[str]] = None,
    parameterization: str = "constrained",
) -> ThetaMatrix:
    theta, _ = _theta_array(x, parameterization)
    if model_ids is None:
        model_ids = [f"model_{i}" for i in range(theta.shape[0])]
    return ThetaMatrix(tuple(model_ids), theta, constrained=parameterization == "constrained")


# --- Pair table ---

def _is_fixed_order(pos: np.ndarray, neg: np.ndarray) -> np.ndarray:
    """Pairs ordered the same way by every row-wise decreasing theta."""
    return np.all(pos <= neg, axis=1) | np.all(pos >= neg, axis=1)


def build_pair_table(
    dataset: Sequence[EnsembleInstance], k_max: int, skip_fixed: bool = True
) -> PairTable:
    if not dataset:
        raise ArgumentError("Cannot build a pair table from an empty dataset")
    if k_max <= 0:
        raise ArgumentError(f"k_max must be positive, got {k_max}")
    model_ids = check_model_order(dataset)
    absent = k_max + 1

    pos_rows: List[np.ndarray] = []
    neg_rows: List[np.ndarray] = []
    owners: List[int] = []
    for index, inst in enumerate(dataset):
        if inst.ground_truth is None:
            raise DataError(f"Input {inst.input_id!r} has no ground truth")
        rank_maps = [out.rank_map(k_max) for out in inst.outputs]
        r_pos = inst.ground_truth
        pos = np.array([rm.get(r_pos, absent) for rm in rank_maps], dtype=np.int64)
        negatives = []
        seen = {r_pos}
        for rm in rank_maps:
            for key in rm:
                if key not in seen:
                    seen.add(key)
                    negatives.append(key)
        if not negatives:
            continue
        neg = np.array([[rm.get(key, absent) for rm in rank_maps] for key in negatives], dtype=np.int64)
        pos_rows.append(np.broadcast_to(pos, neg.shape))
        neg_rows.append(neg)
        owners.append(np.full(len(negatives), index, dtype=np.int64))

    m = len(model_ids)
    if not neg_rows:
        return PairTable(model_ids, k_max, (), np.empty((0, m), np.int64), np.empty((0, m), np.int64),
                         np.empty(0, np.int64), 0)

    pos_all = np.concatenate(pos_rows)
    neg_all = np.concatenate(neg_rows)
    owner_all = np.concatenate(owners)
    n_candidates = len(owner_all)
    if skip_fixed:
        keep = ~_is_fixed_order(pos_all, neg_all)
        pos_all, neg_all, owner_all = pos_all[keep], neg_all[keep], owner_all[keep]

    kept_instances, pair_instance = np.unique(owner_all, return_inverse=True)
    instance_ids = tuple(dataset[i].input_id for i in kept_instances)
    logger.info(
        f"Pair table: {len(owner_all)} of {n_candidates} pairs kept across "
        f"{len(instance_ids)} of {len(dataset)} inputs"
    )
    return PairTable(model_ids, k_max, instance_ids, np.ascontiguousarray(pos_all),
                     np.ascontiguousarray(neg_all), pair_instance.astype(np.int64), n_candidates)


# --- Losses ---

def _padded(theta: np.ndarray) -> np.ndarray:
    # Trailing zero column scores absent ranks
    return np.hstack([theta, np.zeros((theta.shape[0], 1))])


def _pair_scores(theta: np.ndarray, ranks: np.ndarray) -> np.ndarray:
    padded = _padded(theta)
    m = theta.shape[0]
    return padded[np.arange(m)[None, :], ranks - 1].sum(axis=1)


def _check_table(theta: np.ndarray, table: PairTable) -> None:
    if theta.shape != (len(table.model_ids), table.k_max):
        raise ConfigurationError(
            f"Theta shape {theta.shape} does not match pair table ({len(table.model_ids)}, {table.k_max})"
        )


def _rank_loss_grad(theta: np.ndarray, table: PairTable, T: float, epsilon_margin: float,
                    with_grad: bool = True) -> Tuple[float, Optional[np.ndarray]]:
    if T <= 0:
        raise ArgumentError(f"Temperature must be positive, got {T}")
    m, k_max = theta.shape
    if table.is_empty:
        return 0.0, np.zeros_like(theta)
    z = (_pair_scores(theta, table.neg_ranks) - _pair_scores(theta, table.pos_ranks) + epsilon_margin) / T
    per_pair = expit(z)
    loss = float(per_pair.sum() / table.n_instances)
    if not with_grad:
        return loss, None
    # d loss / d score(r-) for every pair; d/d score(r+) is its negation
    dz = per_pair * (1.0 - per_pair) / (T * table.n_instances)
    width = k_max + 1
    offsets = np.arange(m)[None, :] * width
    weights = np.broadcast_to(dz[:, None], table.neg_ranks.shape).ravel()
    grad = np.bincount((offsets + table.neg_ranks - 1).ravel(), weights=weights, minlength=m * width)
    grad -= np.bincount((offsets + table.pos_ranks - 1).ravel(), weights=weights, minlength=m * width)
    return loss, grad.reshape(m, width)[:, :k_max]


def _reg_loss_grad(theta: np.ndarray) -> Tuple[float, np.ndarray]:
    m, k_max = theta.shape
    if m < 2 or k_max < 2:
        return 0.0, np.zeros_like(theta)
    scale = 1.0 / (m * (m - 1) * (k_max - 1))
    ratio = theta[:, None, :] / theta[None, :, :]  # ratio[i, j, k] = theta[i, k] / theta[j, k]
    diff = ratio[:, :, :-1] - ratio[:, :, 1:]
    loss = float(scale * np.abs(diff).sum())
    s = scale * np.sign(diff)  # sign(0) = 0
    g_ratio = np.zeros_like(ratio)
    g_ratio[:, :, :-1] += s
    g_ratio[:, :, 1:] -= s
    grad = (g_ratio / theta[None, :, :]).sum(axis=1) - (g_ratio * ratio / theta[None, :, :]).sum(axis=0)
    return loss, grad


def rank_loss(theta: ThetaMatrix, table: PairTable, T: float, epsilon_margin: float = 1e-4) -> float:
    _check_table(theta.theta, table)
    if theta.model_ids != table.model_ids:
        raise ConfigurationError(f"Theta model order {list(theta.model_ids)} != table {list(table.model_ids)}")
    loss, _ = _rank_loss_grad(theta.theta, table, T, epsilon_margin, with_grad=False)
    return loss


def reg_loss(theta: ThetaMatrix) -> float:
    loss, _ = _reg_loss_grad(theta.theta)
    return loss


def total_loss_grad(x: np.ndarray, table: PairTable, cfg: TrainConfig, T: float) -> Tuple[float, np.ndarray]:
    """Loss and its exact gradient with respect to the free parameters x."""
    theta, e = _theta_array(x, cfg.parameterization)
    _check_table(theta, table)
    loss, grad_theta = _rank_loss_grad(theta, table, T, cfg.epsilon_margin)
    if cfg.w_reg > 0:
        reg, grad_reg = _reg_loss_grad(theta)
        loss += cfg.w_reg * reg
        grad_theta = grad_theta + cfg.w_reg * grad_reg
    return loss, _backprop(grad_theta, e, cfg.parameterization)


# --- Optimizer ---

class Adam:
    def __init__(self, lr: float = 0.1, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m: Optional[np.ndarray] = None
        self.v: Optional[np.ndarray] = None
        self.t = 0

    def step(self, params: np.ndarray, grads: np.ndarray) -> None:
        """In-place update of params."""
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grads
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * (grads * grads)
        params -= (self.lr / bc1) * self.m / (np.sqrt(self.v / bc2) + self.epsilon)


def schedule(step: int, cfg: TrainConfig) -> Tuple[float, float]:
    """(learning rate, temperature) at a step."""
    if cfg.schedule_kind == "linear":
        factor = 1.0 - step / cfg.steps
    else:
        factor = cfg.decay_factor ** (step // cfg.decay_every)
    return cfg.lr0 * factor, max(cfg.T0 * factor, cfg.min_temperature)


# --- Fitting ---

@dataclass
class FitResult:
    theta: ThetaMatrix
    history: pd.DataFrame
    status: str = "ok"
    n_pairs: int = 0
    n_instances: int = 0
    x: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def warning(self) -> Optional[str]:
        if self.status == "empty_pair_table":
            return "No informative (r+, r-) pairs survived filtering; theta left at its initialization"
        return None


class ThetaLearner:
    def __init__(self, cfg: Optional[TrainConfig] = None):
        self.cfg = cfg or TrainConfig()

    def fit(
        self,
        dataset: Sequence[EnsembleInstance],
        k_max: int,
        init: Optional[np.ndarray] = None,
        progress: bool = False,
    ) -> FitResult:
        cfg = self.cfg
        table = build_pair_table(dataset, k_max, skip_fixed=cfg.parameterization == "constrained")
        m = len(table.model_ids)
        if init is None:
            x = np.zeros((m, k_max))
        else:
            x = np.array(init, dtype=float)
            if x.shape != (m, k_max) or not np.all(np.isfinite(x)):
                raise ArgumentError(f"init must be a finite ({m}, {k_max}) array, got shape {x.shape}")

        columns = ["step", "lr", "T", "loss"]
        if table.is_empty:
            result = FitResult(param_to_theta(x, table.model_ids, cfg.parameterization),
                               pd.DataFrame(columns=columns), "empty_pair_table", 0, 0, x)
            logger.warning(f"⚠️ {result.warning}")
            return result

        normalize_scale(x, cfg.parameterization)
        optimizer = Adam(cfg.lr0, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
        rows = []
        lr, T = schedule(0, cfg)
        for step in tqdm(range(cfg.steps), desc="fit", disable=not progress):
            lr, T = schedule(step, cfg)
            loss, grad = total_loss_grad(x, table, cfg, T)
            rows.append((step, lr, T, loss))
            if step % 100 == 0:
                logger.debug(f"step={step} lr={lr:.6g} T={T:.6g} loss={loss:.6f}")
            optimizer.lr = lr
            optimizer.step(x, grad)
            normalize_scale(x, cfg.parameterization)
        final_loss, _ = total_loss_grad(x, table, cfg, T)
        rows.append((cfg.steps, lr, T, final_loss))

        theta = param_to_theta(x, table.model_ids, cfg.parameterization)
        logger.info(f"✅ Fitted theta over {table.n_pairs} pairs; final loss {final_loss:.6f}")
        return FitResult(theta, pd.DataFrame(rows, columns=columns), "ok", table.n_pairs, table.n_instances, x)


def fit(
    dataset: Sequence[EnsembleInstance],
    k_max: int,
    cfg: Optional[TrainConfig] = None,
    init: Optional[np.ndarray] = None,
) -> ThetaMatrix:
    return ThetaLearner(cfg).fit(dataset, k_max, init).theta

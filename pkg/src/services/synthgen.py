import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Sequence, Tuple, Union

import numpy as np

from src.core.errors import ArgumentError
from src.core.models import EnsembleInstance, ModelOutput
from src.core.schemas import SynthConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SyntheticDataset(Sequence[EnsembleInstance]):
    """Generated instances plus the parameters that produced them."""

    instances: Tuple[EnsembleInstance, ...]
    params: Dict[str, Any] = field(default_factory=dict)

    def __getitem__(self, index: Union[int, slice]):
        return self.instances[index]

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self) -> Iterator[EnsembleInstance]:
        return iter(self.instances)


def _input_id(n: int) -> str:
    return f"syn{n:06d}"


def _ranked_list(
    input_id: str, truth: str, slot: int, k_max: int, pool_size: int, rng: np.random.Generator
) -> Tuple[str, ...]:
    """k_max keys from the shared distractor pool, with the truth at 0-based slot (slot == k_max: absent)."""
    n_distractors = k_max if slot >= k_max else k_max - 1
    picks = rng.choice(pool_size, size=n_distractors, replace=False)
    keys = [f"{input_id}:d{j}" for j in picks]
    if slot < k_max:
        keys.insert(slot, truth)
    return tuple(keys)


def gen_dataset(cfg: SynthConfig) -> SyntheticDataset:
    """Draw n_instances ensembles; truth placement per model follows its distribution p_i.

    Placements come from inverse-CDF sampling of one uniform per model. With
    probability rho a model reuses the instance's shared uniform, otherwise it
    draws its own, so rho = 1 couples the models completely and rho = 0 makes
    them independent.
    """
    if cfg.k_max > cfg.pool_size:
        raise ArgumentError(f"k_max={cfg.k_max} exceeds the distractor pool size {cfg.pool_size}")
    rng = np.random.default_rng(cfg.seed)
    cdfs = np.cumsum(np.asarray(cfg.placement, dtype=float), axis=1)
    model_ids = [f"model_{i}" for i in range(cfg.m)]

    instances: List[EnsembleInstance] = []
    for n in range(cfg.n_instances):
        input_id = _input_id(n)
        truth = f"{input_id}:gt"
        shared = rng.random()
        outputs = []
        for i in range(cfg.m):
            coupled = rng.random() < cfg.rho
            u = shared if coupled else rng.random()
            slot = min(int(np.searchsorted(cdfs[i], u, side="right")), cfg.k_max)
            outputs.append(ModelOutput(model_ids[i], _ranked_list(input_id, truth, slot, cfg.k_max, cfg.pool_size, rng)))
        instances.append(EnsembleInstance(input_id, truth, tuple(outputs)))

    logger.info(f"✅ Generated {cfg.n_instances} synthetic instances for {cfg.m} models")
    return SyntheticDataset(tuple(instances), {"generator": "gen_dataset", **cfg.model_dump()})


def complementary_fixture(seed: int = 0, n_instances: int = 20_000) -> SyntheticDataset:
    """Two models whose hits are anti-correlated through one latent uniform u per instance.

    Model A holds the truth at rank 1 when u < 0.5. Model B holds it at a
    uniform rank in 1..5 when 0.4 <= u < 0.9. Each model alone is right about
    half the time, while together they cover 90% of the instances.
    """
    k_max, pool_size = 10, 50
    a_window, b_window, b_ranks = (0.0, 0.5), (0.4, 0.9), 5
    rng = np.random.default_rng(seed)

    instances: List[EnsembleInstance] = []
    for n in range(n_instances):
        input_id = _input_id(n)
        truth = f"{input_id}:gt"
        u = rng.random()
        a_slot = 0 if a_window[0] <= u < a_window[1] else k_max
        b_slot = int(rng.integers(0, b_ranks)) if b_window[0] <= u < b_window[1] else k_max
        outputs = (
            ModelOutput("model_a", _ranked_list(input_id, truth, a_slot, k_max, pool_size, rng)),
            ModelOutput("model_b", _ranked_list(input_id, truth, b_slot, k_max, pool_size, rng)),
        )
        instances.append(EnsembleInstance(input_id, truth, outputs))

    params = {
        "generator": "complementary_fixture",
        "seed": seed,
        "n_instances": n_instances,
        "k_max": k_max,
        "pool_size": pool_size,
        "model_a": {"present_if_u_in": list(a_window), "rank": 1},
        "model_b": {"present_if_u_in": list(b_window), "ranks": list(range(1, b_ranks + 1))},
        "union_coverage": b_window[1] - a_window[0],
    }
    logger.info(f"✅ Generated complementary fixture with {n_instances} instances")
    return SyntheticDataset(tuple(instances), params)

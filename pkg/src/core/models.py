from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from src.core.errors import ConfigurationError, DataError

# Opaque, pre-canonicalized prediction identity (e.g. a canonical reactant-set string)
PredictionKey = str


def normalize_key(raw: str) -> PredictionKey:
    if not isinstance(raw, str):
        raise DataError(f"Prediction key must be text, got {type(raw).__name__}")
    key = raw.strip()
    if not key:
        raise DataError("Prediction key must be non-empty")
    return key


@dataclass(frozen=True)
class ModelOutput:
    """One model's ranked, duplicate-free predictions for one input. Rank of predictions[j] is j + 1."""

    model_id: str
    predictions: Tuple[PredictionKey, ...]

    def __post_init__(self):
        keys = tuple(normalize_key(p) for p in self.predictions)
        seen = set()
        for key in keys:
            if key in seen:
                raise DataError(f"Duplicate prediction {key!r} in output of model {self.model_id!r}")
            seen.add(key)
        object.__setattr__(self, "predictions", keys)

    def rank_of(self, key: PredictionKey) -> Optional[int]:
        try:
            return self.predictions.index(key) + 1
        except ValueError:
            return None

    def rank_map(self, k_max: Optional[int] = None) -> Dict[PredictionKey, int]:
        preds = self.predictions if k_max is None else self.predictions[:k_max]
        return {key: rank for rank, key in enumerate(preds, start=1)}


@dataclass(frozen=True)
class EnsembleInstance:
    input_id: str
    ground_truth: Optional[PredictionKey]
    outputs: Tuple[ModelOutput, ...]

    def __post_init__(self):
        object.__setattr__(self, "outputs", tuple(self.outputs))
        if self.ground_truth is not None:
            object.__setattr__(self, "ground_truth", normalize_key(self.ground_truth))
        ids = self.model_ids
        if len(set(ids)) != len(ids):
            raise DataError(f"Input {self.input_id!r} has more than one output for the same model")

    @property
    def model_ids(self) -> Tuple[str, ...]:
        return tuple(o.model_id for o in self.outputs)

    def select(self, model_ids: Sequence[str]) -> "EnsembleInstance":
        by_id = {o.model_id: o for o in self.outputs}
        missing = [m for m in model_ids if m not in by_id]
        if missing:
            raise ConfigurationError(f"Input {self.input_id!r} has no output for model(s) {missing}")
        return EnsembleInstance(self.input_id, self.ground_truth, tuple(by_id[m] for m in model_ids))


def check_model_order(instances: Iterable[EnsembleInstance]) -> Tuple[str, ...]:
    """Return the shared model order, raising when instances disagree."""
    order: Optional[Tuple[str, ...]] = None
    for inst in instances:
        if order is None:
            order = inst.model_ids
        elif inst.model_ids != order:
            raise ConfigurationError(
                f"Input {inst.input_id!r} has model order {list(inst.model_ids)}, expected {list(order)}"
            )
    return order or ()


@dataclass(frozen=True, eq=False)
class ThetaMatrix:
    """m x k_max positive weights. Constrained matrices are row-wise strictly decreasing
    and (non-strictly) convex; unconstrained ones are only required to be positive."""

    model_ids: Tuple[str, ...]
    theta: np.ndarray
    constrained: bool = True

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        object.__setattr__(self, "model_ids", tuple(self.model_ids))
        if theta.ndim != 2 or theta.shape[0] != len(self.model_ids) or theta.shape[1] < 1:
            raise ConfigurationError(
                f"Theta must have shape ({len(self.model_ids)}, k_max), got {theta.shape}"
            )
        if len(set(self.model_ids)) != len(self.model_ids):
            raise ConfigurationError(f"Duplicate model ids in theta: {list(self.model_ids)}")
        if not np.all(np.isfinite(theta)) or not np.all(theta > 0):
            raise ConfigurationError("Theta entries must be finite and strictly positive")
        if self.constrained and not is_decreasing_convex(theta):
            raise ConfigurationError("Theta rows must be strictly decreasing and convex")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @property
    def k_max(self) -> int:
        return self.theta.shape[1]

    @property
    def m(self) -> int:
        return self.theta.shape[0]

    def align(self, model_ids: Sequence[str]) -> "ThetaMatrix":
        """Reorder rows to the given model order."""
        model_ids = tuple(model_ids)
        if model_ids == self.model_ids:
            return self
        index = {mid: i for i, mid in enumerate(self.model_ids)}
        missing = [mid for mid in model_ids if mid not in index]
        if missing:
            raise ConfigurationError(f"Theta has no weights for model(s) {missing}")
        rows = [index[mid] for mid in model_ids]
        return ThetaMatrix(model_ids, self.theta[rows], self.constrained)

    def to_checkpoint(self) -> Dict:
        return {
            "model_ids": list(self.model_ids),
            "k_max": self.k_max,
            "theta": [[float(v) for v in row] for row in self.theta],
            "constrained": self.constrained,
        }

    @classmethod
    def from_checkpoint(cls, data: Dict) -> "ThetaMatrix":
        theta = np.asarray(data["theta"], dtype=float)
        k_max = int(data["k_max"])
        if theta.ndim != 2 or theta.shape[1] != k_max:
            raise ConfigurationError(f"Checkpoint k_max={k_max} does not match theta shape {theta.shape}")
        return cls(tuple(data["model_ids"]), theta, bool(data.get("constrained", True)))


def is_decreasing_convex(theta: np.ndarray, strict_convexity: bool = False) -> bool:
    """Row-wise strict decrease plus convexity (non-strict unless asked, so the linear scheme passes)."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    if not np.all(theta > 0):
        return False
    diffs = theta[:, :-1] - theta[:, 1:]
    if not np.all(diffs > 0):
        return False
    if theta.shape[1] < 3:
        return True
    curvature = diffs[:, :-1] - diffs[:, 1:]
    if strict_convexity:
        return bool(np.all(curvature > 0))
    tol = 1e-9 * np.max(np.abs(theta), axis=1, keepdims=True)
    return bool(np.all(curvature >= -tol))


@dataclass(frozen=True)
class CountFingerprint:
    id: str
    dim: int
    counts: Dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.dim <= 0:
            raise DataError(f"Fingerprint {self.id!r}: dim must be positive")
        counts = {int(i): int(c) for i, c in self.counts.items() if int(c) != 0}
        for index, count in counts.items():
            if not 0 <= index < self.dim:
                raise DataError(f"Fingerprint {self.id!r}: index {index} outside [0, {self.dim})")
            if count < 0:
                raise DataError(f"Fingerprint {self.id!r}: negative count at index {index}")
        if not counts:
            raise DataError(f"Fingerprint {self.id!r} is all-zero")
        object.__setattr__(self, "counts", counts)

    @cached_property
    def squared_norm(self) -> int:
        return sum(c * c for c in self.counts.values())


@dataclass(frozen=True)
class ComparisonRecord:
    source_a: str
    source_b: str
    winner: str  # "a" | "b"

    def __post_init__(self):
        if self.source_a == self.source_b:
            raise DataError(f"Comparison of {self.source_a!r} with itself")
        if self.winner not in ("a", "b"):
            raise DataError(f"Winner must be 'a' or 'b', got {self.winner!r}")

    @property
    def winner_id(self) -> str:
        return self.source_a if self.winner == "a" else self.source_b

    @property
    def loser_id(self) -> str:
        return self.source_b if self.winner == "a" else self.source_a

    def reversed(self) -> "ComparisonRecord":
        return ComparisonRecord(self.source_a, self.source_b, "b" if self.winner == "a" else "a")


@dataclass(frozen=True)
class TokenSequence:
    tokens: Tuple[str, ...]
    source: str

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if "".join(self.tokens) != self.source:
            raise DataError("Tokens do not reproduce the source text")

    def __str__(self) -> str:
        return " ".join(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Ratings:
    scores: Dict[str, float]
    elo: Dict[str, float]
    anchor: str

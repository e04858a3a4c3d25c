from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Optional, List, Dict, Any, Literal


# --- Wire records (JSON Lines) ---

class PredictionRecord(BaseModel):
    input_id: str
    model_id: str
    predictions: List[str]


class GroundTruthRecord(BaseModel):
    input_id: str
    ground_truth: str


class MergedRecord(BaseModel):
    input_id: str
    ranked: List[str]
    scores: Optional[List[float]] = None


class FingerprintRecord(BaseModel):
    id: str
    dim: int
    counts: Dict[str, int]


class ComparisonSchema(BaseModel):
    a: str
    b: str
    winner: Literal["a", "b"]


class ThetaCheckpoint(BaseModel):
    model_ids: List[str]
    k_max: int = Field(gt=0)
    theta: List[List[float]]
    constrained: bool = True


# --- Configuration ---

class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    steps: int = 1000
    lr0: float = 0.1
    T0: float = 0.1
    decay_factor: float = 0.9
    decay_every: int = 25
    epsilon_margin: float = 1e-4
    w_reg: float = 0.2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    schedule_kind: Literal["geometric", "linear"] = "geometric"
    parameterization: Literal["constrained", "unconstrained"] = "constrained"
    min_temperature: float = 1e-6

    @model_validator(mode="after")
    def _check_ranges(self):
        if self.steps <= 0:
            raise ValueError("steps must be positive")
        if self.lr0 <= 0 or self.T0 <= 0:
            raise ValueError("lr0 and T0 must be positive")
        if not 0 < self.decay_factor < 1:
            raise ValueError("decay_factor must lie in (0, 1)")
        if self.decay_every <= 0:
            raise ValueError("decay_every must be positive")
        if self.w_reg < 0:
            raise ValueError("w_reg must be non-negative")
        if self.min_temperature <= 0:
            raise ValueError("min_temperature must be positive")
        return self


class SynthConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    m: int = Field(gt=0)
    k_max: int = Field(gt=0)
    n_instances: int = Field(gt=0)
    # placement[i][k] = P(truth at rank k + 1) for k < k_max; placement[i][k_max] = P(absent)
    placement: List[List[float]]
    rho: float = 0.0
    pool_size: Optional[int] = None
    seed: int = 0

    @field_validator("rho")
    @classmethod
    def _check_rho(cls, v: float) -> float:
        if not 0.0 <= v <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        return v

    @model_validator(mode="after")
    def _check_placement(self):
        if len(self.placement) != self.m:
            raise ValueError(f"placement needs one distribution per model ({self.m}), got {len(self.placement)}")
        for i, p in enumerate(self.placement):
            if len(p) != self.k_max + 1:
                raise ValueError(f"placement[{i}] must have k_max + 1 = {self.k_max + 1} entries")
            if any(v < 0 for v in p):
                raise ValueError(f"placement[{i}] has negative probabilities")
            if abs(sum(p) - 1.0) > 1e-9:
                raise ValueError(f"placement[{i}] sums to {sum(p)}, expected 1")
        if self.pool_size is None:
            self.pool_size = 5 * self.k_max
        return self


# --- Reports ---

class BucketRow(BaseModel):
    lower: float
    upper: Optional[float] = None  # None = open-ended
    count: int
    accuracy: Optional[float] = None


class ModelScore(BaseModel):
    model_id: str
    accuracy: Dict[int, float]
    mrr: float


class EvaluationReport(BaseModel):
    accuracy: Dict[int, float]
    mrr: float
    n_instances: int
    bucket_k: Optional[int] = None
    buckets: Optional[List[BucketRow]] = None
    per_model: Optional[List[ModelScore]] = None

    @model_validator(mode="after")
    def _check_consistency(self):
        ks = sorted(self.accuracy)
        for lo, hi in zip(ks, ks[1:]):
            if self.accuracy[lo] > self.accuracy[hi] + 1e-12:
                raise ValueError("accuracy must be non-decreasing in k")
        if 1 in self.accuracy and self.mrr + 1e-12 < self.accuracy[1]:
            raise ValueError("MRR must be at least the top-1 accuracy")
        return self


class RunManifest(BaseModel):
    subcommand: str
    version: str
    seed: Optional[int] = None
    config: Dict[str, Any]
    inputs: Dict[str, str]  # path -> sha256
    extra: Dict[str, Any] = {}

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Tuple, Type, TypeVar, Union

import pandas as pd
from pydantic import BaseModel, ValidationError

from src.core.errors import ConfigurationError, DataError
from src.core.models import (
    ComparisonRecord,
    CountFingerprint,
    EnsembleInstance,
    ModelOutput,
    ThetaMatrix,
    normalize_key,
)
from src.core.schemas import (
    ComparisonSchema,
    FingerprintRecord,
    GroundTruthRecord,
    MergedRecord,
    PredictionRecord,
    RunManifest,
    ThetaCheckpoint,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
S = TypeVar("S", bound=BaseModel)


def iter_jsonl(path: PathLike, schema: Type[S]) -> Iterator[Tuple[int, S]]:
    """Stream validated records; every parse or schema failure names the line."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"File not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{line_no}: malformed JSON ({e.msg})")
            try:
                yield line_no, schema.model_validate(payload)
            except ValidationError as e:
                first = e.errors()[0]
                where = ".".join(str(p) for p in first["loc"]) or "record"
                raise DataError(f"{path}:{line_no}: invalid {where}: {first['msg']}")


def _dump(payload: Any) -> str:
    return json.dumps(payload, ensure_ascii=False)


def write_jsonl(path: PathLike, records: Iterable[Union[BaseModel, Dict]]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            if isinstance(record, BaseModel):
                record = record.model_dump(exclude_none=True)
            f.write(_dump(record) + "\n")
            n += 1
    return n


def write_json(path: PathLike, payload: Any) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(payload, indent=2, ensure_ascii=False) + "\n")


def read_json(path: PathLike) -> Any:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"File not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"{path}:{e.lineno}: malformed JSON ({e.msg})")


# --- Predictions and ground truth ---

def read_ground_truth(path: PathLike) -> Dict[str, str]:
    truth: Dict[str, str] = {}
    for line_no, rec in iter_jsonl(path, GroundTruthRecord):
        if rec.input_id in truth:
            raise DataError(f"{path}:{line_no}: duplicate ground truth for input {rec.input_id!r}")
        try:
            truth[rec.input_id] = normalize_key(rec.ground_truth)
        except DataError as e:
            raise DataError(f"{path}:{line_no}: {e.detail}")
    return truth


def iter_instances(
    predictions_path: PathLike,
    ground_truth: Optional[Dict[str, str]] = None,
    k_max: Optional[int] = None,
    require_truth: bool = False,
) -> Iterator[EnsembleInstance]:
    """Group contiguous per-model records into instances, streaming.

    Model order is the record order of the first input and must repeat for every input.
    """
    seen_inputs = set()
    order: Optional[Tuple[str, ...]] = None
    current_id: Optional[str] = None
    current: List[ModelOutput] = []
    first_line = 0

    def flush() -> EnsembleInstance:
        nonlocal order
        truth = None
        if ground_truth is not None:
            truth = ground_truth.get(current_id)
        if truth is None and require_truth:
            raise DataError(f"{predictions_path}:{first_line}: no ground truth for input {current_id!r}")
        try:
            instance = EnsembleInstance(current_id, truth, tuple(current))
        except DataError as e:
            raise DataError(f"{predictions_path}:{first_line}: {e.detail}")
        if order is None:
            order = instance.model_ids
        elif instance.model_ids != order:
            raise ConfigurationError(
                f"{predictions_path}:{first_line}: input {current_id!r} has model order "
                f"{list(instance.model_ids)}, expected {list(order)}"
            )
        return instance

    for line_no, rec in iter_jsonl(predictions_path, PredictionRecord):
        if rec.input_id != current_id:
            if current_id is not None:
                yield flush()
            if rec.input_id in seen_inputs:
                raise DataError(
                    f"{predictions_path}:{line_no}: records for input {rec.input_id!r} are not contiguous"
                )
            seen_inputs.add(rec.input_id)
            current_id, current, first_line = rec.input_id, [], line_no
        preds = rec.predictions if k_max is None else rec.predictions[:k_max]
        try:
            current.append(ModelOutput(rec.model_id, tuple(preds)))
        except DataError as e:
            raise DataError(f"{predictions_path}:{line_no}: {e.detail}")
    if current_id is not None:
        yield flush()


def load_instances(
    predictions_path: PathLike,
    ground_truth_path: Optional[PathLike] = None,
    k_max: Optional[int] = None,
) -> List[EnsembleInstance]:
    truth = read_ground_truth(ground_truth_path) if ground_truth_path is not None else None
    return list(iter_instances(predictions_path, truth, k_max, require_truth=truth is not None))


def write_instances(directory: PathLike, instances: Iterable[EnsembleInstance]) -> Tuple[Path, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    pred_path = directory / "predictions.jsonl"
    truth_path = directory / "ground_truth.jsonl"
    with open(pred_path, "w", encoding="utf-8") as pf, open(truth_path, "w", encoding="utf-8") as tf:
        for inst in instances:
            for out in inst.outputs:
                pf.write(_dump({"input_id": inst.input_id, "model_id": out.model_id,
                                "predictions": list(out.predictions)}) + "\n")
            if inst.ground_truth is not None:
                tf.write(_dump({"input_id": inst.input_id, "ground_truth": inst.ground_truth}) + "\n")
    return pred_path, truth_path


# --- Theta checkpoints ---

def read_theta(path: PathLike) -> ThetaMatrix:
    try:
        checkpoint = ThetaCheckpoint.model_validate(read_json(path))
    except ValidationError as e:
        raise DataError(f"{path}: invalid theta checkpoint ({e.errors()[0]['msg']})")
    return ThetaMatrix.from_checkpoint(checkpoint.model_dump())


def write_theta(path: PathLike, theta: ThetaMatrix) -> None:
    write_json(path, theta.to_checkpoint())


# --- Merged outputs ---

def read_merged(path: PathLike) -> Dict[str, List[str]]:
    merged: Dict[str, List[str]] = {}
    for line_no, rec in iter_jsonl(path, MergedRecord):
        if rec.input_id in merged:
            raise DataError(f"{path}:{line_no}: duplicate merged record for input {rec.input_id!r}")
        merged[rec.input_id] = [k.strip() for k in rec.ranked]
    return merged


# --- Fingerprints and comparisons ---

def read_fingerprints(path: PathLike) -> List[CountFingerprint]:
    fingerprints = []
    ids = set()
    for line_no, rec in iter_jsonl(path, FingerprintRecord):
        if rec.id in ids:
            raise DataError(f"{path}:{line_no}: duplicate fingerprint id {rec.id!r}")
        ids.add(rec.id)
        try:
            counts = {int(index): count for index, count in rec.counts.items()}
            fingerprints.append(CountFingerprint(rec.id, rec.dim, counts))
        except ValueError as e:
            detail = e.detail if isinstance(e, DataError) else str(e)
            raise DataError(f"{path}:{line_no}: {detail}")
    return fingerprints


def read_comparisons(path: PathLike) -> List[ComparisonRecord]:
    records = []
    for line_no, rec in iter_jsonl(path, ComparisonSchema):
        try:
            records.append(ComparisonRecord(rec.a, rec.b, rec.winner))
        except DataError as e:
            raise DataError(f"{path}:{line_no}: {e.detail}")
    return records


# --- CSV ---

def read_metadata_csv(path: PathLike) -> Dict[str, float]:
    """Per-instance scalar metadata: columns input_id,value."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"File not found: {path}")
    df = pd.read_csv(path, dtype={"input_id": str})
    missing = {"input_id", "value"} - set(df.columns)
    if missing:
        raise DataError(f"{path}: missing column(s) {sorted(missing)}")
    if df["input_id"].duplicated().any():
        dup = df.loc[df["input_id"].duplicated(), "input_id"].iloc[0]
        raise DataError(f"{path}: duplicate metadata for input {dup!r}")
    values = pd.to_numeric(df["value"], errors="coerce")
    if values.isna().any():
        bad = df.loc[values.isna(), "input_id"].iloc[0]
        raise DataError(f"{path}: non-numeric value for input {bad!r}")
    return dict(zip(df["input_id"], values.astype(float)))


def write_csv(path: PathLike, df: pd.DataFrame) -> None:
    df.to_csv(path, index=False)


# --- Manifests ---

def file_digest(path: PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest_path_for(output: PathLike) -> Path:
    output = Path(output)
    if output.is_dir():
        return output / "manifest.json"
    return output.with_name(output.name + ".manifest.json")


def write_manifest(output: PathLike, manifest: RunManifest) -> Path:
    path = manifest_path_for(output)
    write_json(path, manifest.model_dump())
    logger.debug(f"Manifest written to {path}")
    return path

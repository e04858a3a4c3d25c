import sys
from pathlib import Path

# Add project root to path for imports
sys.path.append(str(Path(__file__).parent.parent))

import numpy as np
import pytest

from src.core.config import get_settings, load_config_file
from src.core.errors import ConfigurationError, DataError
from src.core.models import (
    ComparisonRecord,
    CountFingerprint,
    EnsembleInstance,
    ModelOutput,
    ThetaMatrix,
    TokenSequence,
    check_model_order,
    is_decreasing_convex,
)


def test_prediction_keys_are_trimmed():
    out = ModelOutput("A", (" r1 ", "r2"))
    assert out.predictions == ("r1", "r2")
    assert out.rank_of("r2") == 2
    assert out.rank_of("r9") is None


def test_duplicate_predictions_are_rejected():
    with pytest.raises(DataError):
        ModelOutput("A", ("r1", "r2", " r1"))


def test_empty_key_is_rejected():
    with pytest.raises(DataError):
        ModelOutput("A", ("r1", "  "))


def test_instance_select_reorders_outputs():
    inst = EnsembleInstance("p", "r1", (ModelOutput("A", ("r1",)), ModelOutput("B", ("r2",))))
    assert inst.select(["B", "A"]).model_ids == ("B", "A")
    with pytest.raises(ConfigurationError):
        inst.select(["C"])


def test_check_model_order():
    a = EnsembleInstance("p1", None, (ModelOutput("A", ("x",)), ModelOutput("B", ("y",))))
    b = EnsembleInstance("p2", None, (ModelOutput("B", ("x",)), ModelOutput("A", ("y",))))
    assert check_model_order([a, a]) == ("A", "B")
    with pytest.raises(ConfigurationError):
        check_model_order([a, b])


def test_theta_invariants_are_enforced():
    with pytest.raises(ConfigurationError):
        ThetaMatrix(("A",), np.array([[1.0, 2.0, 0.5]]))  # not decreasing
    with pytest.raises(ConfigurationError):
        ThetaMatrix(("A",), np.array([[3.0, 2.5, 0.5]]))  # concave
    with pytest.raises(ConfigurationError):
        ThetaMatrix(("A",), np.array([[1.0, 0.0]]))
    with pytest.raises(ConfigurationError):
        ThetaMatrix(("A", "B"), np.array([[2.0, 1.0]]))


def test_unconstrained_theta_only_needs_positivity():
    theta = ThetaMatrix(("A",), np.array([[1.0, 2.0, 0.5]]), constrained=False)
    assert theta.k_max == 3


def test_theta_is_read_only():
    theta = ThetaMatrix(("A",), np.array([[3.0, 2.0, 1.0]]))
    with pytest.raises(ValueError):
        theta.theta[0, 0] = 10.0


def test_theta_align_and_checkpoint():
    theta = ThetaMatrix(("A", "B"), np.array([[6.0, 3.0, 1.0], [3.0, 2.0, 1.0]]))
    aligned = theta.align(["B", "A"])
    np.testing.assert_array_equal(aligned.theta[0], [3.0, 2.0, 1.0])
    with pytest.raises(ConfigurationError, match="C"):
        theta.align(["A", "C"])
    restored = ThetaMatrix.from_checkpoint(theta.to_checkpoint())
    assert restored.model_ids == theta.model_ids
    np.testing.assert_array_equal(restored.theta, theta.theta)


def test_linear_rows_count_as_convex():
    assert is_decreasing_convex(np.array([[5.0, 4.0, 3.0, 2.0, 1.0]]))
    assert not is_decreasing_convex(np.array([[5.0, 4.0, 3.0, 2.0, 1.0]]), strict_convexity=True)


def test_fingerprint_validation():
    with pytest.raises(DataError):
        CountFingerprint("z", 8, {})
    with pytest.raises(DataError):
        CountFingerprint("z", 8, {9: 1})
    with pytest.raises(DataError):
        CountFingerprint("z", 8, {1: -2})
    fp = CountFingerprint("x", 8, {0: 1, 1: 2, 3: 0})
    assert fp.counts == {0: 1, 1: 2}
    assert fp.squared_norm == 5


def test_comparison_record():
    rec = ComparisonRecord("x", "y", "b")
    assert (rec.winner_id, rec.loser_id) == ("y", "x")
    assert rec.reversed().winner_id == "x"
    with pytest.raises(DataError):
        ComparisonRecord("x", "x", "a")
    with pytest.raises(DataError):
        ComparisonRecord("x", "y", "tie")


def test_token_sequence_must_reproduce_source():
    assert str(TokenSequence(("Cl", "c"), "Clc")) == "Cl c"
    with pytest.raises(DataError):
        TokenSequence(("C", "c"), "Clc")


def test_settings_from_environment(monkeypatch):
    monkeypatch.setenv("RANKFUSION_K_MAX", "20")
    monkeypatch.setenv("RANKFUSION_LOG_LEVEL", "debug")
    settings = get_settings()
    assert settings.k_max == 20
    assert settings.log_level == "DEBUG"
    assert settings.block_size == 1024


def test_bad_settings_value(monkeypatch):
    monkeypatch.setenv("RANKFUSION_BLOCK_SIZE", "lots")
    with pytest.raises(ConfigurationError):
        get_settings()


def test_config_file_keys_are_normalized(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("K-MAX=7\nOUTPUT_LIMIT=3\n")
    assert load_config_file(path) == {"k_max": "7", "output_limit": "3"}
    with pytest.raises(ConfigurationError):
        load_config_file(tmp_path / "missing.env")

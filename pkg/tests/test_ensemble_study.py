import sys
from pathlib import Path

# Add project root to path for imports
sys.path.append(str(Path(__file__).parent.parent))

import pytest

from src.core.errors import ArgumentError
from src.core.schemas import SynthConfig, TrainConfig
from src.services.ensemble_study import STUDY_COLUMNS, average_gain, pairwise_study
from src.services.synthgen import complementary_fixture, gen_dataset


@pytest.fixture(scope="module")
def three_models():
    placement = [
        [0.5, 0.1, 0.1, 0.05, 0.05, 0.2],
        [0.3, 0.2, 0.1, 0.1, 0.1, 0.2],
        [0.2, 0.2, 0.2, 0.1, 0.1, 0.2],
    ]
    return gen_dataset(SynthConfig(m=3, k_max=5, n_instances=300, placement=placement, rho=0.3, seed=4))


def test_one_row_per_pair_and_k(three_models):
    study = pairwise_study(three_models, ks=[1, 5], scheme="reciprocal", k_max=5)
    assert list(study.columns) == STUDY_COLUMNS
    assert len(study) == 3 * 2
    assert set(zip(study["model_a"], study["model_b"])) == {
        ("model_0", "model_1"), ("model_0", "model_2"), ("model_1", "model_2"),
    }
    assert (study["gain"] == study["ensemble"] - study["best_single"]).all()


def test_average_gain(three_models):
    study = pairwise_study(three_models, ks=[1, 3], scheme="linear", k_max=5)
    summary = average_gain(study)
    assert list(summary["k"]) == [1, 3]
    assert summary.loc[summary["k"] == 3, "gain"].iloc[0] == pytest.approx(study[study["k"] == 3]["gain"].mean())


def test_weighted_reciprocal_scheme(three_models):
    study = pairwise_study(three_models, ks=[1], scheme="weighted_reciprocal", k_max=5)
    assert len(study) == 3


def test_learned_scheme_gains_on_complementary_pair():
    dataset = complementary_fixture(seed=5, n_instances=2000)
    cfg = TrainConfig(steps=300)
    study = pairwise_study(dataset, ks=[10], scheme="learned", cfg=cfg, k_max=10)
    assert study["gain"].iloc[0] > 0.2


def test_study_argument_checks(three_models):
    with pytest.raises(ArgumentError):
        pairwise_study(three_models, ks=[1], scheme="borda")
    with pytest.raises(ArgumentError):
        pairwise_study([], ks=[1], scheme="linear")
    single = [inst.select(("model_0",)) for inst in three_models]
    with pytest.raises(ArgumentError):
        pairwise_study(single, ks=[1], scheme="linear", k_max=5)

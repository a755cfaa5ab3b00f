import json

import pytest

from config import CLONER_HYPERPARAMS, DEFAULT_TEST_DAYS, DEFAULT_TRAIN_DAYS, MIN_CLONER_SAMPLES
from learning.baselines import BASELINE_FACTORIES
from learning.dataset import CLASS_NAMES, read_dataset_csv
from main import CLONING_TARGETS, Pipeline, hyperparams_from
from market.scenario import ScenarioConfig
from settings_manager import SettingsManager

pytestmark = pytest.mark.slow

SEED = 7


@pytest.fixture(scope="module")
def pipeline():
    return Pipeline(SettingsManager())


@pytest.fixture(scope="module")
def small_market(pipeline, tmp_path_factory):
    root = tmp_path_factory.mktemp("small_market")
    pipeline.simulate(ScenarioConfig.preset("small", days=5, seed=SEED), root / "sim")
    pipeline.stylized_facts(root / "sim", root / "facts")
    pipeline.dataset(root / "sim", root / "dataset", SEED, DEFAULT_TRAIN_DAYS, DEFAULT_TEST_DAYS)
    return root


@pytest.fixture(scope="module")
def evaluation(pipeline, small_market):
    pipeline.train_classifier(small_market / "dataset", small_market / "models", SEED, hyperparams_from(None, None),
                              0, list(BASELINE_FACTORIES))
    pipeline.evaluate(small_market / "models" / "classifier.npz", small_market / "dataset", small_market / "eval")
    return json.loads((small_market / "eval" / "evaluation.json").read_text())


@pytest.fixture(scope="module")
def cloning(pipeline, small_market):
    pipeline.train_cloners(small_market / "dataset", small_market / "cloners", SEED,
                           hyperparams_from(None, None, CLONER_HYPERPARAMS))
    return json.loads((small_market / "cloners" / "cloning.json").read_text())


def test_one_minute_returns_are_fat_tailed(small_market):
    one_minute, ten_minutes = json.loads((small_market / "facts" / "report.json").read_text())
    assert one_minute["excess_kurtosis"] > 0.5
    assert one_minute["excess_kurtosis"] > ten_minutes["excess_kurtosis"]


def test_every_archetype_clears_the_cloner_floor(small_market):
    counts = read_dataset_csv(small_market / "dataset" / "train_full.csv").class_counts()
    assert min(counts) >= MIN_CLONER_SAMPLES


def test_mlp_separates_the_archetypes(evaluation):
    mlp = evaluation["mlp"]
    assert mlp["macro_f1"] >= 0.45
    ranked = sorted(CLASS_NAMES, key=lambda name: mlp["f1"][name], reverse=True)
    assert "MARKET_MAKER" in ranked[:2]


@pytest.mark.parametrize("name", ["decision_tree", "adaboost"])
def test_tree_baselines(evaluation, name):
    assert evaluation[name]["macro_f1"] >= 0.40


def test_every_baseline_is_scored(evaluation):
    assert set(BASELINE_FACTORIES) <= set(evaluation)


def test_cloned_orders_match_the_held_out_days(cloning):
    for name in CLASS_NAMES:
        assert cloning[name]["status"] == "trained", name
        for target in CLONING_TARGETS:
            scores = cloning[name]["targets"][target]
            assert scores["mean_difference_in_std"] < 0.25, (name, target)
            assert scores["ks"] < 0.35, (name, target)

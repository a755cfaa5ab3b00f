import numpy as np
import pytest
from scipy.stats import ks_2samp

from errors import DatasetError, TrainingError
from learning.cloning import clone_actions, fit_cloner
from learning.dataset import SampleSet, cloning_targets
from learning.mlp import Hyperparams, load_model, save_model


def hp(**overrides):
    settings = {"hidden_sizes": [16], "activations": ["relu"], "dropout": 0.0, "learning_rate": 0.01,
                "batch_size": 64, "epochs": 30}
    settings.update(overrides)
    return Hyperparams(**settings)


def quotes(days, per_day=500, shift=0, seed=0):
    """Limit orders three ticks away from the mid, on the passive side, over a one-tick-wide book."""
    rng = np.random.default_rng(seed)
    rows, day_index = [], []
    for day in days:
        for _ in range(per_day):
            mid = 1000 + shift + int(rng.integers(-20, 21))
            asks = mid + 1 + np.arange(5)
            bids = mid - 1 - np.arange(5)
            side = 1 if rng.random() < 0.5 else -1
            size = int(rng.integers(1, 51))
            rows.append(np.concatenate([asks, rng.integers(1, 101, 5), bids, rng.integers(1, 101, 5),
                                        [side, mid - 3 * side, size]]).astype(float))
            day_index.append(day)
    n = len(rows)
    return SampleSet(np.array(rows), np.zeros(n, dtype=np.int64), np.array(day_index, dtype=np.int64),
                     np.arange(n, dtype=np.int64))


@pytest.fixture(scope="module")
def cloner():
    model, _ = fit_cloner(quotes([0, 1]), hp(), seed=1)
    return model


class TestFitCloner:
    def test_sampled_actions_match_unseen_price_levels(self, cloner):
        test = quotes([2], shift=200, seed=9)
        truth = cloning_targets(test)
        actions = clone_actions(cloner, test, np.random.default_rng(4))
        for column in range(2):
            assert abs(actions[:, column].mean() - truth[:, column].mean()) < 0.25 * truth[:, column].std()
            assert ks_2samp(actions[:, column], truth[:, column]).statistic < 0.35

    def test_actions_are_reproducible(self, cloner):
        test = quotes([2], per_day=50, seed=3)
        first = clone_actions(cloner, test, np.random.default_rng(5))
        second = clone_actions(cloner, test, np.random.default_rng(5))
        assert np.array_equal(first, second)

    def test_epochs_are_bounded_by_the_request(self, cloner):
        assert 1 <= cloner.meta["hyperparams"]["epochs"] <= 30
        assert cloner.residuals.shape == (1000, 2)

    def test_search_keeps_every_trial(self):
        model, search = fit_cloner(quotes([0, 1], per_day=100), hp(epochs=3), seed=2, search_budget=3)
        assert len(search.trials) == 3
        assert model.meta["hyperparams"]["learning_rate"] == search.best.learning_rate

    def test_too_few_samples(self):
        with pytest.raises(TrainingError) as info:
            fit_cloner(quotes([0, 1], per_day=40), hp(), seed=1)
        assert info.value.field == "samples"

    def test_single_day_cannot_be_validated(self):
        with pytest.raises(DatasetError):
            fit_cloner(quotes([0], per_day=200), hp(), seed=1)

    def test_residuals_survive_a_save(self, cloner, tmp_path):
        loaded = load_model(save_model(cloner, tmp_path / "cloner.npz"))
        assert np.array_equal(loaded.residuals, cloner.residuals)
        test = quotes([2], per_day=20, seed=6)
        assert np.array_equal(clone_actions(loaded, test, np.random.default_rng(1)),
                              clone_actions(cloner, test, np.random.default_rng(1)))

import numpy as np
import pytest

from errors import TrainingError
from learning.mlp import (AdamState, Hyperparams, MlpModel, TrainingHistory, adam_step, load_model, loss_value,
                          mlp_backward, mlp_forward, predict_labels, predict_regression, sample_regression, save_model,
                          train_classifier, train_cloner)


def small_hp(**overrides):
    settings = {"hidden_sizes": [16], "activations": ["relu"], "dropout": 0.0, "learning_rate": 0.01,
                "batch_size": 32, "epochs": 30}
    settings.update(overrides)
    return Hyperparams(**settings)


def blobs(n_per_class=100, seed=0):
    rng = np.random.default_rng(seed)
    centres = np.array([[4.0, 4.0], [-4.0, 4.0], [-4.0, -4.0], [4.0, -4.0]])
    x = np.vstack([rng.normal(centre, 0.5, size=(n_per_class, 2)) for centre in centres])
    y = np.repeat(np.arange(4), n_per_class)
    return x, y


def numerical_gradient(model, batch, targets, loss, param, h=1e-5):
    grad = np.zeros_like(param)
    for index in np.ndindex(param.shape):
        original = param[index]
        param[index] = original + h
        plus = loss_value(model, mlp_forward(model, batch), targets, loss)
        param[index] = original - h
        minus = loss_value(model, mlp_forward(model, batch), targets, loss)
        param[index] = original
        grad[index] = (plus - minus) / (2 * h)
    return grad


class TestForward:
    def test_zero_weights_give_uniform_probabilities(self):
        model = MlpModel.initialize([3, 5, 4], ["relu"], "softmax", 0.0, np.random.default_rng(0))
        for weight in model.weights:
            weight[:] = 0.0
        probabilities = mlp_forward(model, np.ones((2, 3))).output
        np.testing.assert_allclose(probabilities, 0.25)

    def test_zero_dropout_is_the_identity(self):
        model = MlpModel.initialize([3, 8, 8, 2], ["relu", "sigmoid"], "linear", 0.0, np.random.default_rng(1))
        batch = np.random.default_rng(2).normal(size=(5, 3))
        train = mlp_forward(model, batch, train_mode=True, rng=np.random.default_rng(3)).output
        assert np.array_equal(train, mlp_forward(model, batch).output)

    def test_wrong_width_is_rejected(self):
        model = MlpModel.initialize([3, 4, 2], ["relu"], "linear", 0.0, np.random.default_rng(0))
        with pytest.raises(ValueError):
            mlp_forward(model, np.ones((1, 4)))

    def test_nan_inputs_are_rejected(self):
        model = MlpModel.initialize([2, 4, 2], ["relu"], "linear", 0.0, np.random.default_rng(0))
        with pytest.raises(ValueError):
            mlp_forward(model, np.array([[1.0, np.nan]]))

    @pytest.mark.slow
    def test_inverted_dropout_preserves_the_expectation(self):
        model = MlpModel.initialize([3, 50, 1], ["relu"], "linear", 0.5, np.random.default_rng(4))
        batch = np.array([[0.5, -1.0, 2.0]])
        rng = np.random.default_rng(5)
        draws = np.array([mlp_forward(model, batch, train_mode=True, rng=rng).output[0, 0] for _ in range(4000)])
        expected = mlp_forward(model, batch).output[0, 0]
        assert abs(draws.mean() - expected) < 4 * draws.std() / np.sqrt(len(draws))


class TestBackward:
    @pytest.mark.parametrize("net", range(20))
    def test_gradients_match_finite_differences(self, net):
        rng = np.random.default_rng(100 + net)
        head = "softmax" if net % 2 == 0 else "linear"
        loss = "cross_entropy" if head == "softmax" else "mse"
        model = MlpModel.initialize([4, 6, 5, 3], ["sigmoid", "sigmoid"], head, 0.0, rng)
        for bias in model.biases:
            bias[:] = rng.normal(scale=0.1, size=bias.shape)
        batch = rng.normal(size=(7, 4))
        targets = rng.integers(0, 3, size=7) if head == "softmax" else rng.normal(size=(7, 3))

        analytic = mlp_backward(model, mlp_forward(model, batch), targets, loss)
        for param, grad in zip(model.parameters(), analytic):
            numeric = numerical_gradient(model, batch, targets, loss, param)
            error = np.abs(grad - numeric).max() / max(np.abs(grad).max() + np.abs(numeric).max(), 1e-8)
            assert error < 1e-4

    def test_cross_entropy_output_gradient_is_p_minus_y(self):
        model = MlpModel.initialize([2, 3, 4], ["relu"], "softmax", 0.0, np.random.default_rng(0))
        batch = np.array([[0.3, -0.2]])
        cache = mlp_forward(model, batch)
        grads = mlp_backward(model, cache, np.array([2]), "cross_entropy")
        expected = cache.output[0] - np.eye(4)[2]
        assert grads[-1] == pytest.approx(expected)

    def test_zero_error_gives_zero_gradients(self):
        model = MlpModel.initialize([2, 3, 2], ["relu"], "linear", 0.0, np.random.default_rng(0))
        batch = np.random.default_rng(1).normal(size=(4, 2))
        cache = mlp_forward(model, batch)
        for grad in mlp_backward(model, cache, cache.output.copy(), "mse"):
            assert np.all(grad == 0)


class TestAdam:
    def test_first_step_moves_by_the_learning_rate(self):
        param = np.array([1.0, -2.0])
        state = AdamState.for_parameters([param], learning_rate=0.001)
        adam_step(state, [param], [np.array([0.5, -3.0])])
        assert param == pytest.approx([1.0 - 0.001, -2.0 + 0.001], abs=1e-9)

    def test_zero_gradient_leaves_parameters(self):
        param = np.array([1.0, 2.0])
        state = AdamState.for_parameters([param])
        adam_step(state, [param], [np.zeros(2)])
        assert param.tolist() == [1.0, 2.0]

    def test_matches_a_scalar_reference(self):
        lr, beta1, beta2, eps = 0.01, 0.9, 0.999, 1e-8
        param = np.array([0.7])
        state = AdamState.for_parameters([param], learning_rate=lr, beta1=beta1, beta2=beta2, epsilon=eps)
        theta, m, v = 0.7, 0.0, 0.0
        for t in range(1, 11):
            g = 2 * theta - 1
            adam_step(state, [param], [np.array([2 * param[0] - 1])])
            m = beta1 * m + (1 - beta1) * g
            v = beta2 * v + (1 - beta2) * g * g
            theta -= lr * (m / (1 - beta1 ** t)) / (np.sqrt(v / (1 - beta2 ** t)) + eps)
        assert abs(param[0] - theta) < 1e-12

    def test_shape_mismatch(self):
        param = np.zeros(2)
        with pytest.raises(ValueError):
            adam_step(AdamState.for_parameters([param]), [param], [np.zeros(3)])


class TestTraining:
    def test_separable_blobs_are_learned(self):
        x, y = blobs()
        model, history = train_classifier(x, y, small_hp(), seed=1)
        assert np.mean(predict_labels(model, x) == y) >= 0.99
        assert history.train_loss[-1] < history.train_loss[0]

    def test_same_seed_same_weights(self):
        x, y = blobs(30)
        first, _ = train_classifier(x, y, small_hp(epochs=3, dropout=0.2), seed=7)
        second, _ = train_classifier(x, y, small_hp(epochs=3, dropout=0.2), seed=7)
        for a, b in zip(first.parameters(), second.parameters()):
            assert np.array_equal(a, b)

    def test_validation_loss_is_tracked(self):
        x, y = blobs(30)
        _, history = train_classifier(x, y, small_hp(epochs=4), seed=1, valid=(x[:20], y[:20]))
        assert len(history.valid_loss) == 4

    def test_empty_training_set(self):
        with pytest.raises(TrainingError):
            train_classifier(np.zeros((0, 2)), np.zeros(0), small_hp(), seed=1)

    def test_divergence_is_reported(self):
        x, y = blobs(30)
        with pytest.raises(TrainingError) as info:
            train_classifier(x, y, small_hp(epochs=2, learning_rate=1e300), seed=1)
        assert info.value.field == "learning_rate"

    def test_best_epoch_follows_the_validation_loss(self):
        assert TrainingHistory(train_loss=[3, 2, 1, 0.5], valid_loss=[2.0, 1.0, 1.5, 1.2]).best_epoch() == 2
        assert TrainingHistory(train_loss=[3, 2, 1]).best_epoch() == 3

    def test_mismatched_schedule_is_rejected(self):
        with pytest.raises(ValueError):
            Hyperparams(hidden_sizes=[4, 4], activations=["relu"])


class TestCloner:
    def test_constant_target_is_learned(self):
        x = np.random.default_rng(0).normal(size=(200, 3))
        targets = np.zeros((200, 2))
        model, _ = train_cloner(x, targets, small_hp(hidden_sizes=[8], epochs=100), seed=2)
        assert np.abs(predict_regression(model, x)).mean() < 0.1

    def test_residuals_are_kept(self):
        x = np.random.default_rng(0).normal(size=(120, 3))
        targets = np.column_stack([x[:, 0], -x[:, 1]])
        model, _ = train_cloner(x, targets, small_hp(epochs=5), seed=2)
        assert np.allclose(model.residuals, targets - predict_regression(model, x))

    def test_sampling_adds_whole_residual_rows(self):
        model = MlpModel.initialize([3, 4, 2], ["relu"], "linear", 0.0, np.random.default_rng(0))
        x = np.random.default_rng(1).normal(size=(50, 3))
        assert np.array_equal(sample_regression(model, x, np.random.default_rng(2)), predict_regression(model, x))
        model.residuals = np.array([[1.0, 10.0], [2.0, 20.0]])
        drawn = sample_regression(model, x, np.random.default_rng(2)) - predict_regression(model, x)
        rows = {tuple(np.round(row, 9)) for row in drawn}
        assert rows == {(1.0, 10.0), (2.0, 20.0)}

    def test_refuses_small_samples(self):
        with pytest.raises(TrainingError) as info:
            train_cloner(np.zeros((99, 3)), np.zeros((99, 2)), small_hp(), seed=1)
        assert info.value.field == "samples"


class TestPersistence:
    def test_save_is_byte_identical_and_load_predicts_the_same(self, tmp_path):
        x, y = blobs(20)
        model, _ = train_classifier(x, y, small_hp(epochs=2), seed=3)
        model.meta["class_names"] = ["a", "b", "c", "d"]
        first = save_model(model, tmp_path / "a.npz")
        second = save_model(model, tmp_path / "b.npz")
        assert first.read_bytes() == second.read_bytes()

        loaded = load_model(first)
        assert loaded.meta["class_names"] == ["a", "b", "c", "d"]
        assert np.array_equal(predict_labels(loaded, x), predict_labels(model, x))

    def test_missing_file(self, tmp_path):
        with pytest.raises(TrainingError) as info:
            load_model(tmp_path / "absent.npz")
        assert info.value.field == "model"

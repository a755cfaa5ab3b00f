"""
Multilayer Perceptron Module.

A feed-forward network on numpy arrays, with scipy supplying the softmax and logistic functions:
affine layers with ReLU or logistic hidden activations, inverted dropout after every hidden layer,
a softmax head for archetype classification or a linear head for behavioral cloning, exact
backpropagation and the Adam optimizer. Cloners also keep their training residuals and can sample
actions from them. Every random draw (initialization, shuffling and dropout masks) comes from one
seeded generator, so training is a pure function of data, hyperparameters and seed.
"""

import io
import json
import logging
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.special import expit, log_softmax, softmax

from config import HYPERPARAMS, MIN_CLONER_SAMPLES
from errors import TrainingError

logger = logging.getLogger(__name__)

Head = Literal["softmax", "linear"]
Loss = Literal["cross_entropy", "mse"]
LOSS_OF_HEAD = {"softmax": "cross_entropy", "linear": "mse"}
# Fixed zip timestamps keep model files byte-identical across runs.
ZIP_DATE_TIME = (1980, 1, 1, 0, 0, 0)


def _relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def _relu_grad(z: np.ndarray, a: np.ndarray) -> np.ndarray:
    return (z > 0).astype(z.dtype)


def _sigmoid_grad(z: np.ndarray, a: np.ndarray) -> np.ndarray:
    return a * (1.0 - a)


ACTIVATIONS = {
    "relu": (_relu, _relu_grad),
    "sigmoid": (expit, _sigmoid_grad),
}


class Hyperparams(BaseModel):
    hidden_sizes: list[int] = Field(default_factory=lambda: list(HYPERPARAMS["hidden_sizes"]))
    activations: list[str] = Field(default_factory=lambda: list(HYPERPARAMS["activations"]))
    dropout: float = Field(default=HYPERPARAMS["dropout"], ge=0.0, lt=1.0)
    learning_rate: float = Field(default=HYPERPARAMS["learning_rate"], gt=0.0)
    batch_size: int = Field(default=HYPERPARAMS["batch_size"], ge=1)
    beta1: float = Field(default=HYPERPARAMS["beta1"], ge=0.0, lt=1.0)
    beta2: float = Field(default=HYPERPARAMS["beta2"], ge=0.0, lt=1.0)
    epsilon: float = Field(default=HYPERPARAMS["epsilon"], gt=0.0)
    epochs: int = Field(default=HYPERPARAMS["epochs"], ge=1)
    log_every: int = Field(default=10, ge=1)

    @model_validator(mode="after")
    def check_schedule(self):
        if len(self.activations) != len(self.hidden_sizes):
            raise ValueError("activations must name one function per hidden layer")
        unknown = sorted(set(self.activations) - set(ACTIVATIONS))
        if unknown:
            raise ValueError(f"unknown activations {unknown}, expected {sorted(ACTIVATIONS)}")
        if any(size < 1 for size in self.hidden_sizes):
            raise ValueError("hidden layer sizes must be positive")
        return self


@dataclass
class MlpModel:
    """
    Layer sizes run from the input width to the output width; activations has one entry per
    hidden layer. weights[i] has shape (sizes[i], sizes[i + 1]).
    """

    sizes: list
    activations: list
    head: str
    dropout: float
    weights: list
    biases: list
    meta: dict = field(default_factory=dict)
    residuals: Optional[np.ndarray] = None

    @classmethod
    def initialize(cls, sizes: list, activations: list, head: str, dropout: float,
                   rng: np.random.Generator) -> "MlpModel":
        """
        Draws weights uniformly from +-sqrt(6 / fan_in) (+-sqrt(3 / fan_in) for non-ReLU layers);
        biases start at zero.
        """
        if len(activations) != len(sizes) - 2:
            raise ValueError("one activation per hidden layer is required")
        if not 0.0 <= dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        weights, biases = [], []
        for layer, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            gain = 6.0 if layer < len(activations) and activations[layer] == "relu" else 3.0
            limit = np.sqrt(gain / fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(list(sizes), list(activations), head, dropout, weights, biases)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list:
        """Weights and biases interleaved: [W0, b0, W1, b1, ...]."""
        params = []
        for weight, bias in zip(self.weights, self.biases):
            params += [weight, bias]
        return params


@dataclass
class ForwardCache:
    inputs: list
    pre_activations: list
    activations: list
    masks: list
    output: np.ndarray


def mlp_forward(model: MlpModel, batch: np.ndarray, train_mode: bool = False,
                rng: Optional[np.random.Generator] = None) -> ForwardCache:
    """
    Runs the network on a batch.

    Args:
        model (MlpModel): The network.
        batch (np.ndarray): Inputs of shape (n, sizes[0]).
        train_mode (bool): Applies inverted dropout after every hidden layer when True.
        rng (np.random.Generator | None): Source of dropout masks, required in train mode.

    Returns:
        ForwardCache: Intermediate values for backpropagation; ``output`` holds the probabilities
        of a softmax head or the raw values of a linear head.
    """
    batch = np.asarray(batch, dtype=float)
    if batch.ndim != 2 or batch.shape[1] != model.sizes[0]:
        raise ValueError(f"expected a batch of width {model.sizes[0]}, got shape {batch.shape}")
    if not np.all(np.isfinite(batch)):
        raise ValueError("batch contains NaN or infinite values")
    drop = train_mode and model.dropout > 0
    if drop and rng is None:
        raise ValueError("train-mode dropout needs a random generator")

    inputs, pre_activations, activations, masks = [], [], [], []
    a = batch
    for layer in range(model.n_layers):
        inputs.append(a)
        z = a @ model.weights[layer] + model.biases[layer]
        pre_activations.append(z)
        if layer == model.n_layers - 1:
            output = softmax(z, axis=1) if model.head == "softmax" else z
            return ForwardCache(inputs, pre_activations, activations, masks, output)
        a = ACTIVATIONS[model.activations[layer]][0](z)
        activations.append(a)
        mask = None
        if drop:
            mask = (rng.random(a.shape) >= model.dropout) / (1.0 - model.dropout)
            a = a * mask
        masks.append(mask)
    raise ValueError("a network needs at least one layer")


def _one_hot(labels: np.ndarray, width: int) -> np.ndarray:
    encoded = np.zeros((len(labels), width))
    encoded[np.arange(len(labels)), labels] = 1.0
    return encoded


def _dense_targets(model: MlpModel, targets: np.ndarray, loss: str) -> np.ndarray:
    targets = np.asarray(targets)
    width = model.sizes[-1]
    if loss == "cross_entropy" and targets.ndim == 1:
        if targets.min(initial=0) < 0 or targets.max(initial=0) >= width:
            raise ValueError(f"class labels must lie in [0, {width})")
        return _one_hot(targets.astype(np.int64), width)
    if targets.ndim == 1 and width == 1:
        targets = targets.reshape(-1, 1)
    return targets.astype(float)


def loss_value(model: MlpModel, cache: ForwardCache, targets: np.ndarray, loss: str) -> float:
    """Mean cross-entropy per sample, or mean squared error per output element."""
    dense = _dense_targets(model, targets, loss)
    if dense.shape != cache.output.shape:
        raise ValueError(f"targets of shape {dense.shape} do not match outputs {cache.output.shape}")
    if loss == "cross_entropy":
        return float(-np.sum(dense * log_softmax(cache.pre_activations[-1], axis=1)) / len(dense))
    return float(np.mean((cache.output - dense) ** 2))


def mlp_backward(model: MlpModel, cache: ForwardCache, targets: np.ndarray, loss: str) -> list:
    """
    Exact gradients of the loss with respect to every parameter.

    Args:
        model (MlpModel): The network the cache was computed with.
        cache (ForwardCache): Result of mlp_forward on the batch.
        targets (np.ndarray): Class labels or one-hot rows for cross-entropy, values for MSE.
        loss (str): "cross_entropy" (softmax head) or "mse" (linear head).

    Returns:
        list: Gradients in the order of MlpModel.parameters().
    """
    dense = _dense_targets(model, targets, loss)
    if dense.shape != cache.output.shape:
        raise ValueError(f"targets of shape {dense.shape} do not match outputs {cache.output.shape}")
    n = len(dense)
    if loss == "cross_entropy":
        delta = (cache.output - dense) / n
    else:
        delta = 2.0 * (cache.output - dense) / dense.size

    grads = [None] * (2 * model.n_layers)
    for layer in range(model.n_layers - 1, -1, -1):
        grads[2 * layer] = cache.inputs[layer].T @ delta
        grads[2 * layer + 1] = delta.sum(axis=0)
        if layer == 0:
            break
        upstream = delta @ model.weights[layer].T
        hidden = layer - 1
        if cache.masks[hidden] is not None:
            upstream = upstream * cache.masks[hidden]
        derivative = ACTIVATIONS[model.activations[hidden]][1]
        delta = upstream * derivative(cache.pre_activations[hidden], cache.activations[hidden])
    return grads


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    learning_rate: float = HYPERPARAMS["learning_rate"]
    beta1: float = HYPERPARAMS["beta1"]
    beta2: float = HYPERPARAMS["beta2"]
    epsilon: float = HYPERPARAMS["epsilon"]

    @classmethod
    def for_parameters(cls, params: list, **settings) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **settings)


def adam_step(state: AdamState, params: list, grads: list) -> list:
    """
    Applies one bias-corrected Adam update to the parameters in place.

    Returns:
        list: The updated parameters (the same arrays).
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("parameters, gradients and optimizer state differ in length")
    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for param, grad, m, v in zip(params, grads, state.m, state.v):
        if param.shape != grad.shape:
            raise ValueError(f"gradient shape {grad.shape} does not match parameter {param.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        param -= state.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + state.epsilon)
    return params


class TrainingHistory(BaseModel):
    train_loss: list[float] = Field(default_factory=list)
    valid_loss: list[float] = Field(default_factory=list)

    def best_epoch(self) -> int:
        """The 1-based epoch with the lowest validation loss, or the last epoch when nothing was validated."""
        if not self.valid_loss:
            return len(self.train_loss)
        return int(np.argmin(self.valid_loss)) + 1


def evaluate_loss(model: MlpModel, x: np.ndarray, targets: np.ndarray, loss: str, batch_size: int = 4096) -> float:
    total, count = 0.0, 0
    for start in range(0, len(x), batch_size):
        chunk = slice(start, start + batch_size)
        cache = mlp_forward(model, x[chunk], train_mode=False)
        weight = len(x[chunk]) if loss == "cross_entropy" else cache.output.size
        total += loss_value(model, cache, targets[chunk], loss) * weight
        count += weight
    return total / max(count, 1)


def train(model: MlpModel, x: np.ndarray, targets: np.ndarray, hp: Hyperparams, rng: np.random.Generator,
          valid: Optional[tuple] = None) -> TrainingHistory:
    """
    Mini-batch Adam training over shuffled epochs.

    Raises:
        TrainingError: If the loss becomes NaN or infinite.
    """
    loss = LOSS_OF_HEAD[model.head]
    params = model.parameters()
    state = AdamState.for_parameters(params, learning_rate=hp.learning_rate, beta1=hp.beta1, beta2=hp.beta2,
                                     epsilon=hp.epsilon)
    history = TrainingHistory()
    n = len(x)
    for epoch in range(1, hp.epochs + 1):
        order = rng.permutation(n)
        epoch_loss, seen = 0.0, 0
        for start in range(0, n, hp.batch_size):
            index = order[start:start + hp.batch_size]
            cache = mlp_forward(model, x[index], train_mode=True, rng=rng)
            batch_loss = loss_value(model, cache, targets[index], loss)
            if not np.isfinite(batch_loss):
                raise TrainingError(f"loss diverged at epoch {epoch} (learning rate {hp.learning_rate}, "
                                    f"batch size {hp.batch_size})", field="learning_rate")
            adam_step(state, params, mlp_backward(model, cache, targets[index], loss))
            epoch_loss += batch_loss * len(index)
            seen += len(index)
        history.train_loss.append(epoch_loss / seen)
        if valid is not None and len(valid[0]):
            history.valid_loss.append(evaluate_loss(model, valid[0], valid[1], loss))
        if epoch % hp.log_every == 0 or epoch == hp.epochs:
            valid_text = f", valid loss {history.valid_loss[-1]:.4f}" if history.valid_loss else ""
            logger.info(f"Epoch {epoch}/{hp.epochs}: train loss {history.train_loss[-1]:.4f}{valid_text}")
    return history


def train_classifier(train_x: np.ndarray, train_y: np.ndarray, hp: Hyperparams, seed: int,
                     valid: Optional[tuple] = None, n_classes: int = 4) -> tuple:
    """
    Trains the archetype classifier with a softmax head and cross-entropy loss.

    Args:
        train_x (np.ndarray): Normalized features.
        train_y (np.ndarray): Class indices.
        hp (Hyperparams): Architecture and optimizer settings.
        seed (int): Seed of every random draw.
        valid (tuple | None): Optional (x, y) validation pair tracked per epoch.
        n_classes (int): Width of the softmax head.

    Returns:
        tuple: (MlpModel, TrainingHistory).
    """
    if len(train_x) == 0:
        raise TrainingError("training set is empty", field="dataset")
    rng = np.random.default_rng(seed)
    sizes = [train_x.shape[1]] + hp.hidden_sizes + [n_classes]
    model = MlpModel.initialize(sizes, hp.activations, "softmax", hp.dropout, rng)
    history = train(model, train_x, np.asarray(train_y, dtype=np.int64), hp, rng, valid)
    model.meta.update({"seed": seed, "hyperparams": hp.model_dump()})
    return model, history


def check_cloner_samples(n_samples: int, min_samples: int = MIN_CLONER_SAMPLES):
    if n_samples < min_samples:
        raise TrainingError(f"{n_samples} samples available, the cloner needs at least {min_samples}",
                            field="samples")


def train_cloner(x: np.ndarray, targets: np.ndarray, hp: Hyperparams, seed: int,
                 min_samples: int = MIN_CLONER_SAMPLES, valid: Optional[tuple] = None) -> tuple:
    """
    Trains a behavioral-cloning regressor with a linear head and mean squared error.

    The model keeps its training residuals (targets minus predictions) for sample_regression.

    Args:
        x (np.ndarray): Normalized inputs.
        targets (np.ndarray): Normalized targets, one column per output.
        hp (Hyperparams): Architecture and optimizer settings.
        seed (int): Seed of every random draw.
        min_samples (int): Smallest accepted training set.
        valid (tuple | None): Optional (x, targets) validation pair tracked per epoch.

    Returns:
        tuple: (MlpModel, TrainingHistory).

    Raises:
        TrainingError: If fewer than min_samples samples are available.
    """
    check_cloner_samples(len(x), min_samples)
    rng = np.random.default_rng(seed)
    targets = np.asarray(targets, dtype=float)
    sizes = [x.shape[1]] + hp.hidden_sizes + [targets.shape[1]]
    model = MlpModel.initialize(sizes, hp.activations, "linear", hp.dropout, rng)
    history = train(model, x, targets, hp, rng, valid)
    model.residuals = targets - predict_regression(model, x)
    model.meta.update({"seed": seed, "hyperparams": hp.model_dump()})
    return model, history


def predict_proba(model: MlpModel, x: np.ndarray, batch_size: int = 4096) -> np.ndarray:
    if model.head != "softmax":
        raise ValueError("class probabilities need a softmax head")
    return predict_regression(model, x, batch_size)


def predict_labels(model: MlpModel, x: np.ndarray) -> np.ndarray:
    return np.argmax(predict_proba(model, x), axis=1)


def predict_regression(model: MlpModel, x: np.ndarray, batch_size: int = 4096) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if len(x) == 0:
        return np.zeros((0, model.sizes[-1]))
    chunks = [mlp_forward(model, x[start:start + batch_size]).output for start in range(0, len(x), batch_size)]
    return np.vstack(chunks)


def sample_regression(model: MlpModel, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    Draws one action per input row: the point prediction plus a whole training residual row picked
    uniformly with replacement, so the outputs keep the spread and the joint shape of the targets.

    Without stored residuals this is the point prediction.
    """
    predictions = predict_regression(model, x)
    if model.residuals is None or len(model.residuals) == 0:
        return predictions
    rows = rng.integers(0, len(model.residuals), size=len(predictions))
    return predictions + model.residuals[rows]


def save_model(model: MlpModel, path) -> Path:
    """
    Writes the model as an .npz archive: one array per parameter, the cloner residuals if any, and a
    ``meta`` JSON string.
    """
    path = Path(path)
    meta = dict(model.meta, sizes=model.sizes, activations=model.activations, head=model.head,
                dropout=model.dropout)
    arrays = {"meta": np.array(json.dumps(meta, sort_keys=True))}
    for layer, (weight, bias) in enumerate(zip(model.weights, model.biases)):
        arrays[f"W{layer}"] = weight
        arrays[f"b{layer}"] = bias
    if model.residuals is not None:
        arrays["residuals"] = model.residuals
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as archive:
        for name, array in arrays.items():
            buffer = io.BytesIO()
            np.lib.format.write_array(buffer, np.asanyarray(array), allow_pickle=False)
            archive.writestr(zipfile.ZipInfo(f"{name}.npy", date_time=ZIP_DATE_TIME), buffer.getvalue())
    logger.info(f"Saved model with sizes {model.sizes} to {path}")
    return path


def load_model(path) -> MlpModel:
    path = Path(path)
    if not path.exists():
        raise TrainingError(f"model file {path} does not exist", field="model")
    with np.load(path, allow_pickle=False) as archive:
        meta = json.loads(str(archive["meta"]))
        n_layers = len(meta["sizes"]) - 1
        weights = [archive[f"W{layer}"] for layer in range(n_layers)]
        biases = [archive[f"b{layer}"] for layer in range(n_layers)]
        residuals = archive["residuals"] if "residuals" in archive.files else None
    extra = {k: v for k, v in meta.items() if k not in ("sizes", "activations", "head", "dropout")}
    return MlpModel(meta["sizes"], meta["activations"], meta["head"], meta["dropout"], weights, biases, extra,
                    residuals)

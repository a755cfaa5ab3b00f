"""
Baseline Classifiers Module.

The comparison classifiers of the archetype benchmark, each implemented on numpy behind one
abstract fit/predict interface: k-nearest neighbours, a one-vs-rest linear SVM trained by hinge
loss subgradient descent, a Gini CART decision tree, a random forest, SAMME AdaBoost on decision
stumps and Gaussian naive Bayes.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import norm

from config import BASELINE_DEFAULTS

logger = logging.getLogger(__name__)


class BaselineClassifier(ABC):
    """
    Abstract base class for the baseline classifiers.

    Args:
        n_classes (int): Minimum number of classes; labels above it widen the class range.
    """

    name = "baseline"

    def __init__(self, n_classes: int = 4):
        self.n_classes = n_classes

    def _prepare(self, x, y) -> tuple:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=np.int64)
        if x.ndim != 2 or len(x) != len(y) or len(y) == 0:
            raise ValueError("fit needs a non-empty (n, d) matrix and n labels")
        self.n_classes = max(self.n_classes, int(y.max()) + 1)
        return x, y

    @abstractmethod
    def fit(self, x, y, sample_weight=None) -> "BaselineClassifier":
        pass

    @abstractmethod
    def predict(self, x) -> np.ndarray:
        pass


def _vote(counts: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ties go to the smaller class index."""
    return np.argmax(counts, axis=1)


class KNearestNeighbors(BaselineClassifier):
    """Euclidean k-NN with majority vote; equal distances and equal votes favour the smaller label."""

    name = "knn"

    def __init__(self, k: int = BASELINE_DEFAULTS["knn"]["k"], n_classes: int = 4, chunk_size: int = 256):
        super().__init__(n_classes)
        if k < 1:
            raise ValueError("k must be at least 1")
        self.k = k
        self.chunk_size = chunk_size

    def fit(self, x, y, sample_weight=None):
        self.x, self.y = self._prepare(x, y)
        if self.k > len(self.y):
            raise ValueError(f"k={self.k} exceeds the {len(self.y)} training samples")
        return self

    def predict(self, x):
        x = np.asarray(x, dtype=float)
        train_norms = (self.x ** 2).sum(axis=1)
        labels = []
        for start in range(0, len(x), self.chunk_size):
            chunk = x[start:start + self.chunk_size]
            distances = (chunk ** 2).sum(axis=1)[:, None] + train_norms[None, :] - 2.0 * chunk @ self.x.T
            distances = np.maximum(distances, 0.0)
            for row in distances:
                nearest = np.lexsort((self.y, row))[:self.k]
                labels.append(int(np.argmax(np.bincount(self.y[nearest], minlength=self.n_classes))))
        return np.array(labels, dtype=np.int64)


class LinearSvmSgd(BaselineClassifier):
    """
    One-vs-rest linear SVM minimizing the L2-regularized hinge loss by mini-batch subgradient descent.
    """

    name = "linear_svm"

    def __init__(self, epochs: int = BASELINE_DEFAULTS["linear_svm"]["epochs"],
                 learning_rate: float = BASELINE_DEFAULTS["linear_svm"]["learning_rate"],
                 regularization: float = BASELINE_DEFAULTS["linear_svm"]["regularization"],
                 batch_size: int = 64, seed: int = 0, n_classes: int = 4):
        super().__init__(n_classes)
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.regularization = regularization
        self.batch_size = batch_size
        self.seed = seed

    def fit(self, x, y, sample_weight=None):
        x, y = self._prepare(x, y)
        rng = np.random.default_rng(self.seed)
        signs = np.where(y[:, None] == np.arange(self.n_classes)[None, :], 1.0, -1.0)
        self.weights = np.zeros((x.shape[1], self.n_classes))
        self.bias = np.zeros(self.n_classes)
        for epoch in range(self.epochs):
            order = rng.permutation(len(y))
            for start in range(0, len(y), self.batch_size):
                index = order[start:start + self.batch_size]
                margins = signs[index] * (x[index] @ self.weights + self.bias)
                active = (margins < 1.0) * signs[index]
                grad_w = self.regularization * self.weights - x[index].T @ active / len(index)
                grad_b = -active.sum(axis=0) / len(index)
                self.weights -= self.learning_rate * grad_w
                self.bias -= self.learning_rate * grad_b
        return self

    def decision_function(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.weights + self.bias

    def predict(self, x):
        return _vote(self.decision_function(x))


@dataclass
class _Node:
    value: np.ndarray
    feature: int = -1
    threshold: float = 0.0
    left: Optional["_Node"] = None
    right: Optional["_Node"] = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


class DecisionTreeCart(BaselineClassifier):
    """
    CART classification tree splitting on weighted Gini impurity.

    Args:
        max_depth (int | None): Depth limit; None grows until leaves are pure.
        feat_frac (float): Fraction of features examined at every split (random forests use < 1).
        seed (int): Seed of the feature subsets.
        n_classes (int): Minimum number of classes.
    """

    name = "decision_tree"

    def __init__(self, max_depth: Optional[int] = BASELINE_DEFAULTS["decision_tree"]["max_depth"],
                 feat_frac: float = 1.0, min_samples_split: int = 2, seed: int = 0, n_classes: int = 4):
        super().__init__(n_classes)
        self.max_depth = max_depth
        self.feat_frac = feat_frac
        self.min_samples_split = min_samples_split
        self.seed = seed

    def fit(self, x, y, sample_weight=None):
        x, y = self._prepare(x, y)
        weights = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        self._rng = np.random.default_rng(self.seed)
        self._n_split_features = max(1, int(round(self.feat_frac * x.shape[1])))
        self.root = self._grow(x, y, weights, depth=0)
        return self

    def _class_weights(self, y, weights) -> np.ndarray:
        return np.bincount(y, weights=weights, minlength=self.n_classes)

    def _grow(self, x, y, weights, depth: int) -> _Node:
        value = self._class_weights(y, weights)
        node = _Node(value)
        pure = np.count_nonzero(value) <= 1
        if pure or len(y) < self.min_samples_split or (self.max_depth is not None and depth >= self.max_depth):
            return node
        split = self._best_split(x, y, weights)
        if split is None:
            return node
        goes_left = x[:, split[0]] <= split[1]
        if goes_left.all() or not goes_left.any():
            return node
        node.feature, node.threshold = split
        node.left = self._grow(x[goes_left], y[goes_left], weights[goes_left], depth + 1)
        node.right = self._grow(x[~goes_left], y[~goes_left], weights[~goes_left], depth + 1)
        return node

    def _best_split(self, x, y, weights) -> Optional[tuple]:
        n_features = x.shape[1]
        if self._n_split_features < n_features:
            features = np.sort(self._rng.choice(n_features, size=self._n_split_features, replace=False))
        else:
            features = np.arange(n_features)
        one_hot = np.zeros((len(y), self.n_classes))
        one_hot[np.arange(len(y)), y] = weights
        total = one_hot.sum(axis=0)

        best_score, best = np.inf, None
        for feature in features:
            order = np.argsort(x[:, feature], kind="stable")
            values = x[order, feature]
            left = np.cumsum(one_hot[order], axis=0)[:-1]
            distinct = values[1:] > values[:-1]
            if not distinct.any():
                continue
            left = left[distinct]
            right = total - left
            left_weight = left.sum(axis=1)
            right_weight = right.sum(axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                impurity = (left_weight - np.where(left_weight > 0, (left ** 2).sum(axis=1) / left_weight, 0.0)
                            + right_weight - np.where(right_weight > 0, (right ** 2).sum(axis=1) / right_weight, 0.0))
            position = int(np.argmin(impurity))
            if impurity[position] < best_score:
                cut = np.flatnonzero(distinct)[position]
                best_score = impurity[position]
                best = (int(feature), float((values[cut] + values[cut + 1]) / 2))
        return best

    def _leaf_values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros((len(x), self.n_classes))
        for i, row in enumerate(x):
            node = self.root
            while not node.is_leaf:
                node = node.left if row[node.feature] <= node.threshold else node.right
            out[i] = node.value
        return out

    def predict(self, x):
        return _vote(self._leaf_values(x))


class RandomForest(BaselineClassifier):
    """Bootstrap-aggregated CART trees with random feature subsets at every split."""

    name = "random_forest"

    def __init__(self, n_trees: int = BASELINE_DEFAULTS["random_forest"]["n_trees"],
                 feat_frac: float = BASELINE_DEFAULTS["random_forest"]["feat_frac"],
                 max_depth: Optional[int] = BASELINE_DEFAULTS["random_forest"]["max_depth"],
                 seed: int = 0, n_classes: int = 4):
        super().__init__(n_classes)
        self.n_trees = n_trees
        self.feat_frac = feat_frac
        self.max_depth = max_depth
        self.seed = seed

    def fit(self, x, y, sample_weight=None):
        x, y = self._prepare(x, y)
        rng = np.random.default_rng(self.seed)
        self.trees = []
        for _ in range(self.n_trees):
            sample = rng.integers(0, len(y), size=len(y))
            tree = DecisionTreeCart(self.max_depth, self.feat_frac, seed=int(rng.integers(2**31)),
                                    n_classes=self.n_classes)
            self.trees.append(tree.fit(x[sample], y[sample]))
        return self

    def predict(self, x):
        votes = np.zeros((len(x), self.n_classes))
        for tree in self.trees:
            votes[np.arange(len(x)), tree.predict(x)] += 1
        return _vote(votes)


class AdaBoostSamme(BaselineClassifier):
    """
    Multi-class AdaBoost (SAMME) over depth-one CART stumps.
    """

    name = "adaboost"

    def __init__(self, n_stumps: int = BASELINE_DEFAULTS["adaboost"]["n_stumps"], n_classes: int = 4):
        super().__init__(n_classes)
        self.n_stumps = n_stumps

    def fit(self, x, y, sample_weight=None):
        x, y = self._prepare(x, y)
        weights = np.full(len(y), 1.0 / len(y))
        self.stumps, self.alphas = [], []
        for round_index in range(self.n_stumps):
            stump = DecisionTreeCart(max_depth=1, n_classes=self.n_classes).fit(x, y, weights)
            miss = stump.predict(x) != y
            error = float(weights[miss].sum() / weights.sum())
            if error >= 1.0 - 1.0 / self.n_classes:
                logger.debug(f"AdaBoost stopped at round {round_index}: stump no better than chance")
                break
            error = max(error, 1e-12)
            alpha = np.log((1.0 - error) / error) + np.log(self.n_classes - 1.0)
            self.stumps.append(stump)
            self.alphas.append(alpha)
            if error <= 1e-12:
                break
            weights = weights * np.exp(alpha * miss)
            weights /= weights.sum()
        return self

    def predict(self, x):
        scores = np.zeros((len(x), self.n_classes))
        for stump, alpha in zip(self.stumps, self.alphas):
            scores[np.arange(len(x)), stump.predict(x)] += alpha
        return _vote(scores)


class GaussianNaiveBayes(BaselineClassifier):
    """Per-class independent Gaussians with variance smoothing."""

    name = "gaussian_nb"

    def __init__(self, var_smoothing: float = 1e-9, n_classes: int = 4):
        super().__init__(n_classes)
        self.var_smoothing = var_smoothing

    def fit(self, x, y, sample_weight=None):
        x, y = self._prepare(x, y)
        epsilon = self.var_smoothing * max(float(x.var(axis=0).max()), 1e-12)
        self.means = np.zeros((self.n_classes, x.shape[1]))
        self.stds = np.ones((self.n_classes, x.shape[1]))
        self.log_priors = np.full(self.n_classes, -np.inf)
        for label in range(self.n_classes):
            members = x[y == label]
            if len(members) == 0:
                continue
            self.means[label] = members.mean(axis=0)
            self.stds[label] = np.sqrt(members.var(axis=0) + epsilon)
            self.log_priors[label] = np.log(len(members) / len(y))
        return self

    def predict(self, x):
        x = np.asarray(x, dtype=float)
        log_likelihood = norm.logpdf(x[:, None, :], self.means[None, :, :], self.stds[None, :, :]).sum(axis=2)
        return _vote(log_likelihood + self.log_priors)


BASELINE_FACTORIES = {
    "knn": lambda seed: KNearestNeighbors(**BASELINE_DEFAULTS["knn"]),
    "linear_svm": lambda seed: LinearSvmSgd(**BASELINE_DEFAULTS["linear_svm"], seed=seed),
    "decision_tree": lambda seed: DecisionTreeCart(**BASELINE_DEFAULTS["decision_tree"], seed=seed),
    "random_forest": lambda seed: RandomForest(**BASELINE_DEFAULTS["random_forest"], seed=seed),
    "adaboost": lambda seed: AdaBoostSamme(**BASELINE_DEFAULTS["adaboost"]),
    "gaussian_nb": lambda seed: GaussianNaiveBayes(**BASELINE_DEFAULTS["gaussian_nb"]),
}

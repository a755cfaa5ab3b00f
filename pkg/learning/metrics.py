"""
Metrics Module.

Confusion matrices with per-class and macro precision, recall and F1 for the archetype
classifiers, and the two-sample Kolmogorov-Smirnov distance used to compare cloned and true
order distributions.
"""

import logging

import numpy as np
from pydantic import BaseModel
from scipy.stats import ks_2samp

logger = logging.getLogger(__name__)


class ClassMetrics(BaseModel):
    precision: float
    recall: float
    f1: float
    support: int
    zero_division: list[str]


class EvalReport(BaseModel):
    class_names: list[str]
    confusion: list[list[int]]
    per_class: list[ClassMetrics]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    accuracy: float

    def f1_rank(self, label: int) -> int:
        """1-based rank of a class by F1, best first; ties share the better rank."""
        scores = [metrics.f1 for metrics in self.per_class]
        return 1 + sum(score > scores[label] for score in scores)


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def confusion_matrix(predictions, truths, n_classes: int) -> np.ndarray:
    matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(matrix, (np.asarray(truths, dtype=np.int64), np.asarray(predictions, dtype=np.int64)), 1)
    return matrix


def evaluate(predictions, truths, class_names: list) -> EvalReport:
    """
    Builds the evaluation report of a label sequence against the truth.

    Metrics with a zero denominator are reported as 0 and named in ``zero_division``.

    Args:
        predictions (array-like): Predicted class indices.
        truths (array-like): True class indices.
        class_names (list): Display name per class index.

    Returns:
        EvalReport: Confusion matrix (rows true, columns predicted) and metrics.
    """
    predictions = np.asarray(predictions)
    truths = np.asarray(truths)
    if len(predictions) != len(truths):
        raise ValueError(f"{len(predictions)} predictions for {len(truths)} truths")
    if len(truths) == 0:
        raise ValueError("cannot evaluate an empty label sequence")
    n_classes = len(class_names)
    matrix = confusion_matrix(predictions, truths, n_classes)
    per_class = []
    for label in range(n_classes):
        true_positive = int(matrix[label, label])
        predicted = int(matrix[:, label].sum())
        actual = int(matrix[label, :].sum())
        flags = []
        if predicted == 0:
            flags.append("precision")
        if actual == 0:
            flags.append("recall")
        precision = true_positive / predicted if predicted else 0.0
        recall = true_positive / actual if actual else 0.0
        if precision + recall == 0:
            flags.append("f1")
        if flags:
            logger.warning(f"Class {class_names[label]}: zero denominator for {', '.join(flags)}, reported as 0")
        per_class.append(ClassMetrics(precision=precision, recall=recall, f1=f1_score(precision, recall),
                                      support=actual, zero_division=flags))
    return EvalReport(
        class_names=list(class_names), confusion=matrix.tolist(), per_class=per_class,
        macro_precision=float(np.mean([m.precision for m in per_class])),
        macro_recall=float(np.mean([m.recall for m in per_class])),
        macro_f1=float(np.mean([m.f1 for m in per_class])),
        accuracy=float(np.trace(matrix) / matrix.sum()))


def ks_statistic(xs, ys) -> float:
    """Supremum distance between the empirical CDFs of two non-empty samples."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) == 0 or len(ys) == 0:
        raise ValueError("both samples must be non-empty")
    return float(ks_2samp(xs, ys).statistic)

"""Classification metrics: accuracy, macro F1, one-vs-rest macro AUC."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from .errors import DomainError, ShapeError
from .optim import softmax


ROW_SUM_TOLERANCE = 1e-9


@dataclass
class EvalBatch:
    """Softmax outputs N×C and integer labels."""
    probabilities: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.probabilities = np.asarray(self.probabilities, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.probabilities.ndim != 2:
            raise ShapeError(f"probabilities must be N×C, got {self.probabilities.shape}")
        if self.labels.shape != (self.probabilities.shape[0],):
            raise ShapeError(
                f"{self.labels.shape[0]} labels for {self.probabilities.shape[0]} rows"
            )
        if self.labels.size:
            if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
                raise DomainError(f"labels must lie in [0, {self.num_classes})")
            row_sums = self.probabilities.sum(axis=1)
            if np.any(np.abs(row_sums - 1.0) > ROW_SUM_TOLERANCE):
                raise DomainError("probability rows must sum to 1")

    @classmethod
    def from_logits(cls, logits: np.ndarray, labels: np.ndarray) -> "EvalBatch":
        return cls(softmax(np.asarray(logits, dtype=np.float64)), labels)

    @property
    def num_classes(self) -> int:
        return self.probabilities.shape[1]

    @property
    def size(self) -> int:
        return self.labels.shape[0]

    @property
    def predictions(self) -> np.ndarray:
        # np.argmax returns the lowest index among ties
        return np.argmax(self.probabilities, axis=1)


@dataclass
class ClassReport:
    label: int
    precision: float
    recall: float
    f1: float
    auc: Optional[float]
    support: int


@dataclass
class MetricRecord:
    accuracy: float
    f1_macro: float
    auc_macro: float
    per_class: Optional[list[ClassReport]] = None
    auc_skipped: list[int] = field(default_factory=list)

    def to_row(self, fold: int, epoch: int, split: str) -> dict:
        """One CSV row: fold,epoch,split,accuracy,f1_macro,auc_macro."""
        return {
            "fold": fold,
            "epoch": epoch,
            "split": split,
            "accuracy": self.accuracy,
            "f1_macro": self.f1_macro,
            "auc_macro": self.auc_macro,
        }


def _require_samples(e: EvalBatch) -> None:
    if e.size == 0:
        raise DomainError("empty evaluation batch")


def confusion_matrix(labels: np.ndarray, predictions: np.ndarray, num_classes: int) -> np.ndarray:
    """C×C counts, rows = true class, columns = predicted class."""
    matrix = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(matrix, (np.asarray(labels), np.asarray(predictions)), 1)
    return matrix


def accuracy(e: EvalBatch) -> float:
    _require_samples(e)
    return float(np.mean(e.predictions == e.labels))


def _precision_recall_f1(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-class P, R, F1; undefined ratios count as 0."""
    tp = np.diag(matrix).astype(np.float64)
    predicted = matrix.sum(axis=0).astype(np.float64)
    actual = matrix.sum(axis=1).astype(np.float64)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, actual, out=np.zeros_like(tp), where=actual > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    return precision, recall, f1


def f1_macro(e: EvalBatch) -> float:
    """Unweighted mean F1 over the classes present in labels or predictions."""
    _require_samples(e)
    predictions = e.predictions
    matrix = confusion_matrix(e.labels, predictions, e.num_classes)
    _, _, f1 = _precision_recall_f1(matrix)
    present = np.union1d(e.labels, predictions)
    return float(f1[present].mean())


def _rank_auc(scores: np.ndarray, positive: np.ndarray) -> float:
    """Mann-Whitney AUC: probability a positive outranks a negative, ties 0.5."""
    ranks = pd.Series(scores).rank(method="average").to_numpy()
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auc_per_class(e: EvalBatch) -> tuple[dict[int, float], list[int]]:
    """One-vs-rest AUC for each class present in the labels.

    Returns the AUC per eligible class and the classes skipped because they
    lack a positive or a negative sample.
    """
    _require_samples(e)
    scores: dict[int, float] = {}
    skipped: list[int] = []
    for cls in range(e.num_classes):
        positive = e.labels == cls
        n_pos = int(positive.sum())
        if n_pos == 0:
            continue
        if n_pos == e.size:
            skipped.append(cls)
            continue
        scores[cls] = _rank_auc(e.probabilities[:, cls], positive)
    return scores, skipped


def auc_macro(e: EvalBatch) -> float:
    scores, skipped = auc_per_class(e)
    if not scores:
        raise DomainError(f"no class eligible for AUC (skipped: {skipped})")
    return float(np.mean(list(scores.values())))


def roc_curve(scores: np.ndarray, positive: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """FPR/TPR points, one per distinct score threshold, starting at (0, 0)."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    order = np.argsort(-scores, kind="mergesort")
    sorted_scores = scores[order]
    sorted_pos = positive[order]
    # last index of each run of equal scores
    boundaries = np.r_[np.nonzero(np.diff(sorted_scores))[0], sorted_scores.size - 1]
    tps = np.cumsum(sorted_pos)[boundaries]
    fps = np.cumsum(~sorted_pos)[boundaries]
    tpr = np.r_[0.0, tps / max(1, positive.sum())]
    fpr = np.r_[0.0, fps / max(1, (~positive).sum())]
    return fpr, tpr


def auc_trapezoid(fpr: np.ndarray, tpr: np.ndarray) -> float:
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def per_class_report(e: EvalBatch) -> list[ClassReport]:
    _require_samples(e)
    matrix = confusion_matrix(e.labels, e.predictions, e.num_classes)
    precision, recall, f1 = _precision_recall_f1(matrix)
    aucs, _ = auc_per_class(e)
    support = matrix.sum(axis=1)
    return [
        ClassReport(
            label=cls,
            precision=float(precision[cls]),
            recall=float(recall[cls]),
            f1=float(f1[cls]),
            auc=aucs.get(cls),
            support=int(support[cls]),
        )
        for cls in range(e.num_classes)
    ]


def evaluate(e: EvalBatch, per_class: bool = False) -> MetricRecord:
    scores, skipped = auc_per_class(e)
    if not scores:
        raise DomainError(f"no class eligible for AUC (skipped: {skipped})")
    return MetricRecord(
        accuracy=accuracy(e),
        f1_macro=f1_macro(e),
        auc_macro=float(np.mean(list(scores.values()))),
        per_class=per_class_report(e) if per_class else None,
        auc_skipped=skipped,
    )

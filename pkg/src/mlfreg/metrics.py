"""Instance-based multi-label evaluation.

Conventions for empty sets: F(empty, empty) = 1 and F is 0 when exactly one
side is empty.  Precision of an empty prediction is 1 when the truth is also
empty and 0 otherwise; recall mirrors this with the roles swapped.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .core import LabelVector


def _check(y: LabelVector, y_pred: LabelVector):
    if y.num_labels != y_pred.num_labels:
        raise ValueError("label vectors come from different label spaces")


def instance_f1(y: LabelVector, y_pred: LabelVector) -> float:
    _check(y, y_pred)
    denom = len(y) + len(y_pred)
    if denom == 0:
        return 1.0
    return 2.0 * len(set(y.labels) & set(y_pred.labels)) / denom


def precision(y: LabelVector, y_pred: LabelVector) -> float:
    _check(y, y_pred)
    if not y_pred.labels:
        return 1.0 if not y.labels else 0.0
    return len(set(y.labels) & set(y_pred.labels)) / len(y_pred)


def recall(y: LabelVector, y_pred: LabelVector) -> float:
    _check(y, y_pred)
    if not y.labels:
        return 1.0 if not y_pred.labels else 0.0
    return len(set(y.labels) & set(y_pred.labels)) / len(y)


@dataclass(frozen=True)
class EvalReport:
    mean_instance_f1: float
    mean_precision: float
    mean_recall: float
    subset_accuracy: float
    hamming_loss: float
    n_instances: int

    def to_text(self) -> str:
        return "".join(f"{k}: {v}\n" for k, v in asdict(self).items())

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def instance_scores(Y: np.ndarray, Y_pred: np.ndarray):
    """Per-instance (F1, precision, recall) for 0/1 matrices."""
    Y = np.asarray(Y, dtype=float)
    Y_pred = np.asarray(Y_pred, dtype=float)
    if Y.shape != Y_pred.shape:
        raise ValueError(f"shape mismatch: {Y.shape} vs {Y_pred.shape}")
    inter = (Y * Y_pred).sum(axis=1)
    n_true = Y.sum(axis=1)
    n_pred = Y_pred.sum(axis=1)
    both_empty = (n_true == 0) & (n_pred == 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        f1 = np.where(both_empty, 1.0, 2.0 * inter / (n_true + n_pred))
        prec = np.where(n_pred == 0, both_empty.astype(float), inter / n_pred)
        rec = np.where(n_true == 0, both_empty.astype(float), inter / n_true)
    return f1, prec, rec


def mean_f1(Y, Y_pred) -> float:
    return float(instance_scores(Y, Y_pred)[0].mean())


def evaluate_matrices(Y, Y_pred) -> EvalReport:
    Y = np.asarray(Y)
    Y_pred = np.asarray(Y_pred)
    if len(Y) == 0:
        raise ValueError("nothing to evaluate")
    f1, prec, rec = instance_scores(Y, Y_pred)
    return EvalReport(
        mean_instance_f1=float(f1.mean()),
        mean_precision=float(prec.mean()),
        mean_recall=float(rec.mean()),
        subset_accuracy=float(np.all(Y == Y_pred, axis=1).mean()),
        hamming_loss=float((Y != Y_pred).mean()),
        n_instances=len(Y),
    )


def evaluate(truths: Sequence[LabelVector], predictions: Sequence[LabelVector]) -> EvalReport:
    if len(truths) != len(predictions):
        raise ValueError(f"{len(truths)} truths but {len(predictions)} predictions")
    if not truths:
        raise ValueError("nothing to evaluate")
    for y, p in zip(truths, predictions):
        _check(y, p)
    return evaluate_matrices(np.array([y.to_bits() for y in truths]), np.array([p.to_bits() for p in predictions]))

"""Confusion-matrix accumulation and IoU metrics.

Rows index ground truth, columns index prediction; IGNORE pixels in the
ground truth contribute to no cell, so they never enter a denominator.
Per-frame matrices merge by plain summation, which makes accumulation
order-independent and safe to parallelize.
"""
from __future__ import annotations

from typing import Iterable, Optional, Sequence

import numpy as np

from .model import IGNORE, FOREGROUND_CLASSES, OutputClass

NUM_CLASSES = len(OutputClass)


class ConfusionMatrix:
    def __init__(self, counts: Optional[np.ndarray] = None):
        if counts is None:
            counts = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (NUM_CLASSES, NUM_CLASSES):
            raise ValueError(f"confusion matrix must be {NUM_CLASSES}x{NUM_CLASSES}")
        if (counts < 0).any():
            raise ValueError("confusion matrix counts must be non-negative")
        self.counts = counts

    @property
    def total_valid(self) -> int:
        return int(self.counts.sum())

    def add(self, gt: np.ndarray, pred: np.ndarray) -> "ConfusionMatrix":
        return accumulate(gt, pred, self)

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)

    def __eq__(self, other) -> bool:
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)


def accumulate(gt: np.ndarray, pred: np.ndarray, cm: Optional[ConfusionMatrix] = None) -> ConfusionMatrix:
    """Add one gt/pred mask pair into ``cm`` (created when omitted).

    The prediction must not contain IGNORE; ground-truth IGNORE pixels are
    dropped before counting.
    """
    if gt.shape != pred.shape:
        raise ValueError(f"gt shape {gt.shape} does not match pred {pred.shape}")
    if cm is None:
        cm = ConfusionMatrix()
    valid = gt != IGNORE
    g = gt[valid].astype(np.int64)
    p = pred[valid].astype(np.int64)
    if (p >= NUM_CLASSES).any():
        raise ValueError("prediction contains values outside the class set")
    if (g >= NUM_CLASSES).any():
        raise ValueError("ground truth contains values outside the class set")
    flat = np.bincount(g * NUM_CLASSES + p, minlength=NUM_CLASSES * NUM_CLASSES)
    cm.counts += flat.reshape(NUM_CLASSES, NUM_CLASSES)
    return cm


def class_iou(cm: ConfusionMatrix, cls: int) -> Optional[float]:
    """IoU for one class, or None when the class is absent from gt and pred."""
    c = int(cls)
    diag = int(cm.counts[c, c])
    denom = int(cm.counts[c, :].sum() + cm.counts[:, c].sum()) - diag
    if denom == 0:
        return None
    return diag / denom


def unweighted_mean(values: Iterable[Optional[float]]) -> Optional[float]:
    """Mean over defined values; None when everything is undefined."""
    defined = [v for v in values if v is not None]
    if not defined:
        return None
    return sum(defined) / len(defined)


def frequency_weighted(values: Sequence[Optional[float]], weights: Sequence[float]) -> Optional[float]:
    """Weighted mean of defined values; None when total weight is zero."""
    total = 0.0
    acc = 0.0
    for value, weight in zip(values, weights):
        if value is None or weight == 0:
            continue
        acc += value * weight
        total += weight
    if total == 0:
        return None
    return acc / total


def miou(cm: ConfusionMatrix, classes: Sequence[int] = FOREGROUND_CLASSES) -> Optional[float]:
    """Unweighted mean IoU over the class set (foreground by default)."""
    return unweighted_mean(class_iou(cm, c) for c in classes)


def fwiou(cm: ConfusionMatrix, classes: Sequence[int] = FOREGROUND_CLASSES) -> Optional[float]:
    """IoU weighted by each class's ground-truth pixel frequency."""
    values = [class_iou(cm, c) for c in classes]
    weights = [float(cm.counts[int(c), :].sum()) for c in classes]
    return frequency_weighted(values, weights)


def metrics_summary(cm: ConfusionMatrix) -> dict:
    """All metrics for one matrix, ready for serialization."""
    per_class = {}
    for cls in OutputClass:
        value = class_iou(cm, cls)
        per_class[cls.name.lower()] = value
    return {
        "class_iou": per_class,
        "miou": miou(cm),
        "fwiou": fwiou(cm),
        "total_valid_pixels": cm.total_valid,
    }

"""Evaluation metrics: confusion matrix, weighted and unweighted average recall.

WAR is plain accuracy (trace over total). UAR averages per-class recall over
the classes that actually appear as true labels; classes with no true samples
are excluded from the mean and reported as absent rather than counted as 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class EvalReport:
    """Counts in ``confusion`` are row = true class, column = predicted class."""

    confusion: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.confusion)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise InputError(f"confusion matrix must be square, got shape {m.shape}")
        if m.min() < 0:
            raise InputError("confusion counts must be nonnegative")
        object.__setattr__(self, "confusion", m.astype(np.int64))

    @property
    def classes(self) -> int:
        return self.confusion.shape[0]

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    @property
    def war(self) -> float:
        return float(np.trace(self.confusion) / self.total)

    @property
    def per_class_recall(self) -> list:
        """Recall per class, None where the class has no true samples."""
        row_sums = self.confusion.sum(axis=1)
        diag = np.diag(self.confusion)
        return [float(diag[c] / row_sums[c]) if row_sums[c] > 0 else None
                for c in range(self.classes)]

    @property
    def absent_classes(self) -> list:
        return [c for c, r in enumerate(self.per_class_recall) if r is None]

    @property
    def uar(self) -> float:
        present = [r for r in self.per_class_recall if r is not None]
        return float(np.mean(present))

    def merge(self, other: "EvalReport") -> "EvalReport":
        """Pool counts from two disjoint evaluation passes."""
        if other.confusion.shape != self.confusion.shape:
            raise InputError(f"cannot merge {other.confusion.shape} into {self.confusion.shape}")
        return EvalReport(self.confusion + other.confusion)

    def lines(self) -> str:
        """key=value scalars, one per line; absent classes say so explicitly."""
        out = [f"classes={self.classes}", f"total={self.total}",
               f"war={self.war:.6f}", f"uar={self.uar:.6f}"]
        for c, r in enumerate(self.per_class_recall):
            out.append(f"recall_{c}=absent" if r is None else f"recall_{c}={r:.6f}")
        return "\n".join(out) + "\n"

    def confusion_csv(self) -> str:
        return "\n".join(",".join(str(v) for v in row) for row in self.confusion) + "\n"


def uar_war(predictions, labels, classes: int) -> EvalReport:
    """Build an EvalReport from parallel prediction and label sequences."""
    preds = np.asarray(predictions)
    labs = np.asarray(labels)
    if preds.size == 0:
        raise InputError("empty evaluation")
    if preds.shape != labs.shape or preds.ndim != 1:
        raise InputError(f"predictions {preds.shape} and labels {labs.shape} must be equal-length 1-d")
    if classes < 2:
        raise InputError(f"need at least 2 classes, got {classes}")
    for name, arr in (("prediction", preds), ("label", labs)):
        if arr.min() < 0 or arr.max() >= classes:
            raise InputError(f"{name} outside [0, {classes})")
    confusion = np.zeros((classes, classes), dtype=np.int64)
    np.add.at(confusion, (labs.astype(np.intp), preds.astype(np.intp)), 1)
    return EvalReport(confusion)

"""Confusion matrices and the classification metrics derived from them.

Rows of a [`ConfusionMatrix`][dtkd.metrics.ConfusionMatrix] are the actual
classes and columns the predicted ones. Precision, recall and F1 are averaged
over classes without weights, and a metric with a zero denominator is 0.
"""
from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from dtkd.exceptions import EmptyMatrixError, LabelIndexError, ShapeMismatchError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """`K x K` counts of actual (rows) against predicted (columns) classes.

    Attributes:
        counts: The integer counts.
        class_names: One name per class.
    """

    counts: np.ndarray
    class_names: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:  # noqa: PLR2004
            raise ShapeMismatchError("ConfusionMatrix", counts.shape)
        if np.any(counts < 0):
            raise ValueError("Confusion counts must be non-negative")

        names = tuple(self.class_names) or tuple(str(k) for k in range(len(counts)))
        if len(names) != len(counts):
            raise ShapeMismatchError(
                "ConfusionMatrix names",
                counts.shape,
                (len(names),),
            )

        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "class_names", names)

    @property
    def num_classes(self) -> int:
        """K."""
        return len(self.counts)

    @property
    def total(self) -> int:
        """Number of samples counted."""
        return int(self.counts.sum())

    @property
    def true_positives(self) -> np.ndarray:
        """The diagonal."""
        return np.diag(self.counts).copy()

    @property
    def support(self) -> np.ndarray:
        """Samples per actual class, the row sums."""
        return self.counts.sum(axis=1)

    def df(self) -> pd.DataFrame:
        """The counts with class names on both axes."""
        return pd.DataFrame(
            self.counts,
            index=pd.Index(self.class_names, name="actual"),
            columns=pd.Index(self.class_names, name="predicted"),
        )

    def ordered_by_recall(self) -> ConfusionMatrix:
        """Classes reordered by decreasing recall, rows and columns alike."""
        support = np.maximum(self.support, 1)
        order = np.argsort(-(self.true_positives / support), kind="stable")
        return ConfusionMatrix(
            self.counts[np.ix_(order, order)],
            tuple(self.class_names[i] for i in order),
        )

    def to_csv(self, path: Path | str) -> None:
        """Write the grid with a header row and an `actual` column."""
        self.df().to_csv(path)

    @classmethod
    def from_csv(cls, path: Path | str) -> ConfusionMatrix:
        """Read a grid written by [`to_csv`][dtkd.metrics.ConfusionMatrix.to_csv]."""
        df = pd.read_csv(path, index_col=0)
        return cls(df.to_numpy(), tuple(str(c) for c in df.columns))


def confusion_matrix(
    preds: Sequence[int] | np.ndarray,
    labels: Sequence[int] | np.ndarray,
    num_classes: int,
    class_names: Sequence[str] = (),
) -> ConfusionMatrix:
    """Count `(actual, predicted)` pairs.

    Raises:
        ShapeMismatchError: If `preds` and `labels` differ in length.
        LabelIndexError: If a value is outside `[0, K)`.
    """
    p = np.asarray(preds, dtype=np.int64).reshape(-1)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if p.shape != y.shape:
        raise ShapeMismatchError("confusion_matrix", p.shape, y.shape)

    for values in (p, y):
        bad = (values < 0) | (values >= num_classes)
        if np.any(bad):
            raise LabelIndexError(int(values[bad][0]), num_classes)

    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (y, p), 1)
    return ConfusionMatrix(counts, tuple(class_names))


@dataclass(frozen=True, kw_only=True)
class ClassMetrics:
    """Precision, recall and F1 of one class."""

    name: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True, kw_only=True)
class MetricsReport:
    """Accuracy and macro-averaged metrics, all fractions in `[0, 1]`.

    Attributes:
        accuracy: `trace / total`.
        precision: Unweighted mean of per-class precision.
        recall: Unweighted mean of per-class recall.
        f1: Unweighted mean of per-class F1.
        per_class: The per-class values.
    """

    accuracy: float
    precision: float
    recall: float
    f1: float
    per_class: tuple[ClassMetrics, ...]

    def percent(self) -> dict[str, str]:
        """The headline metrics rendered as percentages with two decimals."""
        keys = ("accuracy", "precision", "recall", "f1")
        return {k: f"{100 * getattr(self, k):.2f}%" for k in keys}

    def to_dict(self) -> dict[str, Any]:
        """A JSON-serializable representation."""
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> MetricsReport:
        """Inverse of [`to_dict`][dtkd.metrics.MetricsReport.to_dict]."""
        per_class = tuple(ClassMetrics(**c) for c in d["per_class"])
        return cls(**{**d, "per_class": per_class})

    def per_class_df(self) -> pd.DataFrame:
        """Per-class metrics indexed by class name."""
        return pd.DataFrame([asdict(c) for c in self.per_class]).set_index("name")


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den != 0)
    return out


def metrics_from_cm(cm: ConfusionMatrix) -> MetricsReport:
    """Per-class and macro precision, recall and F1 plus accuracy.

    Raises:
        EmptyMatrixError: If the matrix holds no counts.
    """
    if cm.total == 0:
        raise EmptyMatrixError("Cannot compute metrics of an empty confusion matrix")

    tp = cm.true_positives.astype(np.float64)
    predicted = cm.counts.sum(axis=0).astype(np.float64)
    actual = cm.support.astype(np.float64)

    precision = _safe_div(tp, predicted)
    recall = _safe_div(tp, actual)
    f1 = _safe_div(2 * precision * recall, precision + recall)

    per_class = tuple(
        ClassMetrics(
            name=name,
            precision=float(precision[k]),
            recall=float(recall[k]),
            f1=float(f1[k]),
            support=int(actual[k]),
        )
        for k, name in enumerate(cm.class_names)
    )
    return MetricsReport(
        accuracy=int(np.trace(cm.counts)) / cm.total,
        precision=float(precision.mean()),
        recall=float(recall.mean()),
        f1=float(f1.mean()),
        per_class=per_class,
    )

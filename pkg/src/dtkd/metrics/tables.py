from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np
import pandas as pd

from dtkd.exceptions import ShapeMismatchError
from dtkd.metrics.confusion import ConfusionMatrix

logger = logging.getLogger(__name__)

TP_COLUMNS = ("TP1", "TP2", "delta", "error_decrement")


def _true_positives(x: ConfusionMatrix | Sequence[int] | np.ndarray) -> np.ndarray:
    if isinstance(x, ConfusionMatrix):
        return x.true_positives
    return np.asarray(x, dtype=np.int64)


def tp_change_table(
    tl: ConfusionMatrix | Sequence[int] | np.ndarray,
    kd: ConfusionMatrix | Sequence[int] | np.ndarray,
    n_per_class: int | Sequence[int] | None = None,
    class_names: Sequence[str] = (),
    *,
    sort: bool = True,
) -> pd.DataFrame:
    """Per-class true positives before (`TP1`) and after (`TP2`) distillation.

    `error_decrement` is `(TP2 - TP1) / (N - TP1) * 100`, the share of the
    errors of the first model that the second one fixes. It is NaN where the
    first model already has no error. The last row, `mean`, averages every
    column, skipping NaN.

    Args:
        tl: Confusion matrix or true positives of the TL model.
        kd: Confusion matrix or true positives of the TL+KD model.
        n_per_class: Samples per class, the row sums of `tl` when `None`.
        class_names: Row labels, taken from `tl` when it is a matrix.
        sort: Order classes by decreasing `TP2`.

    Raises:
        ShapeMismatchError: If the two inputs cover different classes or
            different per-class totals.
    """
    if isinstance(tl, ConfusionMatrix) and isinstance(kd, ConfusionMatrix):
        if not np.array_equal(tl.support, kd.support):
            raise ShapeMismatchError(
                "tp_change_table supports",
                tl.support.shape,
                kd.support.shape,
            )
    if isinstance(tl, ConfusionMatrix):
        class_names = class_names or tl.class_names
        if n_per_class is None:
            n_per_class = tl.support

    tp1 = _true_positives(tl)
    tp2 = _true_positives(kd)
    if tp1.shape != tp2.shape:
        raise ShapeMismatchError("tp_change_table", tp1.shape, tp2.shape)
    if n_per_class is None:
        raise ValueError(
            "n_per_class is required when true positives are given directly",
        )

    n = np.broadcast_to(np.asarray(n_per_class, dtype=np.int64), tp1.shape)
    delta = tp2 - tp1
    errors = (n - tp1).astype(np.float64)
    decrement = np.full(tp1.shape, np.nan)
    np.divide(delta * 100.0, errors, out=decrement, where=errors != 0)
    if np.any(errors == 0):
        logger.warning("Error decrement is undefined for classes without TL errors")

    names = list(class_names) or [str(k) for k in range(len(tp1))]
    table = pd.DataFrame(
        {"TP1": tp1, "TP2": tp2, "delta": delta, "error_decrement": decrement},
        index=pd.Index(names, name="class"),
    )
    if sort:
        table = table.sort_values("TP2", ascending=False, kind="stable")

    table = table.astype(np.float64)
    table.loc["mean"] = table.mean(axis=0, skipna=True)
    return table

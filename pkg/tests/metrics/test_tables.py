from __future__ import annotations

import numpy as np
import pytest

from dtkd.exceptions import ShapeMismatchError
from dtkd.metrics import ConfusionMatrix, tp_change_table

CLASSES = (
    "automobile",
    "ship",
    "frog",
    "airplane",
    "horse",
    "deer",
    "truck",
    "bird",
    "dog",
    "cat",
)
TL = [958, 977, 943, 933, 916, 947, 948, 940, 857, 858]
KD = [982, 975, 975, 972, 971, 967, 965, 946, 925, 912]
DECREMENT = [57.14, -8.7, 56.14, 58.21, 65.48, 37.74, 32.69, 10.0, 47.55, 38.03]


def test_true_positive_changes() -> None:
    table = tp_change_table(TL, KD, 1000, CLASSES)

    assert list(table.index) == [*CLASSES, "mean"]
    np.testing.assert_array_equal(table["delta"].iloc[:-1], np.subtract(KD, TL))
    np.testing.assert_allclose(table["error_decrement"].iloc[:-1], DECREMENT, atol=0.01)
    assert table.at["automobile", "error_decrement"] == pytest.approx(57.14, abs=0.01)
    assert table.at["ship", "error_decrement"] == pytest.approx(-8.70, abs=0.01)


def test_mean_row() -> None:
    mean = tp_change_table(TL, KD, 1000, CLASSES).loc["mean"]

    assert mean["TP1"] == pytest.approx(927.7)
    assert mean["TP2"] == pytest.approx(959.0)
    assert mean["delta"] == pytest.approx(31.3)
    assert mean["error_decrement"] == pytest.approx(39.42, abs=0.01)


def test_sorted_by_tp2() -> None:
    shuffled = [7, 1, 9, 0, 4, 2, 8, 3, 6, 5]
    table = tp_change_table(
        np.take(TL, shuffled),
        np.take(KD, shuffled),
        1000,
        [CLASSES[i] for i in shuffled],
    )
    assert list(table.index[:-1]) == list(CLASSES)


def test_from_confusion_matrices() -> None:
    tl = ConfusionMatrix(np.array([[8, 2], [4, 6]]), ("a", "b"))
    kd = ConfusionMatrix(np.array([[9, 1], [1, 9]]), ("a", "b"))
    table = tp_change_table(tl, kd, sort=False)

    np.testing.assert_array_equal(table["TP2"].iloc[:-1], [9, 9])
    np.testing.assert_allclose(table["error_decrement"].iloc[:-1], [50.0, 75.0])


def test_no_tl_errors_is_nan() -> None:
    table = tp_change_table([10, 5], [10, 7], 10, sort=False)
    assert np.isnan(table.at["0", "error_decrement"])
    assert table.at["mean", "error_decrement"] == pytest.approx(40.0)


def test_mismatched_inputs() -> None:
    with pytest.raises(ShapeMismatchError):
        tp_change_table([1, 2], [1, 2, 3], 10)
    with pytest.raises(ValueError, match="n_per_class"):
        tp_change_table([1, 2], [1, 2])
    with pytest.raises(ShapeMismatchError):
        tp_change_table(
            ConfusionMatrix(np.array([[1, 0], [0, 1]])),
            ConfusionMatrix(np.array([[2, 0], [0, 1]])),
        )

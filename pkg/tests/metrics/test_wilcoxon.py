from __future__ import annotations

import numpy as np
import pytest
from pytest_cases import case, parametrize, parametrize_with_cases

from dtkd.exceptions import AllZeroDifferencesError, ShapeMismatchError, TooLongError
from dtkd.metrics import null_counts, paired_comparison, wilcoxon_signed_rank_exact

# Background diff and background pos of ten winning-class samples, TL then TL+KD
DIFF_TL = [-816, -297, 5385, 27, 619, 1041, 500, 211, 2307, 1374]
DIFF_KD = [166, 390, 5063, -375, 912, 630, 1752, 796, 1841, 2000]
POS_TL = [18587, 13821, 30261, 3138, 7269, 9059, 8131, 8003, 10825, 10968]
POS_KD = [12327, 9726, 21938, 4802, 8670, 6302, 9657, 8272, 7560, 9585]
FG_DIFF_TL = [284, 3141, 1682, 4897, 2610, 3157, 2681, 1556, 2919, 5035]
FG_DIFF_KD = [1509, 5402, 2926, 12703, 5130, 9266, 3702, 2881, 5048, 6181]


@case(tags=["golden"])
def case_same_sign() -> tuple[list[int], list[int], float]:
    return FG_DIFF_TL, FG_DIFF_KD, 2 / 1024


@case(tags=["golden"])
def case_background_diff() -> tuple[list[int], list[int], float]:
    return DIFF_TL, DIFF_KD, 198 / 1024


@case(tags=["golden"])
def case_background_pos() -> tuple[list[int], list[int], float]:
    return POS_TL, POS_KD, 164 / 1024


@parametrize_with_cases("x, y, expected", cases=".", has_tag="golden")
def test_exact_p_values(x: list[int], y: list[int], expected: float) -> None:
    result = wilcoxon_signed_rank_exact(x, y)
    assert result.p_value == expected
    assert wilcoxon_signed_rank_exact(y, x).p_value == expected


def test_statistic() -> None:
    result = wilcoxon_signed_rank_exact(DIFF_TL, DIFF_KD)
    assert result.w_plus == 14
    assert result.w_minus == 41
    assert result.statistic == 14
    assert result.n == 10
    assert result.zeros_dropped == 0


def test_zeros_are_dropped_and_ties_averaged() -> None:
    result = wilcoxon_signed_rank_exact([1, 2, 3, 5], [1, 1, 1, 1])
    assert result.zeros_dropped == 1
    assert result.n == 3
    assert result.w_plus == 6

    tied = wilcoxon_signed_rank_exact([2, 0, 5], [1, 1, 1])
    assert tied.w_plus == 1.5 + 3
    assert tied.w_minus == 1.5


@parametrize("alternative, expected", [("greater", 1 / 1024), ("less", 1.0)])
def test_one_sided(alternative: str, expected: float) -> None:
    result = wilcoxon_signed_rank_exact(FG_DIFF_KD, FG_DIFF_TL, alternative=alternative)
    assert result.p_value == expected


def test_null_counts() -> None:
    counts = null_counts(np.array([2, 4, 6]))
    assert counts.sum() == 8
    assert counts[0] == 1
    assert counts[6] == 2
    assert counts[12] == 1


def test_errors() -> None:
    with pytest.raises(AllZeroDifferencesError):
        wilcoxon_signed_rank_exact([1, 2], [1, 2])
    with pytest.raises(ShapeMismatchError):
        wilcoxon_signed_rank_exact([1, 2], [1])
    with pytest.raises(TooLongError):
        wilcoxon_signed_rank_exact(np.arange(26) + 1, np.zeros(26))


def test_paired_comparison() -> None:
    comparison = paired_comparison(POS_TL, POS_KD)
    assert (comparison.x_greater, comparison.y_greater, comparison.ties) == (6, 4, 0)
    d = comparison.to_dict()
    assert d["wilcoxon_p_value"] == 164 / 1024
    assert d["n_pairs"] == 10


def test_matches_scipy() -> None:
    stats = pytest.importorskip("scipy.stats")
    rng = np.random.default_rng(0)
    for _ in range(10):
        x, y = rng.normal(size=12), rng.normal(size=12)
        expected = stats.wilcoxon(x, y, method="exact").pvalue
        assert wilcoxon_signed_rank_exact(x, y).p_value == pytest.approx(expected)

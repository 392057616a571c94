from __future__ import annotations

from dtkd.attribution import FgBgRow, FgBgTable
from dtkd.cli.experiments import wilcoxon_report


def _table(n: int) -> FgBgTable:
    table = FgBgTable()
    for i in range(n):
        for variant, fg_pos in (("tl", i + 1), ("tl_kd", 0)):
            table.add(
                FgBgRow(
                    sample_id=i,
                    class_name="a",
                    variant=variant,
                    fg_pos=fg_pos,
                    fg_neg=0,
                    bg_pos=1,
                    bg_neg=0,
                ),
            )
    return table


def test_report_names_the_comparison_beyond_the_exact_limit() -> None:
    report = wilcoxon_report(_table(26), seed=3)

    assert report["fg_diff"]["error"] == "TooLongError"
    assert report["fg_diff"]["message"].startswith("fg_diff over 26 pairs")
    assert report["fg_pos"]["error"] == "TooLongError"
    assert report["bg_diff"]["error"] == "AllZeroDifferencesError"
    assert report["bg_pos"]["error"] == "AllZeroDifferencesError"


def test_report_of_a_small_table() -> None:
    report = wilcoxon_report(_table(10), seed=0)
    assert report["fg_diff"]["n_pairs"] == 10
    assert report["fg_diff"]["x_greater"] == 10
    assert report["bg_pos"]["error"] == "AllZeroDifferencesError"

"""Aggregation over seeds and variants."""
from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence

import pandas as pd

from dtkd.metrics.confusion import MetricsReport
from dtkd.training import TrainingHistory, epochs_to_threshold

logger = logging.getLogger(__name__)

HEADLINE = ("accuracy", "precision", "recall", "f1")


def summarize_runs(
    reports: Mapping[str, Sequence[MetricsReport]],
    *,
    baseline: str | None = None,
    improved: str | None = None,
) -> pd.DataFrame:
    """Mean and sample standard deviation of the headline metrics per variant.

    Args:
        reports: Reports of each seed, by variant name.
        baseline: Variant subtracted in the `improvement` row.
        improved: Variant the baseline is subtracted from.

    Returns:
        One row per variant with `<metric>_mean` and `<metric>_std` columns,
        plus an `improvement` row of mean differences when both variants are
        named.
    """
    rows = {}
    for variant, runs in reports.items():
        values = pd.DataFrame([{k: getattr(r, k) for k in HEADLINE} for r in runs])
        row = {}
        for metric in HEADLINE:
            row[f"{metric}_mean"] = values[metric].mean()
            row[f"{metric}_std"] = values[metric].std(ddof=1)
        rows[variant] = row

    table = pd.DataFrame.from_dict(rows, orient="index")
    table.index.name = "variant"

    if baseline is not None and improved is not None:
        diff = {
            f"{m}_mean": table.at[improved, f"{m}_mean"] - table.at[baseline, f"{m}_mean"]
            for m in HEADLINE
        }
        table.loc["improvement"] = pd.Series(diff)

    return table


def convergence_comparison(
    histories: Mapping[str, Mapping[int, TrainingHistory]],
    *,
    reference: str,
) -> pd.DataFrame:
    """Epochs each variant needs to reach the reference variant's best accuracy.

    The threshold of a seed is the best validation accuracy of `reference`
    under that seed.

    Returns:
        One row per `(variant, seed)` with the threshold and the epoch it was
        first reached, `NA` if never.
    """
    rows = []
    for seed, ref_history in histories[reference].items():
        threshold = max(ref_history.val_acc)
        for variant, by_seed in histories.items():
            if seed not in by_seed:
                continue
            rows.append(
                {
                    "variant": variant,
                    "seed": seed,
                    "threshold": threshold,
                    "epochs": epochs_to_threshold(by_seed[seed], threshold),
                },
            )

    table = pd.DataFrame(rows, columns=["variant", "seed", "threshold", "epochs"])
    table["epochs"] = table["epochs"].astype("Int64")
    return table

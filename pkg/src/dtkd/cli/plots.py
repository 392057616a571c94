"""SVG line plots of training histories and sweeps.

Plots are drawn on bare [`Figure`][matplotlib.figure.Figure]s, so no pyplot
backend is involved. The SVG ids are salted with the `svg_hashsalt` option and
the date metadata is dropped, which makes identical inputs give identical
files.
"""
from __future__ import annotations

import logging
from collections.abc import Mapping
from pathlib import Path

import matplotlib as mpl
import pandas as pd
from matplotlib.figure import Figure

from dtkd.exceptions import MalformedCSVError
from dtkd.options import get_option
from dtkd.training import TrainingHistory

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ("parameter", "value")


def _save(fig: Figure, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with mpl.rc_context({"svg.hashsalt": get_option("svg_hashsalt")}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    logger.debug(f"Wrote plot {path}")
    return path


def history_label(path: Path | str) -> str:
    """`<run>/<seed>` for a path ending in `<run>/<seed>/history.csv`."""
    path = Path(path)
    return f"{path.parent.parent.name}/{path.parent.name}"


def read_histories(
    history_csvs: Mapping[str, Path | str],
) -> dict[str, TrainingHistory]:
    """Read every history, keyed by its label.

    Raises:
        MalformedCSVError: If a file cannot be parsed, misses a column or holds
            no epoch.
    """
    histories = {}
    for label, path in history_csvs.items():
        history = TrainingHistory.from_csv(path)
        if len(history) == 0:
            raise MalformedCSVError(f"History {path} has no epochs")
        histories[label] = history
    return histories


def convergence_plot(histories: Mapping[str, TrainingHistory]) -> Figure:
    """Validation accuracy per epoch, one line per history."""
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    for label, history in histories.items():
        epochs = [r.epoch for r in history]
        ax.plot(epochs, history.val_acc, marker=".", label=label)
    ax.set_xlabel("Epoch")
    ax.set_ylabel("Validation accuracy")
    ax.set_title("Convergence")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return fig


def read_sweep(path: Path | str) -> pd.DataFrame:
    """Read `sweep_summary.csv`.

    Raises:
        MalformedCSVError: If the file cannot be parsed, is empty or lacks the
            `parameter` and `value` columns or a variant column.
    """
    try:
        df = pd.read_csv(path)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise MalformedCSVError(f"Cannot parse {path}: {e}") from e

    missing = set(SWEEP_COLUMNS) - set(df.columns)
    if missing:
        raise MalformedCSVError(f"Sweep {path} is missing columns {sorted(missing)}")
    if df.empty or not _variants(df):
        raise MalformedCSVError(f"Sweep {path} has no accuracies")
    return df.sort_values("value", kind="stable")


def _variants(df: pd.DataFrame) -> list[str]:
    return [c for c in df.columns if c not in (*SWEEP_COLUMNS, "improvement")]


def sweep_plot(summary: pd.DataFrame) -> Figure:
    """Final accuracy per swept value, one line per variant."""
    parameter = str(summary["parameter"].iloc[0])
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    for variant in _variants(summary):
        ax.plot(summary["value"], summary[variant], marker="o", label=variant)
    ax.set_xlabel(parameter)
    ax.set_ylabel("Final validation accuracy")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return fig


def improvement_plot(summary: pd.DataFrame) -> Figure:
    """Accuracy of TL+KD minus TL per swept value."""
    parameter = str(summary["parameter"].iloc[0])
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    ax.plot(summary["value"], summary["improvement"], marker="o", color="tab:green")
    ax.axhline(0.0, color="gray", linewidth=0.8)
    ax.set_xlabel(parameter)
    ax.set_ylabel("Accuracy improvement")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return fig


def emit_plots(
    out: Path | str,
    *,
    history_csvs: Mapping[str, Path | str] | None = None,
    sweep_csv: Path | str | None = None,
) -> list[Path]:
    """Render `convergence.svg` and, for a sweep, `sweep.svg` and `improvement.svg`.

    Every input is read before anything is written, so a malformed CSV leaves
    no plot behind.

    Args:
        out: Directory of the SVG files.
        history_csvs: `history.csv` files keyed by legend label.
        sweep_csv: A `sweep_summary.csv`.

    Raises:
        MalformedCSVError: If any input is malformed or empty.
    """
    histories = read_histories(history_csvs) if history_csvs else {}
    summary = read_sweep(sweep_csv) if sweep_csv is not None else None

    out = Path(out)
    written = []
    if histories:
        written.append(_save(convergence_plot(histories), out / "convergence.svg"))
    if summary is not None:
        written.append(_save(sweep_plot(summary), out / "sweep.svg"))
        if "improvement" in summary.columns:
            written.append(_save(improvement_plot(summary), out / "improvement.svg"))
    return written

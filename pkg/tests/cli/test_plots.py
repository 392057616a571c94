from __future__ import annotations

from pathlib import Path

import pandas as pd
import pytest

from dtkd.cli.plots import emit_plots, history_label, read_sweep
from dtkd.exceptions import MalformedCSVError
from dtkd.training import EpochRecord, TrainingHistory


def _history(path: Path, accs: list[float]) -> Path:
    history = TrainingHistory()
    for epoch, acc in enumerate(accs, start=1):
        history.add(EpochRecord(epoch=epoch, train_loss=1 - acc, val_acc=acc, lr=0.01))
    path.parent.mkdir(parents=True, exist_ok=True)
    history.to_csv(path)
    return path


@pytest.fixture()
def histories(tmp_path: Path) -> dict[str, Path]:
    tl = _history(tmp_path / "runs" / "tl" / "0" / "history.csv", [0.3, 0.5, 0.6])
    kd = _history(tmp_path / "runs" / "tl_kd" / "0" / "history.csv", [0.4, 0.6])
    return {history_label(tl): tl, history_label(kd): kd}


@pytest.fixture()
def sweep_csv(tmp_path: Path) -> Path:
    path = tmp_path / "sweep_summary.csv"
    pd.DataFrame(
        {
            "parameter": ["train_fraction"] * 3,
            "value": [1.0, 0.1, 0.5],
            "tl": [0.8, 0.4, 0.7],
            "tl_kd": [0.82, 0.5, 0.75],
            "improvement": [0.02, 0.1, 0.05],
        },
    ).to_csv(path, index=False)
    return path


def test_history_label() -> None:
    assert history_label("out/tl_kd/42/history.csv") == "tl_kd/42"


def test_convergence_plot(tmp_path: Path, histories: dict[str, Path]) -> None:
    assert sorted(histories) == ["tl/0", "tl_kd/0"]
    written = emit_plots(tmp_path / "plots", history_csvs=histories)
    assert written == [tmp_path / "plots" / "convergence.svg"]

    svg = written[0].read_text()
    assert svg.lstrip().startswith("<?xml")
    assert "<svg" in svg


def test_sweep_plots(tmp_path: Path, sweep_csv: Path) -> None:
    written = emit_plots(tmp_path / "plots", sweep_csv=sweep_csv)
    assert [p.name for p in written] == ["sweep.svg", "improvement.svg"]
    assert read_sweep(sweep_csv)["value"].tolist() == [0.1, 0.5, 1.0]


def test_plots_are_reproducible(
    tmp_path: Path,
    histories: dict[str, Path],
    sweep_csv: Path,
) -> None:
    first = emit_plots(tmp_path / "a", history_csvs=histories, sweep_csv=sweep_csv)
    second = emit_plots(tmp_path / "b", history_csvs=histories, sweep_csv=sweep_csv)
    for a, b in zip(first, second, strict=True):
        assert a.read_bytes() == b.read_bytes()


def test_empty_history_writes_nothing(tmp_path: Path, histories: dict[str, Path]) -> None:
    empty = tmp_path / "empty" / "history.csv"
    empty.parent.mkdir()
    empty.write_text("epoch,train_loss,val_acc,lr\n")

    with pytest.raises(MalformedCSVError, match="no epochs"):
        emit_plots(tmp_path / "plots", history_csvs={**histories, "empty": empty})
    assert not (tmp_path / "plots").exists()


def test_malformed_sweep(tmp_path: Path) -> None:
    path = tmp_path / "sweep_summary.csv"
    path.write_text("value,tl\n0.1,0.5\n")
    with pytest.raises(MalformedCSVError, match="parameter"):
        read_sweep(path)

    path.write_text("parameter,value\ntrain_fraction,0.1\n")
    with pytest.raises(MalformedCSVError, match="no accuracies"):
        read_sweep(path)

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from dtkd.cli.__main__ import SUBCOMMANDS, build_parser, main
from dtkd.store import PathBucket

SMALL = """
dataset = synthetic
source_classes = 2,3
target_classes = 0,1
n_per_class = 4
val_per_class = 3
image_size = 8
seeds = 0,1
max_epochs = 2
batch_size = 4
learning_rate = 0.05
grid = 2x2
background_size = 4
attribution_samples = 3
"""


@pytest.fixture()
def config(tmp_path: Path) -> Path:
    path = tmp_path / "study.cfg"
    path.write_text(SMALL + f"out = {tmp_path / 'out'}\n")
    return path


def _error(capsys: pytest.CaptureFixture[str]) -> dict:
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_every_subcommand_is_parsed() -> None:
    parser = build_parser()
    for subcommand in SUBCOMMANDS:
        assert parser.parse_args([subcommand]).subcommand == subcommand


def test_plot_without_inputs_is_a_config_error(
    capsys: pytest.CaptureFixture[str],
) -> None:
    assert main(["plot"]) == 2
    error = _error(capsys)
    assert error["error"] == "ConfigError"
    assert error["subcommand"] == "plot"


def test_invalid_config_file(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    path = tmp_path / "bad.cfg"
    path.write_text("alpha = 2\n")
    assert main(["evaluate", "--config", str(path)]) == 2
    assert "alpha" in _error(capsys)["message"]


def test_finetune_needs_a_pretrained_backbone(
    config: Path,
    capsys: pytest.CaptureFixture[str],
) -> None:
    assert main(["finetune", "--config", str(config), "--seed", "0"]) == 2
    assert "dtkd pretrain" in _error(capsys)["message"]


def test_sweep_needs_exactly_one_parameter(
    config: Path,
    capsys: pytest.CaptureFixture[str],
) -> None:
    args = ["sweep", "--config", str(config), "--train-fraction", "0.5", "1"]
    assert main([*args, "--label-noise-fraction", "0.1"]) == 2
    assert "exactly one" in _error(capsys)["message"]


def test_gradcheck(tmp_path: Path) -> None:
    out = tmp_path / "out"
    assert main(["gradcheck", "--out", str(out), "--n-configs", "17", "-q"]) == 0

    bucket = PathBucket(out / "gradcheck")
    report = bucket["gradcheck.json"].load()
    assert report["passed"]
    assert report["n_configs"] == 17
    assert len(bucket["gradcheck.csv"].load()) == 17


def test_corrupt_preview(config: Path, tmp_path: Path) -> None:
    assert main(["corrupt-preview", "--config", str(config), "--count", "2"]) == 0

    bucket = PathBucket(tmp_path / "out" / "corrupt-preview")
    assert sorted(bucket) == [
        "center_black_0.ppm",
        "center_black_1.ppm",
        "original_0.ppm",
        "original_1.ppm",
        "quarter_black_0.ppm",
        "quarter_black_1.ppm",
    ]
    quarter = bucket["quarter_black_0.ppm"].load()
    assert quarter.shape == (3, 8, 8)
    assert (quarter.sum(axis=0) == 0).sum() >= 16


@pytest.mark.slow()
def test_full_study(config: Path, tmp_path: Path) -> None:
    out = tmp_path / "out"
    cfg = ["--config", str(config), "-q"]

    assert main(["pretrain", *cfg]) == 0
    for run in ("pretrain-student", "pretrain-teacher", "teacher"):
        assert sorted(PathBucket(out / run).subdirs()) == ["0", "1"]
        assert (out / run / "manifest.json").exists()

    assert main(["finetune", *cfg]) == 0
    assert main(["finetune", *cfg, "--teacher", str(out / "teacher")]) == 0
    manifest = PathBucket(out / "tl_kd")["manifest.json"].load()
    assert len(manifest["inputs"]) == 2
    assert sorted(manifest["outputs"]["0"]) == [
        "best.dtkd",
        "confusion.csv",
        "history.csv",
        "metrics.json",
    ]

    assert main(["evaluate", *cfg]) == 0
    evaluate = PathBucket(out / "evaluate")
    written = {
        "summary.csv",
        "tp_change.csv",
        "tp_change_0.csv",
        "per_class.csv",
        "convergence.csv",
    }
    assert written <= set(evaluate)
    per_class = evaluate["per_class.csv"].load()
    assert list(per_class.columns[:2]) == ["variant", "name"]
    assert sorted(set(per_class["variant"])) == ["tl", "tl_kd"]
    assert len(per_class) == 4
    tp = evaluate["tp_change.csv"].load()
    assert tp["class"].iloc[-1] == "mean"

    assert main(["attribute", *cfg]) == 0
    samples = PathBucket(out / "tl" / "0" / "attribution")["samples.csv"].load()
    assert len(samples) == 3
    assert np.all(samples["additivity_error"] < 1e-6)

    assert main(["quantify", *cfg]) == 0
    ratios = PathBucket(out / "quantify" / "0")["ratios.csv"].load()
    assert len(ratios) == 3

    history = out / "tl" / "0" / "history.csv"
    plots = tmp_path / "plots"
    assert main(["plot", "--history", str(history), "--out", str(plots)]) == 0
    assert (plots / "convergence.svg").exists()


@pytest.mark.slow()
def test_runs_are_reproducible(config: Path, tmp_path: Path) -> None:
    out = tmp_path / "out"
    cfg = ["--config", str(config), "--seed", "0", "-q"]
    assert main(["pretrain", *cfg]) == 0

    first = tmp_path / "first"
    second = tmp_path / "second"
    assert main(["finetune", *cfg, "--run", str(first.name)]) == 0
    assert main(["finetune", *cfg, "--run", str(second.name)]) == 0
    for name in ("history.csv", "best.dtkd", "metrics.json", "confusion.csv"):
        a = (out / first.name / "0" / name).read_bytes()
        b = (out / second.name / "0" / name).read_bytes()
        assert a == b, name


@pytest.mark.slow()
def test_sweep(config: Path, tmp_path: Path) -> None:
    out = tmp_path / "out"
    cfg = ["--config", str(config), "--seed", "0", "-q"]
    assert main(["pretrain", *cfg]) == 0
    teacher = str(out / "teacher")
    sweep = ["sweep", *cfg, "--teacher", teacher, "--train-fraction", "0.5", "1"]
    assert main(sweep) == 0

    summary = pd.read_csv(out / "sweep" / "sweep_summary.csv")
    assert list(summary.columns) == ["parameter", "value", "tl", "tl_kd", "improvement"]
    assert summary["value"].tolist() == [0.5, 1.0]
    np.testing.assert_allclose(summary["improvement"], summary["tl_kd"] - summary["tl"])


DIRECTIONAL = """
dataset = synthetic
source_classes = 2,3
target_classes = 0,1
n_per_class = 16
val_per_class = 8
image_size = 8
seeds = 0,7,42
max_epochs = 6
batch_size = 8
learning_rate = 0.05
"""


@pytest.mark.slow()
def test_distillation_is_not_worse_and_not_slower(tmp_path: Path) -> None:
    out = tmp_path / "out"
    path = tmp_path / "study.cfg"
    path.write_text(DIRECTIONAL + f"out = {out}\n")
    cfg = ["--config", str(path), "-q"]

    assert main(["pretrain", *cfg]) == 0
    assert main(["finetune", *cfg]) == 0
    assert main(["finetune", *cfg, "--teacher", str(out / "teacher")]) == 0
    assert main(["evaluate", *cfg]) == 0

    # one validation image of slack on the seed mean
    tolerance = 1 / (2 * 8)
    summary = pd.read_csv(out / "evaluate" / "summary.csv", index_col="variant")
    tl, tl_kd = summary.at["tl", "accuracy_mean"], summary.at["tl_kd", "accuracy_mean"]
    assert tl_kd >= tl - tolerance

    convergence = pd.read_csv(out / "evaluate" / "convergence.csv")
    epochs = convergence.pivot(index="seed", columns="variant", values="epochs")
    assert sorted(epochs.index) == [0, 7, 42]
    not_slower = (epochs["tl_kd"].notna() & (epochs["tl_kd"] <= epochs["tl"])).sum()
    assert not_slower >= 2

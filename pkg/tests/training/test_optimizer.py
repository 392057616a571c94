from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from pytest_cases import parametrize

from dtkd.autodiff import Tensor
from dtkd.exceptions import (
    InvalidProbabilityError,
    MalformedCSVError,
    ShapeMismatchError,
)
from dtkd.training import (
    EpochRecord,
    OptimizerState,
    TrainingConfig,
    TrainingHistory,
    early_stopping_check,
    epochs_to_threshold,
    reduce_lr_on_plateau,
    sgd_step,
)


def test_first_step_is_exact() -> None:
    p = Tensor(np.array([1.0]), requires_grad=True)
    cfg = TrainingConfig(learning_rate=0.1, weight_decay=0.1)
    state = sgd_step({"p": p}, {"p": np.array([0.5])}, OptimizerState(lr=0.1), cfg)

    np.testing.assert_allclose(state.velocity["p"], [0.6])
    np.testing.assert_allclose(p.data, [0.94])


def test_sgd_descends_a_bowl() -> None:
    x = Tensor(np.array([3.0, -2.0]), requires_grad=True)
    cfg = TrainingConfig(learning_rate=0.1, weight_decay=0.0)
    state = OptimizerState(lr=cfg.learning_rate)
    for _ in range(300):
        sgd_step({"x": x}, {"x": 2 * x.data}, state, cfg)
    np.testing.assert_allclose(x.data, 0.0, atol=1e-4)


def test_frozen_parameters_stay_put() -> None:
    a = Tensor(np.ones(2), requires_grad=True)
    b = Tensor(np.ones(2), requires_grad=True)
    state = OptimizerState(lr=0.1)
    grads = {"a": np.ones(2), "b": np.ones(2)}
    sgd_step({"a": a, "b": b}, grads, state, TrainingConfig(), frozen={"b"})

    assert a.data[0] < 1.0
    np.testing.assert_array_equal(b.data, 1.0)
    assert "b" not in state.velocity


def test_missing_gradient_still_decays() -> None:
    p = Tensor(np.ones(1), requires_grad=True)
    sgd_step({"p": p}, {}, OptimizerState(lr=1.0), TrainingConfig(weight_decay=0.5))
    np.testing.assert_allclose(p.data, [0.5])


def test_gradient_shape_must_match() -> None:
    p = Tensor(np.ones(2), requires_grad=True)
    with pytest.raises(ShapeMismatchError):
        sgd_step({"p": p}, {"p": np.ones(3)}, OptimizerState(lr=0.1), TrainingConfig())


def test_plateau_reduces_the_learning_rate() -> None:
    cfg = TrainingConfig(lr_patience=3, lr_factor=0.5)
    state = OptimizerState(lr=0.2)
    accs = (0.5, 0.5, 0.5, 0.5, 0.6)
    lrs = [reduce_lr_on_plateau(state, acc, cfg).lr for acc in accs]
    assert lrs == [0.2, 0.2, 0.2, 0.1, 0.1]
    assert state.plateau_counter == 0


def test_early_stopping_keeps_the_earlier_tie() -> None:
    cfg = TrainingConfig(early_stop_patience=2)
    state = OptimizerState(lr=0.1)
    decisions = [
        early_stopping_check(state, acc, cfg, epoch)
        for epoch, acc in enumerate((0.5, 0.6, 0.6, 0.55), start=1)
    ]
    assert decisions == ["continue", "continue", "continue", "stop"]
    assert state.best_epoch == 2
    assert state.best_val_acc == 0.6


@parametrize(
    "kwargs",
    [
        {"learning_rate": -1.0},
        {"momentum": 1.0},
        {"lr_factor": 1.0},
        {"batch_size": 0},
        {"max_epochs": 0},
    ],
)
def test_config_validation(kwargs: dict) -> None:
    with pytest.raises(ValueError):  # noqa: PT011
        TrainingConfig(**kwargs)


def test_flip_probability_validation() -> None:
    with pytest.raises(InvalidProbabilityError):
        TrainingConfig(flip_prob=2.0)


def _history() -> TrainingHistory:
    history = TrainingHistory()
    for epoch, acc in enumerate((0.2, 0.5, 0.4), start=1):
        record = EpochRecord(
            epoch=epoch,
            train_loss=1 / epoch,
            val_acc=acc,
            lr=0.01,
            wall_time=3.0,
        )
        history.add(record)
    history.best_epoch = 2
    return history


def test_history_csv_round_trip(tmp_path: Path) -> None:
    path = tmp_path / "history.csv"
    _history().to_csv(path)

    assert path.read_text().splitlines()[0] == "epoch,train_loss,val_acc,lr"
    back = TrainingHistory.from_csv(path)
    assert back.val_acc == [0.2, 0.5, 0.4]
    assert [r.train_loss for r in back] == [1.0, 0.5, 1 / 3]
    assert all(r.wall_time == 0.0 for r in back)


def test_history_csv_is_reproducible(tmp_path: Path) -> None:
    _history().to_csv(tmp_path / "a.csv")
    _history().to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_best_val_acc() -> None:
    assert _history().best_val_acc == 0.5
    assert TrainingHistory().best_val_acc is None


def test_epochs_must_be_consecutive() -> None:
    history = TrainingHistory()
    with pytest.raises(ValueError, match="Expected epoch 1"):
        history.add(EpochRecord(epoch=2, train_loss=0.0, val_acc=0.0, lr=0.1))


def test_malformed_history(tmp_path: Path) -> None:
    with pytest.raises(MalformedCSVError, match="missing"):
        TrainingHistory.from_df(pd.DataFrame({"epoch": [1], "val_acc": [0.5]}))

    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(MalformedCSVError):
        TrainingHistory.from_csv(path)

    gap = pd.DataFrame(
        {"epoch": [1, 3], "train_loss": [1, 1], "val_acc": [0, 0], "lr": [1, 1]},
    )
    with pytest.raises(MalformedCSVError):
        TrainingHistory.from_df(gap)


def test_empty_history_frame() -> None:
    assert len(TrainingHistory.from_df(TrainingHistory().df())) == 0


def test_epochs_to_threshold() -> None:
    assert epochs_to_threshold(_history(), 0.4) == 2
    assert epochs_to_threshold([0.1, 0.9], 0.9) == 2
    assert epochs_to_threshold([0.1, 0.2], 0.9) is None

from __future__ import annotations

import operator
from collections.abc import Callable
from pathlib import Path
from typing import Any, TypeVar

import numpy as np
import pandas as pd
import pytest
from pytest_cases import fixture, parametrize_with_cases

from dtkd.exceptions import MalformedCSVError
from dtkd.metrics import ConfusionMatrix
from dtkd.nn import Checkpoint
from dtkd.store import PathBucket
from dtkd.training import EpochRecord, TrainingHistory

T = TypeVar("T")
DataCase = tuple[Any, str, type, Callable[[Any, Any], bool]]


@fixture(scope="function")
def bucket(tmp_path: Path) -> PathBucket:
    return PathBucket(tmp_path / "bucket")


def data_frame() -> DataCase:
    df = pd.DataFrame(
        {"value": [0.1, 0.25, 1 / 3], "variant": ["tl", "tl_kd", "tl"]},
    )
    return df, "sweep.csv", pd.DataFrame, pd.DataFrame.equals


def data_dict_json() -> DataCase:
    return {"accuracy": 0.5, "best_epoch": 3}, "metrics.json", dict, operator.eq


def data_list_json() -> DataCase:
    return [1, 2, 3], "list.json", list, operator.eq


def data_checkpoint() -> DataCase:
    ckpt = Checkpoint(
        {"0.weight": np.arange(6.0).reshape(2, 3), "0.bias": np.ones(2)},
    )
    return ckpt, "best.dtkd", Checkpoint, operator.eq


def data_ppm() -> DataCase:
    return np.zeros((3, 2, 2)), "image.ppm", np.ndarray, np.array_equal


def data_string() -> DataCase:
    return "<svg/>", "plot.svg", str, operator.eq


@parametrize_with_cases("item, key, check, equal", cases=".", prefix="data_")
def test_bucket(
    bucket: PathBucket,
    item: T,
    key: str,
    check: type[T],
    equal: Callable[[T, T], bool],
) -> None:
    bucket[key] = item
    assert bucket[key].exists()
    assert key in bucket
    assert len(bucket) == 1

    assert equal(item, bucket[key].load())
    assert equal(item, bucket[key].get(check=check))

    del bucket[key]
    assert not bucket[key].exists()
    assert key not in bucket
    assert len(bucket) == 0


def test_json_handles_numpy(bucket: PathBucket) -> None:
    bucket["stats.json"] = {
        "b": np.int64(3),
        "a": np.float64(0.5),
        "c": np.arange(2),
    }
    assert bucket["stats.json"].load() == {"a": 0.5, "b": 3, "c": [0, 1]}
    assert (bucket.path / "stats.json").read_text().startswith('{\n  "a"')


def test_history_and_confusion_are_written_in_their_layout(bucket: PathBucket) -> None:
    history = TrainingHistory()
    history.add(EpochRecord(epoch=1, train_loss=0.5, val_acc=0.25, lr=0.01))
    bucket["history.csv"] = history
    bucket["confusion.csv"] = ConfusionMatrix(np.eye(2, dtype=int), ("a", "b"))

    history_columns = list(bucket["history.csv"].load().columns)
    assert history_columns == ["epoch", "train_loss", "val_acc", "lr"]
    assert list(bucket["confusion.csv"].load().columns) == ["actual", "a", "b"]


def test_wrong_type_or_suffix(bucket: PathBucket) -> None:
    bucket["metrics.json"] = {"a": 1}
    with pytest.raises(ValueError, match="Can't load"):
        bucket["metrics.json"].load(check=pd.DataFrame)
    with pytest.raises(ValueError, match="No loader"):
        bucket["metrics.bin"] = {"a": 1}


def test_get_missing_file(bucket: PathBucket) -> None:
    assert bucket["missing.json"].get() is None
    assert bucket["missing.json"].get(default={}) == {}


def test_malformed_csv(bucket: PathBucket) -> None:
    (bucket.path / "empty.csv").write_text("")
    with pytest.raises(MalformedCSVError):
        bucket["empty.csv"].load()


def test_subdirectories(bucket: PathBucket) -> None:
    seed = bucket / "tl" / 0
    assert seed.path == bucket.path / "tl" / "0"
    assert seed.path.exists()

    seed["history.txt"] = "abc"
    assert bucket.subdirs() == ["tl"]
    assert seed.sizes() == {"history.txt": 3}
    assert bucket.sizes() == {}


def test_find(bucket: PathBucket) -> None:
    bucket.store(
        {
            "tp_change_0.csv": pd.DataFrame({"a": [1]}),
            "tp_change_1.csv": pd.DataFrame({"a": [2]}),
        },
    )
    bucket["summary.txt"] = "x"

    found = bucket.find(r"tp_change_(\d+)\.csv")
    assert sorted(found) == ["0", "1"]
    assert found["1"].load()["a"].item() == 2


def test_clean(tmp_path: Path) -> None:
    PathBucket(tmp_path / "b")["old.txt"] = "stale"
    assert len(PathBucket(tmp_path / "b", clean=True)) == 0

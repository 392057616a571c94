"""Loaders for [`PathBucket`][dtkd.store.PathBucket]s.

Saving picks the first loader whose `can_save` accepts the object type and the
file suffix, loading picks the first loader whose `can_load` accepts the
suffix. Every loader writes deterministically, so identical objects produce
byte-identical files.
"""
from __future__ import annotations

import json
import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, ClassVar, Generic, TypeVar
from typing_extensions import override

import numpy as np
import pandas as pd

from dtkd.data.ppm import read_ppm, write_ppm
from dtkd.exceptions import MalformedCSVError
from dtkd.metrics import ConfusionMatrix
from dtkd.nn import Checkpoint
from dtkd.training import TrainingHistory

T = TypeVar("T")

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


class PathLoader(ABC, Generic[T]):
    """Saves and loads objects of one kind at a [`Path`][pathlib.Path]."""

    name: ClassVar[str]
    """The name of the loader."""

    suffixes: ClassVar[frozenset[str]]
    """The file suffixes the loader handles."""

    @classmethod
    def can_load(cls, key: Path, /, *, check: type | None = None) -> bool:
        """Return True if this loader supports the resource at key.

        Args:
            key: The path of the resource.
            check: A type the loaded object must have.
        """
        return key.suffix in cls.suffixes

    @classmethod
    @abstractmethod
    def can_save(cls, obj: Any, key: Path, /) -> bool:
        """Return True if this loader can save `obj` at `key`."""
        ...

    @classmethod
    @abstractmethod
    def save(cls, obj: T, key: Path, /) -> None:
        """Save an object under the given key."""
        ...

    @classmethod
    @abstractmethod
    def load(cls, key: Path, /) -> T:
        """Load an object from the given key."""
        ...


class CSVLoader(PathLoader[pd.DataFrame]):
    """Data frames, training histories and confusion matrices as `.csv`.

    Frames are written without their index, histories and confusion matrices
    in their own layout. Loading always gives a [`DataFrame`][pandas.DataFrame].
    """

    name: ClassVar = "csv"
    suffixes: ClassVar = frozenset({".csv"})

    @override
    @classmethod
    def can_load(cls, key: Path, /, *, check: type | None = None) -> bool:
        return key.suffix in cls.suffixes and check in (pd.DataFrame, None)

    @override
    @classmethod
    def can_save(cls, obj: Any, key: Path, /) -> bool:
        tabular = isinstance(obj, pd.DataFrame | TrainingHistory | ConfusionMatrix)
        return tabular and key.suffix in cls.suffixes

    @override
    @classmethod
    def save(
        cls,
        obj: pd.DataFrame | TrainingHistory | ConfusionMatrix,
        key: Path,
        /,
    ) -> None:
        logger.debug(f"Saving {key=}")
        match obj:
            case pd.DataFrame():
                obj.to_csv(key, index=False, float_format=FLOAT_FORMAT)
            case TrainingHistory() | ConfusionMatrix():
                obj.to_csv(key)

    @override
    @classmethod
    def load(cls, key: Path, /) -> pd.DataFrame:
        logger.debug(f"Loading {key=}")
        try:
            return pd.read_csv(key)
        except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
            raise MalformedCSVError(f"Cannot parse {key}: {e}") from e


class JSONLoader(PathLoader[dict | list]):
    """Dicts and lists as `.json`, keys sorted and indented by two spaces."""

    name: ClassVar = "json"
    suffixes: ClassVar = frozenset({".json"})

    @override
    @classmethod
    def can_load(cls, key: Path, /, *, check: type | None = None) -> bool:
        return key.suffix in cls.suffixes and check in (dict, list, None)

    @override
    @classmethod
    def can_save(cls, obj: Any, key: Path, /) -> bool:
        return isinstance(obj, dict | list) and key.suffix in cls.suffixes

    @override
    @classmethod
    def save(cls, obj: dict | list, key: Path, /) -> None:
        logger.debug(f"Saving {key=}")
        text = json.dumps(obj, indent=2, sort_keys=True, default=_jsonable)
        key.write_text(text + "\n")

    @override
    @classmethod
    def load(cls, key: Path, /) -> dict | list:
        logger.debug(f"Loading {key=}")
        with key.open("r") as f:
            return json.load(f)


def _jsonable(obj: Any) -> Any:
    match obj:
        case np.integer():
            return int(obj)
        case np.floating():
            return float(obj)
        case np.ndarray():
            return obj.tolist()
        case Path():
            return str(obj)
        case _:
            raise TypeError(f"{type(obj)} is not JSON serializable")


class CheckpointLoader(PathLoader[Checkpoint]):
    """Model parameters as `.dtkd` checkpoints."""

    name: ClassVar = "checkpoint"
    suffixes: ClassVar = frozenset({".dtkd"})

    @override
    @classmethod
    def can_load(cls, key: Path, /, *, check: type | None = None) -> bool:
        return key.suffix in cls.suffixes and check in (Checkpoint, None)

    @override
    @classmethod
    def can_save(cls, obj: Any, key: Path, /) -> bool:
        return isinstance(obj, Checkpoint) and key.suffix in cls.suffixes

    @override
    @classmethod
    def save(cls, obj: Checkpoint, key: Path, /) -> None:
        obj.save(key)

    @override
    @classmethod
    def load(cls, key: Path, /) -> Checkpoint:
        return Checkpoint.load(key)


class PPMLoader(PathLoader[np.ndarray]):
    """`[3, H, W]` images in `[0, 1]` as binary `.ppm`."""

    name: ClassVar = "ppm"
    suffixes: ClassVar = frozenset({".ppm"})

    @override
    @classmethod
    def can_load(cls, key: Path, /, *, check: type | None = None) -> bool:
        return key.suffix in cls.suffixes and check in (np.ndarray, None)

    @override
    @classmethod
    def can_save(cls, obj: Any, key: Path, /) -> bool:
        image = isinstance(obj, np.ndarray) and obj.ndim == 3  # noqa: PLR2004
        return image and key.suffix in cls.suffixes

    @override
    @classmethod
    def save(cls, obj: np.ndarray, key: Path, /) -> None:
        write_ppm(key, obj)

    @override
    @classmethod
    def load(cls, key: Path, /) -> np.ndarray:
        return read_ppm(key)


class TxtLoader(PathLoader[str]):
    """Plain strings as `.txt` or `.svg`."""

    name: ClassVar = "text"
    suffixes: ClassVar = frozenset({".txt", ".svg"})

    @override
    @classmethod
    def can_load(cls, key: Path, /, *, check: type | None = None) -> bool:
        return key.suffix in cls.suffixes and check in (str, None)

    @override
    @classmethod
    def can_save(cls, obj: Any, key: Path, /) -> bool:
        return isinstance(obj, str) and key.suffix in cls.suffixes

    @override
    @classmethod
    def save(cls, obj: str, key: Path, /) -> None:
        key.write_text(obj)

    @override
    @classmethod
    def load(cls, key: Path, /) -> str:
        return key.read_text()

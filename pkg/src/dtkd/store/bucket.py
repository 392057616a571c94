"""A directory of run artifacts accessed like a mapping.

```python
from dtkd.store import PathBucket

bucket = PathBucket("out/tl/0")
bucket["history.csv"] = history  # (1)!
bucket["best.dtkd"] = Checkpoint.from_model(model)
bucket["metrics.json"] = report.to_dict()

df = bucket["history.csv"].load()
ckpt = bucket["best.dtkd"].load(check=Checkpoint)  # (2)!
seed_7 = PathBucket("out/tl") / 7
```

1. The suffix decides which [`PathLoader`][dtkd.store.PathLoader] is used.
2. A `TypeError` is raised if the loaded object is of another type.
"""
from __future__ import annotations

import logging
import re
import shutil
from collections.abc import Iterator, Mapping, MutableMapping, Sequence
from dataclasses import dataclass, field
from itertools import chain
from pathlib import Path
from typing import TYPE_CHECKING, Any, TypeVar, overload
from typing_extensions import override

from more_itertools import first

from dtkd.store.loaders import (
    CheckpointLoader,
    CSVLoader,
    JSONLoader,
    PathLoader,
    PPMLoader,
    TxtLoader,
)

if TYPE_CHECKING:
    from typing_extensions import Self

logger = logging.getLogger(__name__)

T = TypeVar("T")
Default = TypeVar("Default")

DEFAULT_LOADERS: tuple[type[PathLoader], ...] = (
    CSVLoader,
    JSONLoader,
    CheckpointLoader,
    PPMLoader,
    TxtLoader,
)


@dataclass
class Drop:
    """A reference to one file of a bucket.

    Attributes:
        path: Where the resource lives.
        loaders: Loaders tried in order.
    """

    path: Path
    loaders: tuple[type[PathLoader], ...] = field(repr=False)

    def put(self, obj: Any) -> None:
        """Write `obj` with the first loader that can save it.

        Raises:
            ValueError: If no loader handles the object at this suffix.
        """
        loader = first(
            (_l for _l in self.loaders if _l.can_save(obj, self.path)),
            default=None,
        )
        if loader is None:
            raise ValueError(
                f"No loader can save {type(obj)=} objects"
                f" with this extension: {self.path}",
            )
        loader.save(obj, self.path)

    @overload
    def load(self, *, check: None = None) -> Any:
        ...

    @overload
    def load(self, *, check: type[T]) -> T:
        ...

    def load(self, *, check: type[T] | None = None) -> T | Any:
        """Load the resource.

        Args:
            check: A type the loaded object must be an instance of.

        Raises:
            ValueError: If no loader handles the suffix.
            TypeError: If the object is not of type `check`.
        """
        loader = first(
            (_l for _l in self.loaders if _l.can_load(self.path, check=check)),
            default=None,
        )
        if loader is None:
            raise ValueError(f"Can't load {self.path=} from {self.loaders=}")

        value = loader.load(self.path)
        if check is not None and not isinstance(value, check):
            raise TypeError(
                f"Value loaded by {loader.name} is not of type {check=},"
                f" but is of type {type(value)=}.",
            )
        return value

    def get(
        self,
        default: Default | None = None,
        *,
        check: type[T] | None = None,
    ) -> T | Default | None:
        """Load the resource, or return `default` if the file does not exist."""
        try:
            return self.load(check=check)
        except FileNotFoundError:
            return default

    def exists(self) -> bool:
        """Whether the file exists."""
        return self.path.exists()

    def remove(self) -> bool:
        """Delete the file or directory, `True` if it is gone afterwards."""
        if not self.path.exists():
            return True
        try:
            if self.path.is_dir():
                shutil.rmtree(self.path)
            else:
                self.path.unlink()
        except OSError:
            return False
        return True


class PathBucket(MutableMapping[str, Drop]):
    """A directory whose files are stored and loaded by name.

    Assigning `bucket[name] = obj` writes `obj` with the loader matching the
    suffix of `name`, indexing returns a [`Drop`][dtkd.store.Drop].
    """

    def __init__(
        self,
        path: PathBucket | Path | str,
        *,
        loaders: Sequence[type[PathLoader]] | None = None,
        create: bool = True,
        clean: bool = False,
    ) -> None:
        """Create a new PathBucket.

        Args:
            path: The directory.
            loaders: Loaders tried before the default ones.
            create: Create the directory if it does not exist.
            clean: Delete the directory first if it exists.
        """
        if isinstance(path, PathBucket):
            path = path.path
        path = Path(path)

        if clean and path.exists():
            shutil.rmtree(path, ignore_errors=True)
        if create:
            path.mkdir(parents=True, exist_ok=True)

        self.path = path
        self.extra_loaders = tuple(loaders or ())
        self.loaders = tuple(chain(self.extra_loaders, DEFAULT_LOADERS))
        self._create = create

    @override
    def __getitem__(self, key: str) -> Drop:
        return Drop(self.path / key, loaders=self.loaders)

    @override
    def __setitem__(self, key: str, value: Any) -> None:
        self[key].put(value)

    @override
    def __delitem__(self, key: str) -> None:
        self[key].remove()

    @override
    def __iter__(self) -> Iterator[str]:
        if not self.path.exists():
            return iter(())
        return iter(sorted(p.name for p in self.path.iterdir()))

    @override
    def __len__(self) -> int:
        return sum(1 for _ in self)

    @override
    def __contains__(self, key: object) -> bool:
        return isinstance(key, str) and (self.path / key).exists()

    def store(self, items: Mapping[str, Any]) -> None:
        """Write every item of a mapping."""
        for key, value in items.items():
            self[key] = value

    def find(self, pattern: str) -> dict[str, Drop]:
        """Drops whose names match `pattern`, keyed by its first capture group.

        ```python
        histories = bucket.find(r"(.+)_history.csv")
        ```
        """
        found = {}
        for key in self:
            if (match := re.fullmatch(pattern, key)) is not None:
                found[match.group(1) if match.groups() else key] = self[key]
        return found

    def sub(self, key: str | int, *, create: bool | None = None) -> Self:
        """A bucket for a subdirectory, sharing the loaders."""
        return self.__class__(
            self.path / str(key),
            loaders=self.extra_loaders,
            create=self._create if create is None else create,
        )

    def __truediv__(self, key: str | int) -> Self:
        return self.sub(key)

    def subdirs(self) -> list[str]:
        """Names of the subdirectories."""
        return [k for k in self if (self.path / k).is_dir()]

    def sizes(self) -> dict[str, int]:
        """Byte sizes of the files, directories excluded."""
        files = [k for k in self if (self.path / k).is_file()]
        return {k: (self.path / k).stat().st_size for k in files}

    @override
    def __repr__(self) -> str:
        return f"{self.__class__.__name__}({self.path!r})"

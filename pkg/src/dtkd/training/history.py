"""Per-epoch training records.

```python
history = TrainingHistory()
history.add(EpochRecord(epoch=1, train_loss=1.2, val_acc=0.61, lr=0.01))
history.df()
history.to_csv("history.csv")
```
"""
from __future__ import annotations

import logging
from collections.abc import Iterator
from dataclasses import asdict, dataclass, field
from pathlib import Path

import pandas as pd

from dtkd.exceptions import MalformedCSVError

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("epoch", "train_loss", "val_acc", "lr")


@dataclass(frozen=True, kw_only=True)
class EpochRecord:
    """One completed epoch.

    Attributes:
        epoch: 1-based epoch number.
        train_loss: Sample-weighted mean loss over the epoch's mini-batches.
        val_acc: Validation accuracy after the epoch.
        lr: Learning rate in effect during the epoch.
        wall_time: Seconds the epoch took, not written to CSV.
    """

    epoch: int
    train_loss: float
    val_acc: float
    lr: float
    wall_time: float = 0.0


@dataclass
class TrainingHistory:
    """The ordered epochs of one training run.

    Attributes:
        records: One record per completed epoch.
        best_epoch: The epoch whose weights were returned.
    """

    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None

    def add(self, record: EpochRecord) -> None:
        """Append the next epoch."""
        expected = len(self.records) + 1
        if record.epoch != expected:
            raise ValueError(f"Expected epoch {expected}, got {record.epoch}")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[EpochRecord]:
        return iter(self.records)

    @property
    def val_acc(self) -> list[float]:
        """Validation accuracy per epoch."""
        return [r.val_acc for r in self.records]

    @property
    def best_val_acc(self) -> float | None:
        """Validation accuracy of the best epoch."""
        if self.best_epoch is None:
            return None
        return self.records[self.best_epoch - 1].val_acc

    def df(self, *, wall_time: bool = True) -> pd.DataFrame:
        """The history as a frame with one row per epoch.

        Args:
            wall_time: Whether to include the non-reproducible timing column.
        """
        columns = [*CSV_COLUMNS, "wall_time"] if wall_time else list(CSV_COLUMNS)
        if not self.records:
            return pd.DataFrame(columns=columns)
        return pd.DataFrame([asdict(r) for r in self.records])[columns]

    def to_csv(self, path: Path | str) -> None:
        """Write `epoch,train_loss,val_acc,lr`, byte-identical for identical runs."""
        self.df(wall_time=False).to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def from_df(cls, df: pd.DataFrame) -> TrainingHistory:
        """Rebuild a history from a frame with at least the CSV columns.

        Raises:
            MalformedCSVError: If a column is missing or epochs are not 1..n.
        """
        missing = set(CSV_COLUMNS) - set(df.columns)
        if missing:
            raise MalformedCSVError(f"History is missing columns {sorted(missing)}")

        history = cls()
        try:
            for row in df.itertuples(index=False):
                history.add(
                    EpochRecord(
                        epoch=int(row.epoch),
                        train_loss=float(row.train_loss),
                        val_acc=float(row.val_acc),
                        lr=float(row.lr),
                        wall_time=float(getattr(row, "wall_time", 0.0)),
                    ),
                )
        except ValueError as e:
            raise MalformedCSVError(f"Malformed history: {e}") from e

        return history

    @classmethod
    def from_csv(cls, path: Path | str) -> TrainingHistory:
        """Read a history written by
        [`to_csv`][dtkd.training.TrainingHistory.to_csv].
        """
        try:
            df = pd.read_csv(path)
        except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
            raise MalformedCSVError(f"Cannot parse {path}: {e}") from e
        return cls.from_df(df)


def epochs_to_threshold(
    history: TrainingHistory | list[float],
    threshold: float,
) -> int | None:
    """The first 1-based epoch with validation accuracy `>= threshold`, if any."""
    accs = history.val_acc if isinstance(history, TrainingHistory) else list(history)
    return next((i for i, acc in enumerate(accs, start=1) if acc >= threshold), None)

"""Wall-clock timing of epochs, attributions and gradient checks."""
from __future__ import annotations

import math
import time
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass


@dataclass
class Interval:
    """Seconds between two readings of the monotonic clock.

    Attributes:
        start: The first reading.
        end: The second reading, `nan` while the block is still running.
    """

    start: float
    end: float = math.nan

    @property
    def duration(self) -> float:
        """Elapsed seconds."""
        return self.end - self.start


class Timer:
    """Times a block of code.

    ```python
    with Timer.time() as interval:
        train_one_epoch()

    print(interval.duration)
    ```
    """

    @staticmethod
    @contextmanager
    def time() -> Iterator[Interval]:
        """Time the enclosed block.

        Yields:
            The interval, its `end` is set when the block exits, also on error.
        """
        interval = Interval(start=time.perf_counter())
        try:
            yield interval
        finally:
            interval.end = time.perf_counter()

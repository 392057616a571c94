from __future__ import annotations

import math

import pytest

from dtkd.profiling import Interval, Timer


def test_time_block() -> None:
    with Timer.time() as interval:
        assert math.isnan(interval.end)
        sum(range(1000))

    assert interval.duration >= 0


def test_interval_is_closed_on_error() -> None:
    with pytest.raises(RuntimeError), Timer.time() as interval:
        raise RuntimeError("boom")

    assert not math.isnan(interval.end)
    assert interval.duration >= 0


def test_duration() -> None:
    assert Interval(start=1.0, end=3.5).duration == 2.5

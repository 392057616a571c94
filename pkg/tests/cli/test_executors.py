from __future__ import annotations

from collections.abc import Iterator
from concurrent.futures import ProcessPoolExecutor

import psutil
import pytest

from dtkd.cli import SequentialExecutor, make_executor, worker_count
from dtkd.options import get_option, set_option


def _square(x: int) -> int:
    return x * x


def _fail() -> None:
    raise RuntimeError("boom")


@pytest.fixture()
def threads(monkeypatch: pytest.MonkeyPatch) -> Iterator[None]:
    monkeypatch.delenv("DTKD_THREADS", raising=False)
    before = get_option("threads")
    yield
    set_option("threads", before)


def test_sequential_executor() -> None:
    with SequentialExecutor() as executor:
        future = executor.submit(_square, 3)
        assert future.done()
        assert future.result() == 9

        failed = executor.submit(_fail)
        with pytest.raises(RuntimeError, match="boom"):
            failed.result()


def test_worker_count(threads: None) -> None:
    set_option("threads", 2)
    assert worker_count(1) == 1
    assert worker_count(None) <= 2
    assert worker_count(0) == 1


def test_make_executor(threads: None) -> None:
    set_option("threads", 1)
    assert isinstance(make_executor(8), SequentialExecutor)

    set_option("threads", None)
    if (psutil.cpu_count(logical=False) or 1) > 1:
        with make_executor(2) as executor:
            assert isinstance(executor, ProcessPoolExecutor)
            assert executor.submit(_square, 4).result() == 16


def test_threads_from_environment(
    threads: None,
    monkeypatch: pytest.MonkeyPatch,
) -> None:
    set_option("threads", None)
    monkeypatch.setenv("DTKD_THREADS", "3")
    assert get_option("threads") == 3

    monkeypatch.setenv("DTKD_THREADS", "0")
    with pytest.raises(ValueError, match="DTKD_THREADS"):
        get_option("threads")

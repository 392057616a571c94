"""Executors for independent experiment jobs.

A job count of one runs everything in-process with a
[`SequentialExecutor`][dtkd.cli.executors.SequentialExecutor], which keeps
logging and tracebacks in the calling process.
"""
from __future__ import annotations

import logging
from collections.abc import Callable
from concurrent.futures import Executor, Future, ProcessPoolExecutor
from typing import TypeVar
from typing_extensions import ParamSpec, override

import psutil

from dtkd.options import get_option

logger = logging.getLogger(__name__)

R = TypeVar("R")
P = ParamSpec("P")


class SequentialExecutor(Executor):
    """A [Executor][concurrent.futures.Executor] that runs each job on submit."""

    @override
    def submit(
        self,
        fn: Callable[P, R],
        /,
        *args: P.args,
        **kwargs: P.kwargs,
    ) -> Future[R]:
        """Run `fn` now and return an already resolved future."""
        future: Future[R] = Future()
        future.set_running_or_notify_cancel()

        try:
            future.set_result(fn(*args, **kwargs))
        except BaseException as exc:  # noqa: BLE001
            future.set_exception(exc)

        return future


def worker_count(jobs: int | None = None) -> int:
    """`min(jobs, threads option, physical cores)`, at least one.

    Args:
        jobs: Requested number of workers, unbounded when `None`.
    """
    limits = [
        jobs,
        get_option("threads"),
        psutil.cpu_count(logical=False) or psutil.cpu_count(logical=True),
    ]
    return max(1, min(n for n in limits if n is not None))


def make_executor(jobs: int | None = 1) -> Executor:
    """A process pool for more than one worker, sequential execution otherwise."""
    workers = worker_count(jobs)
    logger.debug(f"Running jobs with {workers} worker(s)")
    if workers == 1:
        return SequentialExecutor()
    return ProcessPoolExecutor(max_workers=workers)

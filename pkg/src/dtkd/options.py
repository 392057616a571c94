"""Options for the dtkd package.

In general, these options are not intended for functional differences but
for how much of the machine dtkd uses and how its output artifacts look.
"""
from __future__ import annotations

import os
from typing import Any, TypedDict, TypeVar, overload


class DTKDOptions(TypedDict):
    """The options available for dtkd."""

    threads: int | None
    """Upper bound on worker processes, falls back to `DTKD_THREADS` when unset."""

    attribution_batch_size: int
    """How many coalition images are pushed through a model at once."""

    svg_hashsalt: str
    """Salt for the ids matplotlib writes into SVG files, keeps plots reproducible."""


def _threads_from_env() -> int | None:
    value = os.environ.get("DTKD_THREADS")
    if value is None or value.strip() == "":
        return None

    threads = int(value)
    if threads < 1:
        raise ValueError(f"DTKD_THREADS must be a positive integer, got {value!r}")

    return threads


_dtkd_options: DTKDOptions = {
    "threads": None,
    "attribution_batch_size": 512,
    "svg_hashsalt": "dtkd",
}

T = TypeVar("T")


@overload
def get_option(name: str, default: None = None) -> Any | None:
    ...


@overload
def get_option(name: str, default: T) -> Any | T:
    ...


def get_option(name: str, default: T | None = None) -> Any | T | None:
    """Get an option.

    ```python
    from dtkd import options

    options.get_option("attribution_batch_size")
    ```
    """
    if name == "threads" and _dtkd_options["threads"] is None:
        return _threads_from_env()

    return _dtkd_options.get(name, default)


def set_option(name: str, value: Any) -> None:
    """Set an option for the rest of the process."""
    if name not in _dtkd_options:
        raise KeyError(f"Unknown option {name!r}, choose from {list(_dtkd_options)}")

    _dtkd_options[name] = value  # type: ignore[literal-required]

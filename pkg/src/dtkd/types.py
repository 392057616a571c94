"""Stores low-level types used through the library."""
from __future__ import annotations

from typing import Literal, NoReturn, TypeAlias

import numpy as np

Seed: TypeAlias = int | np.integer | np.random.Generator
"""Type alias for kinds of Seeded objects."""

Split: TypeAlias = Literal["train", "val"]
"""Which side of a train/validation split a dataset belongs to."""

OutputKind: TypeAlias = Literal["logits", "softmax"]
"""Which model output a game or attribution is computed on."""


def assert_never(value: NoReturn) -> NoReturn:
    """Utility function for asserting that a value is never reached."""
    # This also works in runtime as well:
    raise AssertionError(f"This code should never be reached, got: {value}")

"""Utilities for dealing with randomness.

Two kinds of randomness are used in dtkd:

* [`as_rng`][dtkd.randomness.as_rng] hands out `numpy.random.Generator`s for
  weight initialization and dropout masks.
* [`SplitMix64`][dtkd.randomness.SplitMix64] is a small portable generator whose
  output depends only on integers. Data-level decisions (corruptions, label noise,
  subsetting, shuffling, flips) draw from a stream derived from
  `(global_seed, sample_index, op_id)` so the same pattern can be reproduced by
  any implementation of SplitMix64.
"""
from __future__ import annotations

from enum import IntEnum
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from dtkd.types import Seed

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def as_rng(seed: Seed | None = None) -> np.random.Generator:
    """Converts a valid seed arg into a numpy.random.Generator instance.

    Args:
        seed: The seed to use

    Returns:
        A valid np.random.Generator object to use
    """
    match seed:
        case None | int() | np.integer():
            return np.random.default_rng(seed)
        case np.random.Generator():
            return seed

    raise ValueError(f"Can't {seed=} ({type(seed)}) to create numpy.random.Generator")


class Op(IntEnum):
    """Identifiers of the data-level operations that draw random numbers."""

    SHUFFLE = 1
    FLIP = 2
    QUARTER_BLACK = 3
    CENTER_BLACK = 4
    LABEL_NOISE = 5
    SUBSET = 6
    APPLY = 7
    SYNTHETIC = 8
    DROPOUT = 9


def mix64(z: int) -> int:
    """The SplitMix64 finalizer."""
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & MASK64
    return z ^ (z >> 31)


def derive_seed(*parts: int) -> int:
    """Fold a sequence of integers into one 64 bit seed.

    Each part is added to the running state with the golden gamma and mixed,
    so `derive_seed(a, b)` and `derive_seed(b, a)` differ.
    """
    state = 0
    for part in parts:
        state = mix64((state + (int(part) & MASK64) + GOLDEN_GAMMA) & MASK64)
    return state


class SplitMix64:
    """A portable 64 bit generator.

    ```python
    rng = SplitMix64.stream(seed=42, index=3, op=Op.QUARTER_BLACK)
    rng.integers(0, 4)
    ```
    """

    def __init__(self, seed: int) -> None:
        """Create a generator.

        Args:
            seed: The initial 64 bit state.
        """
        super().__init__()
        self.state = int(seed) & MASK64

    @classmethod
    def stream(cls, seed: int, index: int, op: Op | int) -> SplitMix64:
        """The stream owned by one sample and one operation."""
        return cls(derive_seed(seed, index, int(op)))

    def next_u64(self) -> int:
        """The next raw 64 bit output."""
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return mix64(self.state)

    def random(self) -> float:
        """A float uniformly drawn from [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def integers(self, low: int, high: int) -> int:
        """An integer uniformly drawn from [low, high).

        Rejection sampling keeps the draw unbiased for any range.
        """
        span = high - low
        if span <= 0:
            raise ValueError(f"Empty range [{low}, {high}).")

        limit = (1 << 64) - ((1 << 64) % span)
        while True:
            x = self.next_u64()
            if x < limit:
                return low + x % span

    def permutation(self, n: int) -> np.ndarray:
        """A Fisher-Yates permutation of `range(n)`."""
        order = np.arange(n, dtype=np.int64)
        for i in range(n - 1, 0, -1):
            j = self.integers(0, i + 1)
            order[i], order[j] = order[j], order[i]
        return order

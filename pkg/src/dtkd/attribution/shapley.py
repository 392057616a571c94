"""Coalition games and their Shapley values.

A [`CoalitionGame`][dtkd.attribution.CoalitionGame] stores `v(S)` for all
`2^n` coalitions in a table indexed by bitmask, bit `i` standing for player
`i`. Values may carry trailing dimensions, e.g. one column per model output,
and every Shapley computation is vectorized over them.

```python
from dtkd.attribution import CoalitionGame, exact_shapley

game = CoalitionGame.from_function(3, lambda s: float(len(s) ** 2))
exact_shapley(game)  # array([3., 3., 3.])
```
"""
from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterable
from dataclasses import dataclass

import numpy as np

from dtkd.attribution.partition import MAX_PLAYERS
from dtkd.exceptions import TooManyPlayersError
from dtkd.randomness import as_rng
from dtkd.types import Seed

logger = logging.getLogger(__name__)


def coalition_sizes(n: int) -> np.ndarray:
    """Popcount of every bitmask `0..2^n - 1`."""
    masks = np.arange(1 << n, dtype=np.int64)
    sizes = np.zeros(1 << n, dtype=np.int64)
    for i in range(n):
        sizes += (masks >> i) & 1
    return sizes


@dataclass(frozen=True, eq=False)
class CoalitionGame:
    """A cooperative game on `n` players.

    Attributes:
        n_players: Number of players.
        values: `v(S)` at index `sum(2^i for i in S)`, shape `[2^n, ...]`.
    """

    n_players: int
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape[0] != 1 << self.n_players:
            raise ValueError(
                f"A game on {self.n_players} players needs {1 << self.n_players} values,"
                f" got {values.shape[0]}",
            )
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(
        cls,
        n_players: int,
        v: Callable[[frozenset[int]], float],
    ) -> CoalitionGame:
        """Tabulate `v` over every coalition."""
        if n_players > MAX_PLAYERS:
            raise TooManyPlayersError(n_players, MAX_PLAYERS)
        table = [
            v(frozenset(i for i in range(n_players) if mask >> i & 1))
            for mask in range(1 << n_players)
        ]
        return cls(n_players, np.asarray(table, dtype=np.float64))

    @staticmethod
    def mask_of(coalition: Iterable[int]) -> int:
        """The bitmask of a set of players."""
        return sum(1 << i for i in set(coalition))

    def value(self, coalition: Iterable[int]) -> float | np.ndarray:
        """`v(S)`."""
        return self.values[self.mask_of(coalition)]

    @property
    def empty_value(self) -> float | np.ndarray:
        """`v` of the empty coalition."""
        return self.values[0]

    @property
    def grand_value(self) -> float | np.ndarray:
        """`v` of the coalition of all players."""
        return self.values[-1]

    def column(self, k: int) -> CoalitionGame:
        """The game of one output column."""
        return CoalitionGame(self.n_players, self.values[:, k])


def exact_shapley(game: CoalitionGame) -> np.ndarray:
    """Shapley values by enumerating every coalition.

    `phi_i = sum over S not containing i of |S|! (n - |S| - 1)! / n! * (v(S + i) - v(S))`.

    Returns:
        `[n]` values, or `[n, ...]` for games with trailing dimensions.

    Raises:
        TooManyPlayersError: If `n > 20`.
    """
    n = game.n_players
    if n > MAX_PLAYERS:
        raise TooManyPlayersError(n, MAX_PLAYERS)

    masks = np.arange(1 << n, dtype=np.int64)
    sizes = coalition_sizes(n)
    # 1 / (n * C(n - 1, s)) == s! (n - s - 1)! / n!
    weight_of_size = np.array([1.0 / (n * math.comb(n - 1, s)) for s in range(n)])

    phi = np.empty((n, *game.values.shape[1:]))
    for i in range(n):
        without = masks[(masks >> i) & 1 == 0]
        marginal = game.values[without | (1 << i)] - game.values[without]
        phi[i] = np.tensordot(weight_of_size[sizes[without]], marginal, axes=1)

    return phi


def monte_carlo_shapley(
    game: CoalitionGame,
    n_permutations: int = 10_000,
    *,
    seed: Seed | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Estimate Shapley values by averaging marginals over random orderings.

    Returns:
        The estimate and its standard error per player.
    """
    if n_permutations < 2:  # noqa: PLR2004
        raise ValueError(f"Need at least 2 permutations, got {n_permutations}")

    n = game.n_players
    rng = as_rng(seed)
    orders = rng.permuted(np.tile(np.arange(n), (n_permutations, 1)), axis=1)
    bits = np.left_shift(1, orders).astype(np.int64)
    after = np.cumsum(bits, axis=1)
    before = after - bits

    contributions = game.values[after] - game.values[before]
    marginals = np.empty_like(contributions)
    index = orders.reshape(orders.shape + (1,) * (contributions.ndim - 2))
    np.put_along_axis(marginals, index, contributions, axis=1)

    estimate = marginals.mean(axis=0)
    stderr = marginals.std(axis=0, ddof=1) / math.sqrt(n_permutations)
    return estimate, stderr

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from dtkd.exceptions import TooManyPlayersError

logger = logging.getLogger(__name__)

MAX_PLAYERS = 20
"""Exact enumeration is limited to `2^20` coalitions."""


@dataclass(frozen=True, eq=False)
class SuperpixelPartition:
    """Assignment of every pixel to one superpixel.

    Attributes:
        segments: A `[H, W]` array of superpixel ids `0..n-1`, each used.
    """

    segments: np.ndarray

    def __post_init__(self) -> None:
        segments = np.asarray(self.segments, dtype=np.int64)
        if segments.ndim != 2:  # noqa: PLR2004
            raise ValueError(f"Segments must be [H, W], got {segments.shape}")

        n = int(segments.max()) + 1 if segments.size else 0
        if n > MAX_PLAYERS:
            raise TooManyPlayersError(n, MAX_PLAYERS)
        if segments.min(initial=0) < 0 or np.any(np.bincount(segments.ravel(), minlength=n) == 0):
            raise ValueError("Superpixel ids must be contiguous from 0")

        object.__setattr__(self, "segments", segments)

    @property
    def n_players(self) -> int:
        """Number of superpixels."""
        return int(self.segments.max()) + 1

    @property
    def shape(self) -> tuple[int, int]:
        """`(H, W)`."""
        h, w = self.segments.shape
        return h, w

    @property
    def sizes(self) -> np.ndarray:
        """Pixel count of every superpixel."""
        return np.bincount(self.segments.ravel(), minlength=self.n_players)

    def keep_maps(self, coalitions: np.ndarray) -> np.ndarray:
        """`[B, H, W]` float maps, 1 where a pixel's superpixel is in the coalition.

        Args:
            coalitions: `B` bitmasks, bit `i` set when superpixel `i` is present.
        """
        players = (coalitions[:, None] >> np.arange(self.n_players)) & 1
        return players[:, self.segments].astype(np.float64)

    def expand(self, values: np.ndarray) -> np.ndarray:
        """Spread per-superpixel values uniformly over their pixels.

        Args:
            values: `[n]` values, or `[..., n]` for several outputs.

        Returns:
            A `[..., H, W]` map whose sum over each superpixel is its value.
        """
        per_pixel = np.asarray(values, dtype=np.float64) / self.sizes
        return per_pixel[..., self.segments]


def grid_partition(
    height: int,
    width: int,
    rows: int,
    cols: int,
) -> SuperpixelPartition:
    """Near-equal rectangular tiles numbered row-major.

    Tile heights and widths differ by at most one pixel, the larger tiles
    come first.

    Raises:
        TooManyPlayersError: If `rows * cols > 20`.
    """
    if rows < 1 or cols < 1 or rows > height or cols > width:
        raise ValueError(f"Cannot split {height}x{width} into {rows}x{cols} tiles")
    if rows * cols > MAX_PLAYERS:
        raise TooManyPlayersError(rows * cols, MAX_PLAYERS)

    row_chunks = np.array_split(np.arange(height), rows)
    col_chunks = np.array_split(np.arange(width), cols)
    row_of = np.concatenate([np.full(len(c), i) for i, c in enumerate(row_chunks)])
    col_of = np.concatenate([np.full(len(c), j) for j, c in enumerate(col_chunks)])
    return SuperpixelPartition(row_of[:, None] * cols + col_of[None, :])

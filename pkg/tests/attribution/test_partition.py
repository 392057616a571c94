from __future__ import annotations

import numpy as np
import pytest

from dtkd.attribution import SuperpixelPartition, grid_partition
from dtkd.exceptions import TooManyPlayersError


def test_grid_tiles_differ_by_at_most_one() -> None:
    partition = grid_partition(5, 5, 2, 2)

    assert partition.n_players == 4
    assert partition.sizes.tolist() == [9, 6, 6, 4]
    assert partition.segments[0].tolist() == [0, 0, 0, 1, 1]
    assert partition.segments[:, 0].tolist() == [0, 0, 0, 2, 2]


def test_grid_covers_every_pixel() -> None:
    partition = grid_partition(32, 32, 4, 4)
    assert partition.sizes.sum() == 32 * 32
    assert set(np.unique(partition.segments)) == set(range(16))


def test_grid_errors() -> None:
    with pytest.raises(TooManyPlayersError):
        grid_partition(32, 32, 5, 5)
    with pytest.raises(ValueError, match="Cannot split"):
        grid_partition(2, 2, 3, 1)


def test_ids_must_be_contiguous() -> None:
    with pytest.raises(ValueError, match="contiguous"):
        SuperpixelPartition(np.array([[0, 2], [2, 0]]))


def test_keep_maps() -> None:
    partition = grid_partition(2, 2, 1, 2)
    keep = partition.keep_maps(np.array([0b00, 0b01, 0b10, 0b11]))

    assert keep.shape == (4, 2, 2)
    np.testing.assert_array_equal(keep[1], [[1, 0], [1, 0]])
    np.testing.assert_array_equal(keep[3], 1)


def test_expand_preserves_superpixel_sums() -> None:
    partition = grid_partition(5, 5, 2, 2)
    values = np.array([0.9, -0.3, 0.6, 1.2])
    expanded = partition.expand(values)

    for i, v in enumerate(values):
        assert expanded[partition.segments == i].sum() == pytest.approx(v, abs=1e-9)

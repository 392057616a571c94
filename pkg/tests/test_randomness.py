from __future__ import annotations

from typing import TypeVar

import numpy as np
import pytest
from pytest_cases import case, parametrize, parametrize_with_cases

from dtkd.randomness import Op, SplitMix64, as_rng, derive_seed
from dtkd.types import Seed

S = TypeVar("S", bound=Seed)


@case(tags=["static"])
def case_int_seed() -> tuple[int, int]:
    return 37, 37


@case(tags=["dynamic"])
def case_generator_seed() -> tuple[np.random.Generator, np.random.Generator]:
    return np.random.default_rng(1337), np.random.default_rng(1337)


@parametrize_with_cases("seeds", cases=".")
def test_as_rng_reproducible(seeds: tuple[S, S]):
    seed1, seed2 = seeds
    first = as_rng(seed1).integers(0, 100, 10).tolist()
    assert first == as_rng(seed2).integers(0, 100, 10).tolist()


def test_as_rng_passes_generators_through():
    rng = np.random.default_rng(0)
    assert as_rng(rng) is rng


def test_as_rng_rejects_other_seeds():
    with pytest.raises(ValueError, match="Can't"):
        as_rng("seed")  # type: ignore[arg-type]


def test_splitmix64_reference_outputs():
    rng = SplitMix64(0)
    assert [rng.next_u64() for _ in range(3)] == [
        0xE220A8397B1DCDAF,
        0x6E789E6AA1B965F4,
        0x06C45D188009454F,
    ]


def test_streams_depend_on_every_part():
    base = SplitMix64.stream(42, 3, Op.QUARTER_BLACK).next_u64()
    assert base == SplitMix64.stream(42, 3, Op.QUARTER_BLACK).next_u64()
    assert base != SplitMix64.stream(43, 3, Op.QUARTER_BLACK).next_u64()
    assert base != SplitMix64.stream(42, 4, Op.QUARTER_BLACK).next_u64()
    assert base != SplitMix64.stream(42, 3, Op.CENTER_BLACK).next_u64()
    assert derive_seed(1, 2) != derive_seed(2, 1)


@parametrize(low_high=[(0, 1), (0, 4), (-3, 3), (5, 1000)])
def test_integers_stay_in_range(low_high: tuple[int, int]):
    low, high = low_high
    rng = SplitMix64(7)
    draws = [rng.integers(low, high) for _ in range(500)]
    assert min(draws) >= low
    assert max(draws) < high


def test_integers_rejects_empty_range():
    with pytest.raises(ValueError, match="Empty range"):
        SplitMix64(0).integers(3, 3)


def test_random_is_a_unit_float():
    rng = SplitMix64(1)
    draws = np.array([rng.random() for _ in range(1000)])
    assert np.all((draws >= 0) & (draws < 1))
    assert 0.4 < draws.mean() < 0.6


def test_permutation_is_a_permutation():
    order = SplitMix64(5).permutation(50)
    assert sorted(order.tolist()) == list(range(50))
    assert order.tolist() == SplitMix64(5).permutation(50).tolist()

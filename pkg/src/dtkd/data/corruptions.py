"""Training-set complexity: image corruptions, label noise and subsetting.

All random decisions draw from [`SplitMix64`][dtkd.randomness.SplitMix64]
streams keyed by `(seed, sample index, operation)`, so a corrupted dataset is
a pure function of its input, the spec and the seed.

```python
from dtkd.data import CorruptionSpec, apply_corruption

spec = CorruptionSpec(kind="center_black", apply_fraction=0.5, seed=7)
corrupted = apply_corruption(train, spec)
```
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Literal, TypeAlias

import numpy as np

from dtkd.exceptions import (
    EmptyResultError,
    InvalidProbabilityError,
    InvalidRangeError,
    OddDimensionError,
    SingleClassError,
    SplitError,
)
from dtkd.randomness import Op, SplitMix64, derive_seed
from dtkd.types import assert_never

if TYPE_CHECKING:
    from dtkd.data.datasets import ImageDataset

logger = logging.getLogger(__name__)

CorruptionKind: TypeAlias = Literal["center_black", "quarter_black", "label_noise"]

CENTER_MIN_RATIO = 200 / 224
"""Smallest center patch relative to the image side when no range is given."""


def round_half_up(x: float) -> int:
    """Round to the nearest integer, halves away from zero for positive `x`."""
    return int(np.floor(x + 0.5))


def quarter_black(img: np.ndarray, rng: SplitMix64) -> np.ndarray:
    """Zero one of the four quadrants of a `[C, H, W]` image in every channel.

    Raises:
        OddDimensionError: If `H` or `W` is odd.
    """
    h, w = img.shape[-2:]
    if h % 2 or w % 2:
        raise OddDimensionError("quarter_black", img.shape)

    quadrant = rng.integers(0, 4)
    top = (quadrant // 2) * (h // 2)
    left = (quadrant % 2) * (w // 2)
    out = img.copy()
    out[..., top : top + h // 2, left : left + w // 2] = 0.0
    return out


def default_side_range(side: int) -> tuple[int, int]:
    """Center patch sizes from `200/224` of the side up to the full side."""
    return max(1, round_half_up(CENTER_MIN_RATIO * side)), side


def center_black(
    img: np.ndarray,
    min_side: int,
    max_side: int,
    rng: SplitMix64,
) -> np.ndarray:
    """Zero a centered square whose side is uniform over `[min_side, max_side]`.

    The square starts at `floor((S - x) / 2)` on both axes.

    Raises:
        InvalidRangeError: Unless `0 < min_side <= max_side <= S` for a square image.
    """
    h, w = img.shape[-2:]
    if h != w:
        raise InvalidRangeError(f"center_black needs a square image, got {h}x{w}")
    if not 0 < min_side <= max_side <= h:
        raise InvalidRangeError(
            f"Need 0 < min_side <= max_side <= {h}, got [{min_side}, {max_side}]",
        )

    x = rng.integers(min_side, max_side + 1)
    offset = (h - x) // 2
    out = img.copy()
    out[..., offset : offset + x, offset : offset + x] = 0.0
    return out


def apply_label_noise(ds: ImageDataset, fraction: float, seed: int) -> ImageDataset:
    """Give `round(fraction * N)` samples a random label other than their own.

    The replacement label is `(y + 1 + u) mod K` with `u` uniform over `[0, K-2]`,
    so every other class is equally likely and no label maps to itself.

    Raises:
        InvalidProbabilityError: If `fraction` is outside `[0, 1]`.
        SingleClassError: If `K < 2`.
    """
    if not 0 <= fraction <= 1:
        raise InvalidProbabilityError(f"fraction must be in [0, 1], got {fraction}")

    k = ds.num_classes
    if k < 2:  # noqa: PLR2004
        raise SingleClassError(f"Cannot relabel a dataset with {k} class")

    n = len(ds)
    count = round_half_up(fraction * n)
    chosen = SplitMix64(derive_seed(seed, Op.LABEL_NOISE)).permutation(n)[:count]

    labels = ds.labels.copy()
    for i in chosen:
        rng = SplitMix64.stream(seed, int(i), Op.LABEL_NOISE)
        labels[i] = (labels[i] + 1 + rng.integers(0, k - 1)) % k

    logger.debug(f"Relabelled {count} of {n} samples")
    return replace(ds, labels=labels)


def subset_training_fraction(
    ds: ImageDataset,
    fraction: float,
    seed: int,
) -> ImageDataset:
    """Keep `round(fraction * n_c)` samples of every class `c`.

    Retained samples keep their original order, so `fraction == 1` returns the
    dataset unchanged.

    Raises:
        InvalidProbabilityError: If `fraction` is outside `(0, 1]`.
        EmptyResultError: If a present class would keep no sample.
    """
    if not 0 < fraction <= 1:
        raise InvalidProbabilityError(f"fraction must be in (0, 1], got {fraction}")

    keep: list[np.ndarray] = []
    for c in range(ds.num_classes):
        members = np.flatnonzero(ds.labels == c)
        if members.size == 0:
            continue

        n_keep = round_half_up(fraction * members.size)
        if n_keep == 0:
            raise EmptyResultError(
                f"fraction={fraction} keeps no sample of class {ds.class_names[c]!r}"
                f" ({members.size} available)",
            )
        perm = SplitMix64(derive_seed(seed, c, Op.SUBSET)).permutation(members.size)
        keep.append(members[perm[:n_keep]])

    indices = np.sort(np.concatenate(keep)) if keep else np.empty(0, dtype=np.int64)
    logger.debug(f"Kept {indices.size} of {len(ds)} samples at fraction {fraction}")
    return ds.subset(indices)


@dataclass(frozen=True, kw_only=True)
class CorruptionSpec:
    """A corruption applied to part of a training set.

    Attributes:
        kind: Which corruption to apply.
        apply_fraction: Fraction of samples affected.
        side_range: `(min_side, max_side)` for `center_black`, scaled from the
            image side when `None`.
        seed: Seed of the corruption streams.
    """

    kind: CorruptionKind
    apply_fraction: float = 1.0
    side_range: tuple[int, int] | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("center_black", "quarter_black", "label_noise"):
            raise ValueError(f"Unknown corruption kind {self.kind!r}")
        if not 0 <= self.apply_fraction <= 1:
            raise InvalidProbabilityError(
                f"apply_fraction must be in [0, 1], got {self.apply_fraction}",
            )
        if self.side_range is not None:
            lo, hi = self.side_range
            if not 0 < lo <= hi:
                raise InvalidRangeError(f"Invalid side range {self.side_range}")


def apply_corruption(ds: ImageDataset, spec: CorruptionSpec) -> ImageDataset:
    """Apply `spec` to a training set.

    Raises:
        SplitError: If `ds` is not a training split.
    """
    if ds.split != "train":
        raise SplitError(f"Corruptions apply to the train split only, got {ds.split!r}")

    if spec.kind == "label_noise":
        return apply_label_noise(ds, spec.apply_fraction, spec.seed)

    n = len(ds)
    count = round_half_up(spec.apply_fraction * n)
    rng = SplitMix64(derive_seed(spec.seed, Op.APPLY))
    chosen = np.sort(rng.permutation(n)[:count])
    side = ds.image_shape[0]
    lo, hi = spec.side_range or default_side_range(side)

    images = ds.images.copy()
    for i in chosen:
        match spec.kind:
            case "quarter_black":
                rng = SplitMix64.stream(spec.seed, int(i), Op.QUARTER_BLACK)
                images[i] = quarter_black(images[i], rng)
            case "center_black":
                rng = SplitMix64.stream(spec.seed, int(i), Op.CENTER_BLACK)
                images[i] = center_black(images[i], lo, hi, rng)
            case _:
                assert_never(spec.kind)  # type: ignore[arg-type]

    logger.debug(f"Applied {spec.kind} to {count} of {n} images")
    return replace(ds, images=images)

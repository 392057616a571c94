"""From loaded images to model inputs."""
from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import replace

from dtkd.data.corruptions import CorruptionSpec, apply_corruption
from dtkd.data.datasets import ImageDataset
from dtkd.data.transforms import (
    CIFAR10_MEAN,
    CIFAR10_STD,
    normalize,
    resize_bilinear,
    resize_nearest,
)

logger = logging.getLogger(__name__)


def prepare(
    ds: ImageDataset,
    image_size: int | None = None,
    *,
    mean: Sequence[float] = CIFAR10_MEAN,
    std: Sequence[float] = CIFAR10_STD,
    corruptions: Sequence[CorruptionSpec] = (),
) -> ImageDataset:
    """Resize, corrupt and normalize a dataset, in that order.

    Corruptions black out pixels in `[0, 1]` space before normalization and are
    only applied to a training split.

    Args:
        ds: Images in `[0, 1]`.
        image_size: Side of the resized square images, unchanged when `None`.
        mean: Per-channel normalization mean.
        std: Per-channel normalization standard deviation.
        corruptions: Applied in order when `ds` is a training split.
    """
    out = ds
    if image_size is not None and out.image_shape != (image_size, image_size):
        out = replace(
            out,
            images=resize_bilinear(out.images, image_size, image_size),
            masks=(
                None
                if out.masks is None
                else resize_nearest(out.masks, image_size, image_size)
            ),
        )

    if out.split == "train":
        for spec in corruptions:
            out = apply_corruption(out, spec)
    elif corruptions:
        logger.debug(
            f"Skipping {len(corruptions)} corruptions on the {out.split} split",
        )

    return replace(out, images=normalize(out.images, mean, std))

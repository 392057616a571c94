"""Coalition games played by a model on one image.

Superpixels are the players. A coalition keeps its superpixels' pixels and
replaces every other pixel by the matching pixel of a reference image, so
`v(empty)` is the model output on the reference and `v(all)` the output on
the image itself.
"""
from __future__ import annotations

import logging
from collections.abc import Sequence
from typing import Literal, TypeAlias

import numpy as np
from more_itertools import chunked

from dtkd.attribution.partition import SuperpixelPartition
from dtkd.attribution.shapley import CoalitionGame
from dtkd.autodiff import Tensor
from dtkd.data.transforms import CIFAR10_MEAN, CIFAR10_STD, normalize
from dtkd.exceptions import EmptySetError, ShapeMismatchError
from dtkd.losses import softmax
from dtkd.nn import Model
from dtkd.options import get_option
from dtkd.types import OutputKind, assert_never

logger = logging.getLogger(__name__)

ReferenceKind: TypeAlias = Literal["mean", "black"]
ExpectationMode: TypeAlias = Literal["reference", "average"]


def model_outputs(
    model: Model,
    images: np.ndarray,
    output: OutputKind = "logits",
) -> np.ndarray:
    """Eval-mode logits or softmax probabilities for a stack of images."""
    logits = model.predict(images, batch_size=get_option("attribution_batch_size"))
    match output:
        case "logits":
            return logits
        case "softmax":
            return softmax(Tensor.wrap(logits)).data
        case _:
            assert_never(output)


def reference_image(
    background_set: np.ndarray,
    kind: ReferenceKind = "mean",
    *,
    mean: Sequence[float] = CIFAR10_MEAN,
    std: Sequence[float] = CIFAR10_STD,
) -> np.ndarray:
    """The per-pixel image absent superpixels are replaced with.

    Args:
        background_set: `[B, 3, H, W]` normalized images.
        kind: `mean` averages the background set, `black` is an all-zero image
            pushed through the same normalization.
        mean: Normalization mean, used by `black`.
        std: Normalization standard deviation, used by `black`.

    Raises:
        EmptySetError: If the background set is empty.
    """
    if len(background_set) == 0:
        raise EmptySetError("The background set holds no images")

    match kind:
        case "mean":
            return background_set.mean(axis=0)
        case "black":
            return normalize(np.zeros(background_set.shape[1:]), mean, std)
        case _:
            assert_never(kind)


def background_expected_value(
    model: Model,
    background_set: np.ndarray,
    class_index: int | None = None,
    *,
    mode: ExpectationMode = "reference",
    output: OutputKind = "logits",
) -> float | np.ndarray:
    """The model output the attributions of an image are measured against.

    With `mode="reference"` this is the output on the mean background image,
    which is `v(empty)` of every model game and makes attributions add up
    exactly. `mode="average"` averages the outputs over the background set
    instead.

    Args:
        model: The model.
        background_set: `[B, 3, H, W]` normalized images.
        class_index: The class, all classes when `None`.
        mode: How the background is summarized.
        output: Logits or softmax probabilities.

    Raises:
        EmptySetError: If the background set is empty.
    """
    if len(background_set) == 0:
        raise EmptySetError("The background set holds no images")

    match mode:
        case "reference":
            reference = reference_image(background_set)[None]
            values = model_outputs(model, reference, output)[0]
        case "average":
            values = model_outputs(model, background_set, output).mean(axis=0)
        case _:
            assert_never(mode)

    return values if class_index is None else float(values[class_index])


def model_games(
    model: Model,
    image: np.ndarray,
    partition: SuperpixelPartition,
    reference: np.ndarray,
    *,
    output: OutputKind = "logits",
) -> CoalitionGame:
    """Evaluate every coalition of superpixels at once.

    Composites `reference + (image - reference) * keep` are pushed through the
    model in batches of the `attribution_batch_size` option.

    Returns:
        A game whose values are `[2^n, K]`, one column per class.

    Raises:
        ShapeMismatchError: If image, reference and partition disagree on size.
    """
    if image.shape != reference.shape or image.shape[-2:] != partition.shape:
        raise ShapeMismatchError(
            "model_games",
            image.shape,
            reference.shape,
            partition.shape,
        )

    n = partition.n_players
    delta = image - reference
    tables = []
    for batch in chunked(range(1 << n), get_option("attribution_batch_size")):
        keep = partition.keep_maps(np.asarray(batch, dtype=np.int64))
        composites = reference[None] + delta[None] * keep[:, None, :, :]
        tables.append(model_outputs(model, composites, output))

    values = np.concatenate(tables, axis=0)
    logger.debug(f"Evaluated {values.shape[0]} coalitions of {n} superpixels")
    return CoalitionGame(n, values)


def model_game(
    model: Model,
    image: np.ndarray,
    partition: SuperpixelPartition,
    reference: np.ndarray,
    class_index: int,
    *,
    output: OutputKind = "logits",
) -> CoalitionGame:
    """The game of one class, see [`model_games`][dtkd.attribution.model_games]."""
    games = model_games(model, image, partition, reference, output=output)
    return games.column(class_index)

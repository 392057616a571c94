"""Shapley attribution of a model's prediction on one image."""
from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from dtkd.attribution.games import (
    ReferenceKind,
    model_games,
    model_outputs,
    reference_image,
)
from dtkd.attribution.partition import SuperpixelPartition
from dtkd.attribution.shapley import exact_shapley
from dtkd.nn import Model
from dtkd.profiling import Timer
from dtkd.types import OutputKind

logger = logging.getLogger(__name__)

ADDITIVITY_ATOL = 1e-6


@dataclass(frozen=True, kw_only=True, eq=False)
class AttributionReport:
    """Per-class Shapley values of every superpixel.

    Attributes:
        classes: Class indices the report covers.
        expected_values: `E[y]` of each covered class, the output on the reference.
        shapley_values: `[len(classes), n]` contribution of each superpixel.
        outputs: Model output on the full image for each covered class.
        winning_class: Argmax of the model output on the full image.
        output_kind: Whether games were played on logits or softmax outputs.
        partition: The superpixels.
        class_names: Names of all model classes, may be empty.
        runtime: Wall time of the attribution in seconds.
    """

    classes: tuple[int, ...]
    expected_values: np.ndarray
    shapley_values: np.ndarray
    outputs: np.ndarray
    winning_class: int
    output_kind: OutputKind
    partition: SuperpixelPartition
    class_names: tuple[str, ...] = field(default=())
    runtime: float = 0.0

    def _row(self, class_index: int) -> int:
        try:
            return self.classes.index(class_index)
        except ValueError as e:
            raise KeyError(
                f"Class {class_index} is not covered, only {self.classes}",
            ) from e

    def shapley(self, class_index: int) -> np.ndarray:
        """`[n]` superpixel contributions for one class."""
        return self.shapley_values[self._row(class_index)]

    def pixel_map(self, class_index: int | None = None) -> np.ndarray:
        """`[H, W]` map spreading each superpixel's value over its pixels.

        Args:
            class_index: The class, the winning class when `None`.
        """
        k = self.winning_class if class_index is None else class_index
        return self.partition.expand(self.shapley(k))

    def additivity_error(self) -> float:
        """Largest `|E[y] + sum(phi) - output|` over the covered classes."""
        reconstructed = self.expected_values + self.shapley_values.sum(axis=1)
        return float(np.max(np.abs(reconstructed - self.outputs)))

    def to_dict(self, *, runtime: bool = False) -> dict[str, Any]:
        """A JSON-serializable representation keyed by class.

        Args:
            runtime: Include the wall time, which differs between identical runs.
        """

        def name(k: int) -> str:
            return self.class_names[k] if self.class_names else str(k)

        d: dict[str, Any] = {
            "output_kind": self.output_kind,
            "winning_class": self.winning_class,
            "n_superpixels": self.partition.n_players,
            "classes": {
                name(k): {
                    "index": k,
                    "expected_value": float(self.expected_values[i]),
                    "output": float(self.outputs[i]),
                    "shapley": self.shapley_values[i].tolist(),
                }
                for i, k in enumerate(self.classes)
            },
        }
        if runtime:
            d["runtime"] = self.runtime
        return d


def attribute(
    model: Model,
    image: np.ndarray,
    partition: SuperpixelPartition,
    background_set: np.ndarray,
    *,
    reference: ReferenceKind = "mean",
    output: OutputKind = "logits",
    winning_only: bool = False,
    class_names: Sequence[str] = (),
) -> AttributionReport:
    """Exact Shapley values of every superpixel for every class.

    Absent superpixels take the pixels of a reference image derived from the
    background set, so the expected value of a class is the model output on
    that reference and `E[y] + sum(phi)` recovers the output on `image`.

    Args:
        model: The model, evaluated in eval mode.
        image: A normalized `[3, H, W]` image.
        partition: The superpixels, players of the game.
        background_set: `[B, 3, H, W]` normalized images.
        reference: `mean` of the background set or a `black` image.
        output: Play the games on logits or softmax probabilities.
        winning_only: Keep only the winning class in the report.
        class_names: Names of the model classes.

    Raises:
        EmptySetError: If the background set is empty.
        TooManyPlayersError: If the partition has more than 20 superpixels.
    """
    with Timer.time() as interval:
        ref = reference_image(background_set, reference)
        game = model_games(model, image, partition, ref, output=output)
        phi = exact_shapley(game).T
        actual = model_outputs(model, image[None], output)[0]

    winner = int(np.argmax(actual))
    classes = (winner,) if winning_only else tuple(range(actual.shape[0]))
    rows = list(classes)
    report = AttributionReport(
        classes=classes,
        expected_values=game.empty_value[rows],
        shapley_values=phi[rows],
        outputs=actual[rows],
        winning_class=winner,
        output_kind=output,
        partition=partition,
        class_names=tuple(class_names),
        runtime=interval.duration,
    )
    error = report.additivity_error()
    if error > ADDITIVITY_ATOL:
        logger.warning(
            f"Attribution does not add up to the model output, off by {error}",
        )
    logger.debug(
        f"Attributed {partition.n_players} superpixels in {interval.duration:.3f}s,"
        f" winning class {winner}",
    )
    return report

"""Foreground masks from COCO polygon annotations."""
from __future__ import annotations

import json
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from dtkd.exceptions import (
    InvalidMaskError,
    MalformedPolygonError,
    MissingAnnotationError,
)

logger = logging.getLogger(__name__)

Polygon = list[tuple[float, float]]


@dataclass(frozen=True, eq=False)
class SegmentationMask:
    """Per-pixel foreground flags of one image.

    Attributes:
        width: Image width.
        height: Image height.
        foreground: A `[height, width]` boolean array.
        polygons: The polygons the mask was rasterized from, if any.
    """

    width: int
    height: int
    foreground: np.ndarray
    polygons: tuple[Polygon, ...] = field(default=())

    def __post_init__(self) -> None:
        fg = np.asarray(self.foreground, dtype=bool)
        if fg.shape != (self.height, self.width):
            raise InvalidMaskError(
                f"Mask of shape {fg.shape} for a {self.width}x{self.height} image",
            )
        object.__setattr__(self, "foreground", fg)

    @classmethod
    def from_array(cls, foreground: np.ndarray) -> SegmentationMask:
        """Wrap a boolean `[H, W]` array."""
        h, w = foreground.shape
        return cls(width=w, height=h, foreground=foreground)

    @property
    def background(self) -> np.ndarray:
        """The complement of the foreground."""
        return ~self.foreground

    @property
    def foreground_fraction(self) -> float:
        """Share of pixels in the foreground."""
        return float(self.foreground.mean())

    def validate(self) -> SegmentationMask:
        """Ensure both regions are non-empty.

        Raises:
            InvalidMaskError: If either region has no pixels.
        """
        n_fg = int(self.foreground.sum())
        if n_fg == 0 or n_fg == self.foreground.size:
            region = "background" if n_fg else "foreground"
            raise InvalidMaskError(f"Mask has no {region} pixels")
        return self


def rasterize_polygon(
    vertices: Sequence[tuple[float, float]],
    width: int,
    height: int,
) -> np.ndarray:
    """Even-odd point-in-polygon test at every pixel center `(j + 0.5, i + 0.5)`.

    A ray is cast towards `+x`; an edge counts when it straddles the center's row
    and crosses strictly to the right of it, so centers on an edge are outside.
    """
    px = np.arange(width)[None, :] + 0.5
    py = np.arange(height)[:, None] + 0.5
    inside = np.zeros((height, width), dtype=bool)

    for (x1, y1), (x2, y2) in zip(vertices, [*vertices[1:], vertices[0]]):
        if y1 == y2:
            continue
        straddles = (y1 > py) != (y2 > py)
        x_cross = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        inside ^= straddles & (px < x_cross)

    return inside


def _polygon(flat: Sequence[float], image_id: int) -> Polygon:
    if len(flat) % 2 or len(flat) < 6:  # noqa: PLR2004
        raise MalformedPolygonError(
            f"Polygon of image {image_id} has {len(flat)} coordinates,"
            " need an even count of at least 6",
        )
    return [(float(flat[i]), float(flat[i + 1])) for i in range(0, len(flat), 2)]


def load_coco_mask(
    json_path: Path | str,
    image_id: int,
    width: int | None = None,
    height: int | None = None,
) -> SegmentationMask:
    """Rasterize every polygon annotated for `image_id` into one mask.

    Args:
        json_path: A COCO style annotation file.
        image_id: The image whose annotations to use.
        width: Raster width, taken from the `images` entry when `None`.
        height: Raster height, taken from the `images` entry when `None`.

    Raises:
        MissingAnnotationError: If the image has no annotation.
        MalformedPolygonError: If a polygon has fewer than 3 vertices or is not
            a polygon at all.
    """
    coco = json.loads(Path(json_path).read_text())
    annotations = [
        a for a in coco.get("annotations", []) if a.get("image_id") == image_id
    ]
    if not annotations:
        raise MissingAnnotationError(
            f"No annotation for image {image_id} in {json_path}",
        )

    if width is None or height is None:
        images = coco.get("images", [])
        info = next((im for im in images if im.get("id") == image_id), None)
        if info is None:
            raise MissingAnnotationError(
                f"No size given or listed for image {image_id}",
            )
        width, height = int(info["width"]), int(info["height"])

    polygons: list[Polygon] = []
    for annotation in annotations:
        segmentation = annotation.get("segmentation")
        if not isinstance(segmentation, list):
            raise MalformedPolygonError(
                f"Annotation {annotation.get('id')} is not a polygon segmentation",
            )
        polygons.extend(_polygon(flat, image_id) for flat in segmentation)

    foreground = np.zeros((height, width), dtype=bool)
    for polygon in polygons:
        foreground |= rasterize_polygon(polygon, width, height)

    logger.debug(
        f"Image {image_id}: {len(polygons)} polygons,"
        f" {int(foreground.sum())} foreground pixels",
    )
    return SegmentationMask(width, height, foreground, tuple(polygons))


def masks_to_coco(masks: Mapping[int, SegmentationMask]) -> dict[str, Any]:
    """A COCO document with one box polygon per foreground run of every row.

    Loading it back with [`load_coco_mask`][dtkd.data.load_coco_mask] reproduces
    each mask exactly.
    """
    images, annotations = [], []
    for image_id, mask in masks.items():
        segmentation = []
        for i, row in enumerate(mask.foreground):
            padded = np.concatenate([[False], row, [False]])
            edges = np.flatnonzero(padded[1:] != padded[:-1])
            for start, stop in zip(edges[::2], edges[1::2]):
                corners = (start, i, stop, i, stop, i + 1, start, i + 1)
                segmentation.append([int(v) for v in corners])

        images.append({"id": int(image_id), "width": mask.width, "height": mask.height})
        annotations.append(
            {
                "id": len(annotations) + 1,
                "image_id": int(image_id),
                "category_id": 1,
                "segmentation": segmentation,
            },
        )

    return {"images": images, "annotations": annotations}

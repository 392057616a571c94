"""Binary PPM (P6) images for visual inspection."""
from __future__ import annotations

import logging
import re
from pathlib import Path

import numpy as np

from dtkd.exceptions import FormatError

logger = logging.getLogger(__name__)

_HEADER = re.compile(rb"P6\s+(?:#[^\n]*\s+)*(\d+)\s+(?:#[^\n]*\s+)*(\d+)\s+(?:#[^\n]*\s+)*(\d+)\s")


def encode_ppm(image: np.ndarray) -> bytes:
    """A `[3, H, W]` image with values in `[0, 1]` as P6 bytes, clipped."""
    if image.ndim != 3 or image.shape[0] != 3:  # noqa: PLR2004
        raise ValueError(f"Expected a [3, H, W] image, got {image.shape}")

    _, h, w = image.shape
    pixels = np.rint(np.clip(image, 0.0, 1.0) * 255).astype(np.uint8)
    return f"P6\n{w} {h}\n255\n".encode("ascii") + pixels.transpose(1, 2, 0).tobytes()


def decode_ppm(blob: bytes) -> np.ndarray:
    """Parse P6 bytes into a `[3, H, W]` float image.

    Raises:
        FormatError: If the header is not a P6 header with maxval 255 or the
            pixel data is short.
    """
    match = _HEADER.match(blob)
    if match is None:
        raise FormatError("Not a binary PPM (P6) image")

    w, h, maxval = (int(g) for g in match.groups())
    if maxval != 255:  # noqa: PLR2004
        raise FormatError(f"Only maxval 255 is supported, got {maxval}")

    body = np.frombuffer(blob, dtype=np.uint8, offset=match.end())
    if body.size != 3 * w * h:
        raise FormatError(f"Expected {3 * w * h} pixel bytes, got {body.size}")

    return body.reshape(h, w, 3).transpose(2, 0, 1) / 255.0


def write_ppm(path: Path | str, image: np.ndarray) -> None:
    """Write a `[3, H, W]` image in `[0, 1]` to `path`."""
    Path(path).write_bytes(encode_ppm(image))
    logger.debug(f"Wrote {image.shape[2]}x{image.shape[1]} PPM to {path}")


def read_ppm(path: Path | str) -> np.ndarray:
    """Read a P6 file as a `[3, H, W]` image in `[0, 1]`."""
    return decode_ppm(Path(path).read_bytes())


def attribution_heatmap(
    values: np.ndarray,
    base: np.ndarray | None = None,
) -> np.ndarray:
    """Render a per-pixel map as red (positive) and blue (negative) intensity.

    Args:
        values: A `[H, W]` attribution map.
        base: An optional `[3, H, W]` image in `[0, 1]`, blended in as gray.

    Returns:
        A `[3, H, W]` image in `[0, 1]`.
    """
    scale = float(np.max(np.abs(values))) or 1.0
    heat = np.zeros((3, *values.shape))
    heat[0] = np.clip(values, 0, None) / scale
    heat[2] = np.clip(-values, 0, None) / scale

    if base is None:
        return heat

    gray = base.mean(axis=0, keepdims=True)
    return np.clip(0.5 * gray + heat, 0.0, 1.0)

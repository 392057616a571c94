"""Per-image transforms.

Every transform takes a `[..., H, W]` array (a single `[3, H, W]` image or a
`[N, 3, H, W]` stack) and returns a new array of the same leading shape.
"""
from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np

from dtkd.exceptions import ZeroSigmaError
from dtkd.randomness import SplitMix64

logger = logging.getLogger(__name__)

CIFAR10_MEAN = (0.4914, 0.4822, 0.4465)
CIFAR10_STD = (0.2471, 0.2435, 0.2616)


def _channel_stats(
    mean: Sequence[float] | np.ndarray,
    std: Sequence[float] | np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    mu = np.asarray(mean, dtype=np.float64).reshape(-1, 1, 1)
    sigma = np.asarray(std, dtype=np.float64).reshape(-1, 1, 1)
    if np.any(sigma <= 0):
        raise ZeroSigmaError(
            f"Every channel std must be > 0, got {sigma.ravel().tolist()}",
        )
    return mu, sigma


def normalize(
    img: np.ndarray,
    mean: Sequence[float] | np.ndarray = CIFAR10_MEAN,
    std: Sequence[float] | np.ndarray = CIFAR10_STD,
) -> np.ndarray:
    """`(img[c] - mean[c]) / std[c]` per channel.

    Raises:
        ZeroSigmaError: If any `std` is not strictly positive.
    """
    mu, sigma = _channel_stats(mean, std)
    return (img - mu) / sigma


def denormalize(
    img: np.ndarray,
    mean: Sequence[float] | np.ndarray = CIFAR10_MEAN,
    std: Sequence[float] | np.ndarray = CIFAR10_STD,
) -> np.ndarray:
    """The inverse of [`normalize`][dtkd.data.normalize]."""
    mu, sigma = _channel_stats(mean, std)
    return img * sigma + mu


def _sample_positions(
    n_in: int,
    n_out: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # half-pixel centers, clamped to the border
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def _nearest(n_in: int, n_out: int) -> np.ndarray:
    centers = ((np.arange(n_out) + 0.5) * n_in / n_out).astype(np.int64)
    return np.minimum(centers, n_in - 1)


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel centers.

    Output pixel `i` samples the input at `(i + 0.5) * in / out - 0.5`, clamped to
    the image, which is the `align_corners=False` convention. Resizing to the
    same size is the identity.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError(f"Output size must be positive, got {out_h}x{out_w}")

    in_h, in_w = img.shape[-2:]
    if (in_h, in_w) == (out_h, out_w):
        return img.copy()

    y0, y1, wy = _sample_positions(in_h, out_h)
    x0, x1, wx = _sample_positions(in_w, out_w)
    wy = wy[:, None]

    top = img[..., y0, :]
    bottom = img[..., y1, :]
    rows = top * (1 - wy) + bottom * wy
    return rows[..., x0] * (1 - wx) + rows[..., x1] * wx


def resize_nearest(mask: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbour resampling at the same half-pixel centers, for masks."""
    in_h, in_w = mask.shape[-2:]
    ys = _nearest(in_h, out_h)
    xs = _nearest(in_w, out_w)
    return mask[..., ys[:, None], xs]


def horizontal_flip(
    img: np.ndarray,
    prob: float,
    rng: SplitMix64 | None = None,
) -> np.ndarray:
    """Reverse the column order with probability `prob`.

    `prob == 0` never draws from `rng`.
    """
    if not 0 <= prob <= 1:
        raise ValueError(f"prob must be in [0, 1], got {prob}")

    if prob == 0:
        return img

    if rng is None:
        raise ValueError("A random flip requires an rng")

    if rng.random() < prob:
        return img[..., ::-1].copy()
    return img

"""Image datasets and their binary file formats.

Images are held as one `[N, 3, H, W]` float64 array with values in `[0, 1]`
until [`prepare`][dtkd.data.prepare] normalizes them. Grayscale sources are
replicated to three channels.
"""
from __future__ import annotations

import logging
import struct
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from dtkd.exceptions import (
    EmptyResultError,
    FormatError,
    LabelOutOfRangeError,
    TruncatedFileError,
)
from dtkd.randomness import Op, derive_seed
from dtkd.types import Split

logger = logging.getLogger(__name__)

CIFAR10_CLASSES = (
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
)
CIFAR10_RECORD = 1 + 3 * 32 * 32
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True, eq=False)
class ImageDataset:
    """Labelled images of one split.

    Attributes:
        images: A `[N, 3, H, W]` float array.
        labels: `N` class indices in `[0, K)`.
        class_names: One name per class, `K` in total.
        split: Whether this is training or validation data.
        ids: A stable id per sample, kept through subsetting.
        masks: Optional `[N, H, W]` foreground flags.
    """

    images: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]
    split: Split = "train"
    ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    masks: np.ndarray | None = None

    def __post_init__(self) -> None:
        images = np.asarray(self.images, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if images.ndim != 4 or images.shape[1] != 3:  # noqa: PLR2004
            raise ValueError(f"Images must be [N, 3, H, W], got {images.shape}")
        if len(images) != len(labels):
            raise ValueError(f"{len(images)} images but {len(labels)} labels")

        k = len(self.class_names)
        bad = (labels < 0) | (labels >= k)
        if np.any(bad):
            raise LabelOutOfRangeError(
                f"Label {labels[bad][0]} is out of range for {k} classes",
            )

        ids = np.asarray(self.ids, dtype=np.int64)
        if ids.size == 0 and len(labels) > 0:
            ids = np.arange(len(labels), dtype=np.int64)

        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "ids", ids)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def num_classes(self) -> int:
        """The number of classes K."""
        return len(self.class_names)

    @property
    def image_shape(self) -> tuple[int, int]:
        """`(H, W)` shared by every image."""
        return int(self.images.shape[2]), int(self.images.shape[3])

    def class_counts(self) -> np.ndarray:
        """Number of samples per class."""
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, indices: np.ndarray | Sequence[int]) -> ImageDataset:
        """The samples at `indices`, in that order."""
        idx = np.asarray(indices, dtype=np.int64)
        return replace(
            self,
            images=self.images[idx],
            labels=self.labels[idx],
            ids=self.ids[idx],
            masks=None if self.masks is None else self.masks[idx],
        )

    def with_split(self, split: Split) -> ImageDataset:
        """The same samples tagged as another split."""
        return replace(self, split=split)


def load_cifar10_binary(
    path: Path | str,
    *,
    split: Split = "train",
    class_names: Sequence[str] = CIFAR10_CLASSES,
) -> ImageDataset:
    """Read a CIFAR-10 binary batch.

    Each record is one label byte followed by 3072 channel-major pixel bytes.

    Raises:
        TruncatedFileError: If the size is not a multiple of 3073 bytes.
        LabelOutOfRangeError: If a label byte exceeds 9.
    """
    raw = np.frombuffer(Path(path).read_bytes(), dtype=np.uint8)
    if raw.size % CIFAR10_RECORD != 0:
        raise TruncatedFileError(
            f"{path} has {raw.size} bytes, not a multiple of {CIFAR10_RECORD}",
        )

    records = raw.reshape(-1, CIFAR10_RECORD)
    labels = records[:, 0].astype(np.int64)
    if np.any(labels > 9):  # noqa: PLR2004
        raise LabelOutOfRangeError(f"{path} has label {labels.max()} > 9")

    images = records[:, 1:].reshape(-1, 3, 32, 32) / 255.0
    logger.debug(f"Loaded {len(labels)} CIFAR-10 records from {path}")
    return ImageDataset(images, labels, tuple(class_names), split)


def _read_idx(path: Path, magic: int, rank: int) -> tuple[tuple[int, ...], np.ndarray]:
    blob = path.read_bytes()
    header = 4 + 4 * rank
    if len(blob) < header:
        raise TruncatedFileError(f"{path} is too short for an IDX header")

    (found,) = struct.unpack(">I", blob[:4])
    if found != magic:
        raise FormatError(f"{path} has IDX magic {found:#010x}, expected {magic:#010x}")

    dims = struct.unpack(f">{rank}I", blob[4:header])
    body = np.frombuffer(blob, dtype=np.uint8, offset=header)
    expected = int(np.prod(dims))
    if body.size < expected:
        raise TruncatedFileError(f"{path} holds {body.size} of {expected} values")
    if body.size > expected:
        raise FormatError(f"{path} has {body.size - expected} trailing bytes")

    return dims, body


def load_idx(
    images_path: Path | str,
    labels_path: Path | str,
    *,
    split: Split = "train",
    class_names: Sequence[str] = tuple(str(d) for d in range(10)),
) -> ImageDataset:
    """Read an IDX image file and its label file, MNIST style.

    Grayscale images are replicated to three identical channels.

    Raises:
        FormatError: On a wrong magic number or mismatched counts.
        TruncatedFileError: If a file ends early.
        LabelOutOfRangeError: If a label has no class name.
    """
    dims, pixels = _read_idx(Path(images_path), IDX_IMAGES_MAGIC, rank=3)
    (n_labels,), labels = _read_idx(Path(labels_path), IDX_LABELS_MAGIC, rank=1)
    n, rows, cols = dims
    if n != n_labels:
        raise FormatError(f"{n} images but {n_labels} labels")

    gray = pixels.reshape(n, 1, rows, cols) / 255.0
    return ImageDataset(
        np.repeat(gray, 3, axis=1),
        labels.astype(np.int64),
        tuple(class_names),
        split,
    )


def select_classes(ds: ImageDataset, classes: Sequence[int | str]) -> ImageDataset:
    """Keep samples of `classes` and relabel them `0..k-1` in the given order.

    Raises:
        EmptyResultError: If no sample belongs to any of `classes`.
    """
    wanted = [c if isinstance(c, int) else ds.class_names.index(c) for c in classes]
    mapping = np.full(ds.num_classes, -1, dtype=np.int64)
    mapping[wanted] = np.arange(len(wanted))

    keep = np.flatnonzero(mapping[ds.labels] >= 0)
    if keep.size == 0:
        raise EmptyResultError(f"No samples of classes {list(classes)}")

    sub = ds.subset(keep)
    return replace(
        sub,
        labels=mapping[sub.labels],
        class_names=tuple(ds.class_names[c] for c in wanted),
    )


SHAPES = ("square", "disk", "cross", "ring", "triangle")
PALETTE = np.array(
    [
        [0.90, 0.10, 0.10],
        [0.10, 0.70, 0.20],
        [0.15, 0.25, 0.90],
        [0.95, 0.80, 0.10],
        [0.80, 0.20, 0.80],
        [0.10, 0.80, 0.85],
        [0.95, 0.50, 0.05],
        [0.45, 0.25, 0.10],
        [0.95, 0.95, 0.95],
        [0.05, 0.05, 0.05],
    ],
)


def _shape_mask(shape: str, size: int, cy: float, cx: float, r: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    dy, dx = yy - cy, xx - cx
    match shape:
        case "square":
            return (np.abs(dy) <= r) & (np.abs(dx) <= r)
        case "disk":
            return dy**2 + dx**2 <= r**2
        case "cross":
            bar = r / 3
            horizontal = (np.abs(dy) <= bar) & (np.abs(dx) <= r)
            vertical = (np.abs(dx) <= bar) & (np.abs(dy) <= r)
            return horizontal | vertical
        case "ring":
            d2 = dy**2 + dx**2
            return (d2 <= r**2) & (d2 >= (r / 2) ** 2)
        case "triangle":
            return (np.abs(dy) <= r) & (np.abs(dx) <= (dy + r) / 2)
        case _:
            raise ValueError(f"Unknown shape {shape!r}")


def make_synthetic_dataset(
    n_per_class: int,
    num_classes: int = 10,
    *,
    image_size: int = 32,
    noise: float = 0.1,
    seed: int = 0,
    split: Split = "train",
) -> ImageDataset:
    """Procedural images of colored shapes on noisy gray backgrounds.

    Class `k` draws shape `k mod 5` in color `k mod 10` at a jittered position
    and size, so two disjoint groups of classes share low-level features.
    The shape outline is returned as the sample's foreground mask.

    Args:
        n_per_class: Samples generated per class.
        num_classes: The number of classes.
        image_size: Side length of the square images.
        noise: Standard deviation of the pixel noise.
        seed: Seed of the generator, the split is mixed in.
        split: The split tag, `train` and `val` draw different samples.
    """
    if n_per_class < 1 or num_classes < 1:
        raise ValueError(
            "Need at least one class and sample,"
            f" got {num_classes=}, {n_per_class=}",
        )

    rng = np.random.default_rng(derive_seed(seed, Op.SYNTHETIC, split == "val"))
    n = n_per_class * num_classes
    labels = np.repeat(np.arange(num_classes), n_per_class)
    images = np.empty((n, 3, image_size, image_size))
    masks = np.empty((n, image_size, image_size), dtype=bool)

    for i, k in enumerate(labels):
        r = rng.uniform(0.2, 0.32) * image_size
        cy, cx = image_size / 2 + rng.uniform(-0.12, 0.12, size=2) * image_size
        mask = _shape_mask(SHAPES[k % len(SHAPES)], image_size, cy, cx, r)
        background = 0.5 + noise * rng.standard_normal((3, image_size, image_size))
        color = PALETTE[k % len(PALETTE)][:, None, None]
        foreground = color + noise * rng.standard_normal(background.shape)
        images[i] = np.where(mask, foreground, background)
        masks[i] = mask

    order = rng.permutation(n)
    logger.debug(f"Generated {n} synthetic {split} images of {num_classes} classes")
    return ImageDataset(
        np.clip(images[order], 0.0, 1.0),
        labels[order],
        tuple(f"{SHAPES[k % len(SHAPES)]}_{k}" for k in range(num_classes)),
        split,
        masks=masks[order],
    )

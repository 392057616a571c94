from dtkd.data.corruptions import (
    CorruptionSpec,
    apply_corruption,
    apply_label_noise,
    center_black,
    default_side_range,
    quarter_black,
    subset_training_fraction,
)
from dtkd.data.datasets import (
    CIFAR10_CLASSES,
    ImageDataset,
    load_cifar10_binary,
    load_idx,
    make_synthetic_dataset,
    select_classes,
)
from dtkd.data.masks import (
    SegmentationMask,
    load_coco_mask,
    masks_to_coco,
    rasterize_polygon,
)
from dtkd.data.pipeline import prepare
from dtkd.data.ppm import attribution_heatmap, read_ppm, write_ppm
from dtkd.data.transforms import (
    CIFAR10_MEAN,
    CIFAR10_STD,
    denormalize,
    horizontal_flip,
    normalize,
    resize_bilinear,
)

__all__ = [
    "CIFAR10_CLASSES",
    "CIFAR10_MEAN",
    "CIFAR10_STD",
    "CorruptionSpec",
    "ImageDataset",
    "SegmentationMask",
    "apply_corruption",
    "apply_label_noise",
    "attribution_heatmap",
    "center_black",
    "default_side_range",
    "denormalize",
    "horizontal_flip",
    "load_cifar10_binary",
    "load_coco_mask",
    "load_idx",
    "make_synthetic_dataset",
    "masks_to_coco",
    "normalize",
    "prepare",
    "quarter_black",
    "rasterize_polygon",
    "read_ppm",
    "resize_bilinear",
    "select_classes",
    "subset_training_fraction",
    "write_ppm",
]

"""Models and the transfer-learning protocol around them.

A [`Model`][dtkd.nn.Model] is an ordered list of layers split at `head_boundary`
into a backbone and a classification head. Fine-tuning on a new task replaces the
head with [`replace_head`][dtkd.nn.replace_head] and freezes the backbone with
[`freeze_backbone`][dtkd.nn.freeze_backbone].

```python
from dtkd.nn import build_student, freeze_backbone, replace_head

source = build_student(5, seed=0)
target = freeze_backbone(replace_head(source, 10, seed=1))
```
"""
from __future__ import annotations

import copy
import hashlib
import logging
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd
from more_itertools import chunked

from dtkd.autodiff import Tensor, paused
from dtkd.exceptions import ShapeMismatchError
from dtkd.nn.layers import Layer, layer_forward
from dtkd.randomness import as_rng

if TYPE_CHECKING:
    from typing_extensions import Self

    from dtkd.types import Seed

logger = logging.getLogger(__name__)

DEFAULT_DROPOUT = 0.2


@dataclass
class Model:
    """An ordered layer graph with named parameters.

    Attributes:
        name: A name for the architecture, e.g. `student` or `teacher`.
        layers: The layers in execution order.
        head_boundary: Index of the first layer of the classification head.
        frozen: Qualified names of parameters the optimizer must skip.
        training: Whether dropout is active.
    """

    name: str
    layers: list[Layer]
    head_boundary: int
    frozen: set[str] = field(default_factory=set)
    training: bool = True

    def __post_init__(self) -> None:
        if not 0 <= self.head_boundary < len(self.layers):
            raise ValueError(
                f"head_boundary={self.head_boundary} is outside of"
                f" {len(self.layers)} layers",
            )
        for name, tensor in self.named_parameters():
            tensor.name = name

    def forward(
        self,
        x: Tensor | np.ndarray,
        *,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """Run the layers on a `[N, C, H, W]` batch.

        Args:
            x: The input batch.
            rng: Source of dropout masks, required in training mode.

        Returns:
            The `[N, K]` logits.
        """
        if isinstance(x, Tensor):
            out = x
        else:
            out = Tensor.wrap(np.asarray(x, dtype=np.float64))
        mode = "train" if self.training else "eval"
        for layer in self.layers:
            out = layer_forward(layer, out, mode=mode, rng=rng)
        return out

    __call__ = forward

    def predict(self, images: np.ndarray, *, batch_size: int = 256) -> np.ndarray:
        """Eval-mode logits for a stack of images, nothing is recorded.

        Args:
            images: A `[N, C, H, W]` array.
            batch_size: How many images go through the model at once.

        Returns:
            A `[N, K]` array.
        """
        was_training = self.training
        self.training = False
        try:
            outputs = []
            with paused():
                for idx in chunked(range(len(images)), batch_size):
                    outputs.append(self.forward(images[idx[0] : idx[-1] + 1]).data)
        finally:
            self.training = was_training

        if not outputs:
            return np.empty((0, self.num_outputs), dtype=np.float64)
        return np.concatenate(outputs, axis=0)

    def train(self) -> Self:
        """Switch to training mode."""
        self.training = True
        return self

    def eval(self) -> Self:
        """Switch to eval mode."""
        self.training = False
        return self

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        """Yield `(qualified name, tensor)` for every parameter in layer order."""
        for i, layer in enumerate(self.layers):
            yield from layer.named_parameters(prefix=f"{i}.")

    def head_names(self) -> list[str]:
        """Qualified names of the head parameters."""
        return [
            name
            for i, layer in enumerate(self.layers)
            if i >= self.head_boundary
            for name, _ in layer.named_parameters(prefix=f"{i}.")
        ]

    def backbone_names(self) -> list[str]:
        """Qualified names of the backbone parameters."""
        head = set(self.head_names())
        return [name for name, _ in self.named_parameters() if name not in head]

    def trainable_parameters(self) -> list[tuple[str, Tensor]]:
        """Every parameter that is not frozen."""
        return [(n, t) for n, t in self.named_parameters() if n not in self.frozen]

    def parameter_count(self, *, trainable_only: bool = False) -> int:
        """The number of scalar parameters."""
        if trainable_only:
            params = self.trainable_parameters()
        else:
            params = self.named_parameters()
        return sum(t.size for _, t in params)

    def freeze(self, names: Iterable[str] | None = None) -> Self:
        """Freeze the given parameters, or all of them."""
        params = dict(self.named_parameters())
        for name in params if names is None else names:
            self.frozen.add(name)
            params[name].requires_grad = False
        return self

    def unfreeze(self, names: Iterable[str] | None = None) -> Self:
        """Unfreeze the given parameters, or all of them."""
        params = dict(self.named_parameters())
        for name in list(self.frozen) if names is None else names:
            self.frozen.discard(name)
            params[name].requires_grad = True
        return self

    @property
    def fully_frozen(self) -> bool:
        """Whether no parameter is trainable."""
        return all(name in self.frozen for name, _ in self.named_parameters())

    @property
    def num_outputs(self) -> int:
        """Output width of the final linear layer, the class count K."""
        for layer in reversed(self.layers):
            if layer.kind == "linear":
                return layer.out_features
        raise ValueError(f"Model {self.name!r} has no linear layer")

    def state_dict(self) -> dict[str, np.ndarray]:
        """A copy of every parameter's values by qualified name."""
        return {name: t.data.copy() for name, t in self.named_parameters()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> Self:
        """Overwrite parameters from a mapping with exactly the same names and shapes.

        Raises:
            KeyError: If names are missing or unexpected.
            ShapeMismatchError: If a shape differs.
        """
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        unexpected = set(state) - set(params)
        if missing or unexpected:
            raise KeyError(
                f"State does not match {self.name!r}:"
                f" missing={sorted(missing)}, unexpected={sorted(unexpected)}",
            )

        for name, values in state.items():
            if params[name].shape != tuple(values.shape):
                raise ShapeMismatchError(
                    f"load {name}",
                    params[name].shape,
                    values.shape,
                )
            params[name].assign(np.asarray(values, dtype=np.float64))
        return self

    def checksum(self, names: Iterable[str] | None = None) -> str:
        """SHA-256 over the raw bytes of the selected parameters, in order."""
        params = dict(self.named_parameters())
        digest = hashlib.sha256()
        for name in params if names is None else names:
            digest.update(name.encode())
            digest.update(np.ascontiguousarray(params[name].data).tobytes())
        return digest.hexdigest()


def _student_layers(
    widths: tuple[int, int],
    num_classes: int,
    image_size: int,
    dropout: float,
    rng: np.random.Generator,
    *,
    extra_block: bool,
) -> list[Layer]:
    c1, c2 = widths

    def block(channels: int) -> Layer:
        return Layer.residual_block(
            [
                Layer.conv2d(channels, channels, 3, padding=1, rng=rng),
                Layer.relu(),
                Layer.conv2d(channels, channels, 3, padding=1, rng=rng),
            ],
        )

    layers = [
        Layer.conv2d(3, c1, 3, padding=1, rng=rng),
        Layer.relu(),
        Layer.maxpool2d(2),
        block(c1),
        Layer.conv2d(c1, c2, 3, padding=1, rng=rng),
        Layer.relu(),
        Layer.maxpool2d(2),
    ]
    if extra_block:
        layers.append(block(c2))

    spatial = image_size // 4
    layers += [
        Layer.flatten(),
        Layer.dropout(dropout),
        Layer.linear(c2 * spatial * spatial, num_classes, rng=rng),
    ]
    return layers


def build_student(
    num_classes: int,
    *,
    image_size: int = 32,
    dropout: float = DEFAULT_DROPOUT,
    seed: Seed | None = 0,
) -> Model:
    """The desk-scale student.

    `conv(3->8)/relu/pool, residual(8), conv(8->16)/relu/pool, flatten,
    dropout, linear(K)`. All convolutions are 3x3 with padding 1, so the
    image side must be divisible by 4.

    Args:
        num_classes: Output width K, at least 2.
        image_size: Side of the square input images.
        dropout: Drop probability in front of the head.
        seed: Seed for parameter initialization.
    """
    if num_classes < 2:  # noqa: PLR2004
        raise ValueError(f"A classifier needs at least 2 classes, got {num_classes}")
    if image_size % 4:
        raise ValueError(f"image_size must be divisible by 4, got {image_size}")

    layers = _student_layers(
        (8, 16),
        num_classes,
        image_size,
        dropout,
        as_rng(seed),
        extra_block=False,
    )
    return Model(name="student", layers=layers, head_boundary=len(layers) - 2)


def build_teacher(
    num_classes: int,
    *,
    image_size: int = 32,
    dropout: float = DEFAULT_DROPOUT,
    seed: Seed | None = 0,
) -> Model:
    """The desk-scale teacher: the student pattern with doubled widths and
    a second residual block.

    Args:
        num_classes: Output width K, at least 2.
        image_size: Side of the square input images.
        dropout: Drop probability in front of the head.
        seed: Seed for parameter initialization.
    """
    if num_classes < 2:  # noqa: PLR2004
        raise ValueError(f"A classifier needs at least 2 classes, got {num_classes}")
    if image_size % 4:
        raise ValueError(f"image_size must be divisible by 4, got {image_size}")

    layers = _student_layers(
        (16, 32),
        num_classes,
        image_size,
        dropout,
        as_rng(seed),
        extra_block=True,
    )
    return Model(name="teacher", layers=layers, head_boundary=len(layers) - 2)


BUILDERS = {"student": build_student, "teacher": build_teacher}
"""Architectures by name, as referenced from experiment configs."""


def build_model(name: str, num_classes: int, **kwargs: object) -> Model:
    """Build an architecture by name."""
    try:
        builder = BUILDERS[name]
    except KeyError as e:
        raise ValueError(f"Unknown model {name!r}, choose from {list(BUILDERS)}") from e

    return builder(num_classes, **kwargs)  # type: ignore[arg-type]


def replace_head(model: Model, new_num_classes: int, *, seed: Seed | None = 0) -> Model:
    """A copy of `model` whose final linear layer maps to `new_num_classes`.

    The new head is drawn uniformly from `±1/sqrt(fan_in)`; backbone values are
    copied bitwise. Frozen flags are not carried over.

    Args:
        model: The pretrained model.
        new_num_classes: The class count of the new task.
        seed: Seed for the head initialization.
    """
    layers = copy.deepcopy(model.layers)
    head_index = max(i for i, layer in enumerate(layers) if layer.kind == "linear")
    if head_index < model.head_boundary:
        raise ValueError(f"Model {model.name!r} has no linear layer in its head")

    in_features = int(layers[head_index].params["weight"].shape[0])
    layers[head_index] = Layer.linear(in_features, new_num_classes, rng=seed)
    logger.debug(
        f"Replaced head of {model.name!r}:"
        f" {model.num_outputs} -> {new_num_classes} classes",
    )
    new = Model(
        name=model.name,
        layers=layers,
        head_boundary=model.head_boundary,
        training=model.training,
    )
    for _, tensor in new.named_parameters():
        tensor.requires_grad = True
    return new


def freeze_backbone(model: Model) -> Model:
    """Freeze every parameter below the head boundary, in place."""
    model.freeze(model.backbone_names())
    logger.debug(
        f"Froze backbone of {model.name!r},"
        f" {model.parameter_count(trainable_only=True)} trainable parameters remain",
    )
    return model


def unfreeze(model: Model) -> Model:
    """Make every parameter trainable again, in place."""
    return model.unfreeze()


def parameter_summary(model: Model) -> pd.DataFrame:
    """Per-layer parameter counts, split into trainable and frozen.

    Returns:
        A frame indexed by layer position with columns `kind`, `region`,
        `parameters` and `trainable`, plus a final `total` row.
    """
    rows = []
    for i, layer in enumerate(model.layers):
        named = list(layer.named_parameters(prefix=f"{i}."))
        rows.append(
            {
                "layer": str(i),
                "kind": layer.kind,
                "region": "head" if i >= model.head_boundary else "backbone",
                "parameters": sum(t.size for _, t in named),
                "trainable": sum(t.size for n, t in named if n not in model.frozen),
            },
        )
    rows.append(
        {
            "layer": "total",
            "kind": "",
            "region": "",
            "parameters": model.parameter_count(),
            "trainable": model.parameter_count(trainable_only=True),
        },
    )
    return pd.DataFrame(rows).set_index("layer")

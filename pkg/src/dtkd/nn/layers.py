"""Layer primitives.

A [`Layer`][dtkd.nn.Layer] is plain data: a kind, its named parameters and
kind-specific settings. Forward passes are functions of a layer and an input
tensor, dispatched on the kind.

```python
from dtkd.nn import Layer

conv = Layer.conv2d(3, 8, kernel_size=3, padding=1, rng=0)
conv.parameter_count()  # 8 * (3 * 3 * 3 + 1) == 224
```
"""
from __future__ import annotations

import logging
import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from typing import Any, Literal, TypeAlias

import numpy as np

from dtkd.autodiff import (
    Tensor,
    add,
    bias_add,
    conv2d,
    matmul,
    maxpool2d,
    mul,
    relu,
    reshape,
)
from dtkd.exceptions import InvalidProbabilityError, ShapeMismatchError
from dtkd.randomness import as_rng
from dtkd.types import Seed, assert_never

logger = logging.getLogger(__name__)

LayerKind: TypeAlias = Literal[
    "conv2d",
    "linear",
    "relu",
    "maxpool2d",
    "dropout",
    "flatten",
    "residual_block",
]
Mode: TypeAlias = Literal["train", "eval"]


def uniform_init(
    shape: tuple[int, ...],
    fan_in: int,
    rng: np.random.Generator,
) -> Tensor:
    """Draw a parameter uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`."""
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


@dataclass
class Layer:
    """One layer of a [`Model`][dtkd.nn.Model].

    Attributes:
        kind: What the layer computes.
        params: Named parameter tensors, `weight` and `bias` where present.
        hyper: Kind-specific settings such as `stride`, `padding`, `p` or `window`.
        inner: The wrapped layers of a residual block.
    """

    kind: LayerKind
    params: dict[str, Tensor] = field(default_factory=dict)
    hyper: dict[str, Any] = field(default_factory=dict)
    inner: list[Layer] = field(default_factory=list)

    @classmethod
    def conv2d(
        cls,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        *,
        stride: int = 1,
        padding: int = 0,
        rng: Seed | None = None,
    ) -> Layer:
        """A convolution with `[out, in, k, k]` weights and one bias per filter."""
        _rng = as_rng(rng)
        fan_in = in_channels * kernel_size * kernel_size
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        return cls(
            kind="conv2d",
            params={
                "weight": uniform_init(shape, fan_in, _rng),
                "bias": uniform_init((out_channels,), fan_in, _rng),
            },
            hyper={"stride": stride, "padding": padding},
        )

    @classmethod
    def linear(
        cls,
        in_features: int,
        out_features: int,
        *,
        rng: Seed | None = None,
    ) -> Layer:
        """A fully connected layer, the weight is stored as `[in, out]`."""
        _rng = as_rng(rng)
        return cls(
            kind="linear",
            params={
                "weight": uniform_init((in_features, out_features), in_features, _rng),
                "bias": uniform_init((out_features,), in_features, _rng),
            },
        )

    @classmethod
    def relu(cls) -> Layer:
        """`max(x, 0)`."""
        return cls(kind="relu")

    @classmethod
    def maxpool2d(cls, window: int = 2) -> Layer:
        """Non-overlapping max pooling."""
        return cls(kind="maxpool2d", hyper={"window": window})

    @classmethod
    def dropout(cls, p: float) -> Layer:
        """Inverted dropout with drop probability `p`."""
        if not 0 <= p < 1:
            raise InvalidProbabilityError(
                f"Dropout probability must be in [0, 1), got {p}",
            )
        return cls(kind="dropout", hyper={"p": p})

    @classmethod
    def flatten(cls) -> Layer:
        """Collapse everything but the batch dimension."""
        return cls(kind="flatten")

    @classmethod
    def residual_block(cls, inner: Sequence[Layer]) -> Layer:
        """`x + F(x)` where `F` is the sequence of `inner` layers."""
        return cls(kind="residual_block", inner=list(inner))

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        """Yield `(qualified name, tensor)`, inner layers are numbered."""
        for name, tensor in self.params.items():
            yield f"{prefix}{name}", tensor
        for i, layer in enumerate(self.inner):
            yield from layer.named_parameters(prefix=f"{prefix}{i}.")

    def parameter_count(self) -> int:
        """The number of scalar parameters."""
        return sum(t.size for _, t in self.named_parameters())

    @property
    def out_features(self) -> int:
        """Output width of a linear layer."""
        if self.kind != "linear":
            raise TypeError(f"A {self.kind} layer has no output width")
        return int(self.params["weight"].shape[1])


def conv2d_forward(x: Tensor, layer: Layer) -> Tensor:
    """Apply a convolution layer.

    Raises:
        ShapeMismatchError: If the input channels do not match the filters.
    """
    return conv2d(
        x,
        layer.params["weight"],
        layer.params["bias"],
        stride=layer.hyper["stride"],
        padding=layer.hyper["padding"],
    )


def linear_forward(x: Tensor, layer: Layer) -> Tensor:
    """`x @ W + b` for a `[N, in]` input."""
    return bias_add(matmul(x, layer.params["weight"]), layer.params["bias"])


def dropout(x: Tensor, p: float, mode: Mode, rng: np.random.Generator | None) -> Tensor:
    """Zero each unit with probability `p` in train mode, scaling survivors.

    Eval mode and `p == 0` return the input unchanged without drawing
    random numbers.

    Raises:
        InvalidProbabilityError: If `p` is outside `[0, 1)`.
    """
    if not 0 <= p < 1:
        raise InvalidProbabilityError(f"Dropout probability must be in [0, 1), got {p}")

    if mode == "eval" or p == 0:
        return x

    if rng is None:
        raise ValueError("Train mode dropout requires an rng")

    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return mul(x, Tensor.wrap(mask))


def residual_block_forward(
    x: Tensor,
    inner: Sequence[Layer],
    *,
    mode: Mode = "eval",
    rng: np.random.Generator | None = None,
) -> Tensor:
    """`x + F(x)` with `F` the composition of `inner`.

    Raises:
        ShapeMismatchError: If `F` changes the shape of its input.
    """
    out = x
    for layer in inner:
        out = layer_forward(layer, out, mode=mode, rng=rng)

    if out.shape != x.shape:
        raise ShapeMismatchError("residual_block", x.shape, out.shape)

    return add(x, out)


def layer_forward(
    layer: Layer,
    x: Tensor,
    *,
    mode: Mode = "eval",
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Dispatch the forward pass of one layer on its kind."""
    match layer.kind:
        case "conv2d":
            return conv2d_forward(x, layer)
        case "linear":
            return linear_forward(x, layer)
        case "relu":
            return relu(x)
        case "maxpool2d":
            return maxpool2d(x, layer.hyper["window"])
        case "dropout":
            return dropout(x, layer.hyper["p"], mode, rng)
        case "flatten":
            return reshape(x, (x.shape[0], -1))
        case "residual_block":
            return residual_block_forward(x, layer.inner, mode=mode, rng=rng)
        case _:
            assert_never(layer.kind)

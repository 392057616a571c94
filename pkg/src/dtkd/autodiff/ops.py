"""Differentiable primitive operations.

Every primitive computes its output with `numpy` and, when a tape is active and
an input requires a gradient, records a closure computing the vector-Jacobian
product. Broadcasting is limited to a scalar second operand.
"""
from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from typing import Literal, TypeAlias

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from dtkd.autodiff.tape import BackwardFn, active_tape
from dtkd.autodiff.tensor import Tensor
from dtkd.exceptions import DomainError, OddDimensionError, ShapeMismatchError
from dtkd.types import assert_never

logger = logging.getLogger(__name__)

Operand: TypeAlias = Tensor | float | int
ElementwiseOp: TypeAlias = Literal["add", "sub", "mul", "max_scalar", "exp", "log", "neg"]


def _emit(
    op: str,
    inputs: Sequence[Tensor],
    data: np.ndarray,
    backward: BackwardFn,
) -> Tensor:
    requires_grad = any(t.requires_grad for t in inputs)
    out = Tensor.wrap(data, requires_grad=requires_grad)
    tape = active_tape()
    if tape is not None and requires_grad:
        tape.record(op, inputs, out, backward)
    return out


def _binary(
    op: str,
    a: Tensor,
    b: Operand,
    forward: Callable[[np.ndarray, np.ndarray | float], np.ndarray],
    grads: Callable[
        [np.ndarray, np.ndarray, np.ndarray | float],
        tuple[np.ndarray, np.ndarray],
    ],
) -> Tensor:
    # Python scalars are constants, 0-d tensors broadcast and sum their gradient.
    if not isinstance(b, Tensor):
        value = float(b)
        data = forward(a.data, value)
        return _emit(op, [a], data, lambda g: (grads(g, a.data, value)[0],))

    if b.shape != a.shape and b.ndim != 0:
        raise ShapeMismatchError(op, a.shape, b.shape)

    data = forward(a.data, b.data)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, np.ndarray | None]:
        ga, gb = grads(g, a.data, b.data)
        if b.ndim == 0:
            gb = np.asarray(gb.sum())
        return (ga if a.requires_grad else None, gb if b.requires_grad else None)

    return _emit(op, [a, b], data, backward)


def add(a: Tensor, b: Operand) -> Tensor:
    """Elementwise `a + b`."""
    return _binary(
        "add",
        a,
        b,
        lambda x, y: x + y,
        lambda g, _x, _y: (g, g),
    )


def sub(a: Tensor, b: Operand) -> Tensor:
    """Elementwise `a - b`."""
    return _binary(
        "sub",
        a,
        b,
        lambda x, y: x - y,
        lambda g, _x, _y: (g, -g),
    )


def mul(a: Tensor, b: Operand) -> Tensor:
    """Elementwise `a * b`."""
    return _binary(
        "mul",
        a,
        b,
        lambda x, y: x * y,
        lambda g, x, y: (g * y, g * x),
    )


def neg(a: Tensor) -> Tensor:
    """Elementwise `-a`."""
    return _emit("neg", [a], -a.data, lambda g: (-g,))


def exp(a: Tensor) -> Tensor:
    """Elementwise exponential."""
    out = np.exp(a.data)
    return _emit("exp", [a], out, lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    """Elementwise natural logarithm.

    Raises:
        DomainError: If any value is not strictly positive.
    """
    if np.any(a.data <= 0):
        raise DomainError(
            f"log is undefined for non-positive values, min={a.data.min()}",
        )

    x = a.data
    return _emit("log", [a], np.log(x), lambda g: (g / x,))


def max_scalar(a: Tensor, c: float) -> Tensor:
    """Elementwise `max(a, c)`, the gradient at `a == c` is zero."""
    x = a.data
    return _emit("max_scalar", [a], np.maximum(x, c), lambda g: (g * (x > c),))


def relu(a: Tensor) -> Tensor:
    """`max(a, 0)`."""
    return max_scalar(a, 0.0)


def elementwise(op: ElementwiseOp, a: Tensor, b: Operand | None = None) -> Tensor:
    """Apply one of the elementwise primitives by name.

    Args:
        op: The name of the primitive.
        a: The first operand, its shape is the output shape.
        b: The second operand for binary primitives, a tensor of the same
            shape as `a` or a scalar.

    Returns:
        The result tensor.
    """
    match op:
        case "add" | "sub" | "mul" | "max_scalar":
            if b is None:
                raise ValueError(f"`{op}` requires a second operand")
            if op == "add":
                return add(a, b)
            if op == "sub":
                return sub(a, b)
            if op == "mul":
                return mul(a, b)
            if isinstance(b, Tensor):
                if b.size != 1:
                    raise ShapeMismatchError(op, a.shape, b.shape)
                return max_scalar(a, b.item())
            return max_scalar(a, float(b))
        case "exp":
            return exp(a)
        case "log":
            return log(a)
        case "neg":
            return neg(a)
        case _:
            assert_never(op)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-d tensors.

    Raises:
        ShapeMismatchError: If either operand is not 2-d or inner dimensions differ.
    """
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:  # noqa: PLR2004
        raise ShapeMismatchError("matmul", a.shape, b.shape)

    x, y = a.data, b.data

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, np.ndarray | None]:
        return (
            g @ y.T if a.requires_grad else None,
            x.T @ g if b.requires_grad else None,
        )

    return _emit("matmul", [a, b], x @ y, backward)


def total(a: Tensor) -> Tensor:
    """Sum of every value, a 0-d tensor."""
    shape = a.shape
    return _emit(
        "total",
        [a],
        np.asarray(a.data.sum()),
        lambda g: (np.full(shape, float(g)),),
    )


def mean(a: Tensor) -> Tensor:
    """Mean of every value, a 0-d tensor."""
    return mul(total(a), 1.0 / a.size)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    """The same values under a new shape, `-1` infers one dimension."""
    try:
        data = a.data.reshape(shape)
    except ValueError as e:
        raise ShapeMismatchError("reshape", a.shape, shape) from e

    original = a.shape
    return _emit("reshape", [a], data, lambda g: (g.reshape(original),))


def bias_add(x: Tensor, bias: Tensor) -> Tensor:
    """Add a per-channel bias along axis 1 of a 2-d or 4-d tensor."""
    if bias.ndim != 1 or x.ndim < 2 or x.shape[1] != bias.shape[0]:  # noqa: PLR2004
        raise ShapeMismatchError("bias_add", x.shape, bias.shape)

    view = (1, -1) + (1,) * (x.ndim - 2)
    reduce_axes = tuple(i for i in range(x.ndim) if i != 1)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, np.ndarray | None]:
        return (
            g if x.requires_grad else None,
            g.sum(axis=reduce_axes) if bias.requires_grad else None,
        )

    return _emit("bias_add", [x, bias], x.data + bias.data.reshape(view), backward)


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    *,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """2-d cross-correlation of `[N, C, H, W]` inputs with `[O, C, kh, kw]` filters.

    The output has `H' = (H + 2P - kh) // S + 1` rows, likewise for columns.

    Raises:
        ShapeMismatchError: On a channel mismatch or a kernel larger than the
            padded input.
    """
    if stride < 1 or padding < 0:
        raise ValueError(f"Invalid {stride=} or {padding=}")

    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:  # noqa: PLR2004
        raise ShapeMismatchError("conv2d", x.shape, weight.shape)

    n, c, h, w = x.shape
    out_c, _, kh, kw = weight.shape
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ShapeMismatchError("conv2d", x.shape, weight.shape)

    pad = ((0, 0), (0, 0), (padding, padding), (padding, padding))
    xp = np.pad(x.data, pad) if padding else x.data
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out_h, out_w = windows.shape[2], windows.shape[3]
    wd = weight.data

    # [N, H', W', O] -> [N, O, H', W']
    out = np.tensordot(windows, wd, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data.reshape(1, out_c, 1, 1)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        grad_x = grad_w = grad_b = None
        if weight.requires_grad:
            grad_w = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        if bias is not None and bias.requires_grad:
            grad_b = g.sum(axis=(0, 2, 3))
        if x.requires_grad:
            grad_xp = np.zeros(xp.shape, dtype=np.float64)
            rows = stride * (out_h - 1) + 1
            cols = stride * (out_w - 1) + 1
            for i in range(kh):
                for j in range(kw):
                    contrib = np.tensordot(g, wd[:, :, i, j], axes=([1], [0]))
                    grad_xp[:, :, i : i + rows : stride, j : j + cols : stride] += (
                        contrib.transpose(0, 3, 1, 2)
                    )
            grad_x = grad_xp[:, :, padding : padding + h, padding : padding + w]

        if bias is None:
            return (grad_x, grad_w)
        return (grad_x, grad_w, grad_b)

    inputs = [x, weight] if bias is None else [x, weight, bias]
    logger.debug(f"conv2d {x.shape} * {weight.shape} -> {(n, out_c, out_h, out_w)}")
    return _emit("conv2d", inputs, np.ascontiguousarray(out), backward)


def maxpool2d(x: Tensor, window: int = 2) -> Tensor:
    """Non-overlapping max pooling of a `[N, C, H, W]` tensor.

    The gradient flows to the maximum of each window, ties go to the first
    position in row-major order.

    Raises:
        OddDimensionError: If `H` or `W` is not divisible by the window.
    """
    if x.ndim != 4:  # noqa: PLR2004
        raise ShapeMismatchError("maxpool2d", x.shape)

    n, c, h, w = x.shape
    if h % window or w % window:
        raise OddDimensionError("maxpool2d", x.shape)

    oh, ow = h // window, w // window
    blocks = (
        x.data.reshape(n, c, oh, window, ow, window)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, oh, ow, window * window)
    )
    arg = blocks.argmax(axis=-1)[..., None]
    out = np.take_along_axis(blocks, arg, axis=-1)[..., 0]

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad_blocks = np.zeros(blocks.shape, dtype=np.float64)
        np.put_along_axis(grad_blocks, arg, g[..., None], axis=-1)
        grad = (
            grad_blocks.reshape(n, c, oh, ow, window, window)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, h, w)
        )
        return (grad,)

    return _emit("maxpool2d", [x], out, backward)


def _shifted(z: np.ndarray, temperature: float) -> np.ndarray:
    s = z / temperature
    return s - s.max(axis=1, keepdims=True)


def log_softmax(z: Tensor, temperature: float = 1.0) -> Tensor:
    """Row-wise `log(softmax(z / T))` of a 2-d tensor."""
    if z.ndim != 2:  # noqa: PLR2004
        raise ShapeMismatchError("log_softmax", z.shape)

    shifted = _shifted(z.data, temperature)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        p = np.exp(out)
        return ((g - p * g.sum(axis=1, keepdims=True)) / temperature,)

    return _emit("log_softmax", [z], out, backward)


def softmax(z: Tensor, temperature: float = 1.0) -> Tensor:
    """Row-wise `softmax(z / T)` of a 2-d tensor, stabilized by max subtraction."""
    if z.ndim != 2:  # noqa: PLR2004
        raise ShapeMismatchError("softmax", z.shape)

    e = np.exp(_shifted(z.data, temperature))
    p = e / e.sum(axis=1, keepdims=True)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (p * (g - (g * p).sum(axis=1, keepdims=True)) / temperature,)

    return _emit("softmax", [z], p, backward)

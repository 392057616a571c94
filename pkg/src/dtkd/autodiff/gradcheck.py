"""Central finite differences, the oracle for every analytic gradient."""
from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from dtkd.autodiff.tape import backward, paused, recording
from dtkd.autodiff.tensor import Tensor

logger = logging.getLogger(__name__)

ScalarFn = Callable[[Tensor], Tensor | float]

REL_ERROR_FLOOR = 1e-6
"""Magnitudes below this are compared absolutely."""


def _value(out: Tensor | float) -> float:
    return out.item() if isinstance(out, Tensor) else float(out)


def finite_diff_grad(f: ScalarFn, x: Tensor, eps: float = 1e-5) -> Tensor:
    """Estimate the gradient of a scalar function by central differences.

    Coordinate `i` is `(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)`.

    Args:
        f: A function of one tensor returning a scalar.
        x: The point to differentiate at.
        eps: The step, must be positive.

    Returns:
        A tensor shaped like `x`.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")

    flat = x.data.reshape(-1)
    grad = np.empty_like(flat)
    with paused():
        for i in range(flat.size):
            bumped = flat.copy()
            bumped[i] = flat[i] + eps
            up = _value(f(Tensor(bumped.reshape(x.shape))))
            bumped[i] = flat[i] - eps
            down = _value(f(Tensor(bumped.reshape(x.shape))))
            grad[i] = (up - down) / (2 * eps)

    return Tensor(grad.reshape(x.shape))


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest elementwise `|a - n| / max(|a|, |n|, floor)`."""
    if analytic.size == 0:
        return 0.0

    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_ERROR_FLOOR)
    return float(np.max(np.abs(analytic - numeric) / scale))


@dataclass
class GradcheckResult:
    """Outcome of comparing analytic and numeric gradients.

    Attributes:
        name: What was checked.
        errors: Maximum relative error per input.
    """

    name: str
    errors: list[float] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        """The largest relative error over every input."""
        return max(self.errors, default=0.0)

    def passed(self, tolerance: float = 1e-4) -> bool:
        """Whether every input is within `tolerance`."""
        return self.max_rel_error < tolerance


def gradcheck(
    f: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    *,
    eps: float = 1e-5,
    name: str = "f",
) -> GradcheckResult:
    """Compare [`backward`][dtkd.autodiff.backward] against finite differences.

    Every input with `requires_grad` is checked while the others are held fixed.

    Args:
        f: A function of `inputs` returning a scalar tensor.
        inputs: The point to check at.
        eps: The finite difference step.
        name: A label for the result.

    Returns:
        The relative error per checked input.
    """
    with recording() as tape:
        loss = f(*inputs)
    backward(tape, loss)

    result = GradcheckResult(name=name)
    for i, x in enumerate(inputs):
        if not x.requires_grad:
            continue

        def partial(v: Tensor, i: int = i) -> Tensor:
            args = list(inputs)
            args[i] = v
            return f(*args)

        analytic = x.grad if x.grad is not None else np.zeros_like(x.data)
        numeric = finite_diff_grad(partial, x, eps).data
        result.errors.append(relative_error(analytic, numeric))

    logger.debug(f"gradcheck {name}: max relative error {result.max_rel_error:.3e}")
    return result

"""Softmax, cross-entropy, KL divergence and the combined distillation loss.

The distillation loss mixes a soft and a hard term,

```
L = alpha * T^2 * KL(softmax(z_t / T) || softmax(z_s / T)) + (1 - alpha) * CE(y, z_s)
```

where the KL sum is weighted by the teacher distribution and the teacher logits
are constants. The `T^2` factor keeps the soft-term gradients on the scale of the
hard term when `T` changes.
"""
from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import pandas as pd

from dtkd.autodiff import Tensor, add, log, log_softmax, mul, neg, total
from dtkd.autodiff import softmax as _softmax
from dtkd.exceptions import (
    InvalidProbabilityError,
    InvalidTemperatureError,
    LabelIndexError,
    NonFiniteError,
    NotStochasticError,
    ShapeMismatchError,
)

logger = logging.getLogger(__name__)

STOCHASTIC_ATOL = 1e-6
"""Rows of a probability matrix may deviate this much from summing to one."""


@dataclass(frozen=True, kw_only=True)
class DistillationConfig:
    """How hard and soft labels are mixed.

    Attributes:
        temperature: Divisor applied to both logits before the soft term.
        alpha: Weight of the soft term, `1 - alpha` weights the hard term.
    """

    temperature: float = 10.0
    alpha: float = 0.1

    def __post_init__(self) -> None:
        if not self.temperature > 0:
            raise InvalidTemperatureError(self.temperature)
        if not 0 <= self.alpha <= 1:
            raise InvalidProbabilityError(f"alpha must be in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class SoftLabelBatch:
    """Temperature-softened class probabilities produced by a teacher.

    Attributes:
        probabilities: A `[N, K]` row-stochastic array.
        temperature: The temperature they were produced at.
        source: Name of the model that produced them.
    """

    probabilities: np.ndarray
    temperature: float
    source: str

    def __post_init__(self) -> None:
        p = self.probabilities
        if (
            p.ndim != 2  # noqa: PLR2004
            or np.any(p < 0)
            or not np.allclose(p.sum(axis=1), 1, atol=1e-9)
        ):
            raise NotStochasticError(
                "Soft labels must be non-negative rows summing to 1",
            )


def _check_finite(z: Tensor) -> None:
    if not np.all(np.isfinite(z.data)):
        raise NonFiniteError(
            f"Logits of shape {z.shape} contain NaN or infinite values",
        )


def _check_stochastic(p: np.ndarray, what: str) -> None:
    sums = p.sum(axis=1)
    if np.any(p < 0) or np.any(np.abs(sums - 1) > STOCHASTIC_ATOL):
        raise NotStochasticError(
            f"{what} is not row-stochastic, row sums in [{sums.min()}, {sums.max()}]",
        )


def _xlogx_sum(p: np.ndarray) -> float:
    safe = np.where(p > 0, p, 1.0)
    return float(np.sum(p * np.log(safe)))


def softmax_temperature(z: Tensor, temperature: float) -> Tensor:
    """Row-wise `exp(z_i / T) / sum_j exp(z_j / T)`.

    Raises:
        InvalidTemperatureError: If `T <= 0`.
        NonFiniteError: If any logit is NaN or infinite.
    """
    if not temperature > 0:
        raise InvalidTemperatureError(temperature)
    _check_finite(z)
    return _softmax(z, temperature)


def softmax(z: Tensor) -> Tensor:
    """Row-wise softmax, identical to `softmax_temperature(z, 1.0)`."""
    return softmax_temperature(z, 1.0)


def temperature_sweep(
    logits: Sequence[float],
    temperatures: Sequence[float],
) -> pd.DataFrame:
    """Softened probabilities of one logit vector at several temperatures.

    Returns:
        A frame indexed by temperature with one column per class.
    """
    z = Tensor([list(logits)] * len(temperatures))
    rows = [
        softmax_temperature(Tensor(z.data[i : i + 1]), t).data[0]
        for i, t in enumerate(temperatures)
    ]
    frame = pd.DataFrame(rows, index=pd.Index(list(temperatures), name="temperature"))
    frame.columns = [f"class_{k}" for k in range(frame.shape[1])]
    return frame


def _one_hot(labels: np.ndarray | Sequence[int], num_classes: int) -> np.ndarray:
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    bad = (y < 0) | (y >= num_classes)
    if np.any(bad):
        raise LabelIndexError(int(y[bad][0]), num_classes)

    onehot = np.zeros((y.size, num_classes), dtype=np.float64)
    onehot[np.arange(y.size), y] = 1.0
    return onehot


def cross_entropy(z: Tensor, labels: np.ndarray | Sequence[int]) -> Tensor:
    """Mean over the batch of `-log softmax(z)[y]`.

    Raises:
        LabelIndexError: If a label is outside `[0, K)`.
        ShapeMismatchError: If there is not one label per row.
    """
    _check_finite(z)
    n, k = z.shape
    onehot = _one_hot(labels, k)
    if onehot.shape[0] != n:
        raise ShapeMismatchError("cross_entropy", z.shape, (onehot.shape[0],))

    picked = total(mul(log_softmax(z), Tensor.wrap(onehot)))
    return mul(picked, -1.0 / n)


def kl_divergence(p_student: Tensor, p_teacher: Tensor | np.ndarray) -> Tensor:
    """Mean over the batch of `sum_k p_teacher * (log p_teacher - log p_student)`.

    The teacher distribution is a constant, gradients flow into `p_student` only.

    Raises:
        NotStochasticError: If a row of either argument does not sum to one.
    """
    if isinstance(p_teacher, Tensor):
        p_t = p_teacher.data
    else:
        p_t = np.asarray(p_teacher, dtype=np.float64)
    if p_t.shape != p_student.shape:
        raise ShapeMismatchError("kl_divergence", p_student.shape, p_t.shape)

    _check_stochastic(p_student.data, "p_student")
    _check_stochastic(p_t, "p_teacher")
    cross = total(mul(log(p_student), Tensor.wrap(p_t)))
    return mul(add(neg(cross), _xlogx_sum(p_t)), 1.0 / p_t.shape[0])


def distillation_term(
    z_s: Tensor,
    soft: SoftLabelBatch | np.ndarray,
    temperature: float,
) -> Tensor:
    """`T^2 * KL(p_teacher || softmax(z_s / T))` computed through log-softmax.

    Args:
        z_s: Student logits.
        soft: The teacher's probabilities at `temperature`.
        temperature: The distillation temperature.
    """
    p_t = soft.probabilities if isinstance(soft, SoftLabelBatch) else np.asarray(soft)
    if p_t.shape != z_s.shape:
        raise ShapeMismatchError("distillation_term", z_s.shape, p_t.shape)

    _check_finite(z_s)
    _check_stochastic(p_t, "p_teacher")
    cross = total(mul(log_softmax(z_s, temperature), Tensor.wrap(p_t)))
    kl = mul(add(neg(cross), _xlogx_sum(p_t)), 1.0 / p_t.shape[0])
    return mul(kl, temperature * temperature)


def _pure_soft_term(z_s: Tensor, p_t: np.ndarray, temperature: float) -> Tensor:
    p_s = softmax_temperature(z_s, temperature)
    if np.all(p_s.data > 0):
        return mul(kl_divergence(p_s, p_t), temperature * temperature)

    # log of an underflowed probability is undefined
    logger.debug(f"Student probabilities underflow at T={temperature}")
    return distillation_term(z_s, p_t, temperature)


def kd_loss_from_soft_labels(
    z_s: Tensor,
    soft: SoftLabelBatch,
    labels: np.ndarray | Sequence[int],
    cfg: DistillationConfig,
) -> Tensor:
    """The combined loss against precomputed teacher soft labels.

    `alpha == 0` returns exactly the cross-entropy and `alpha == 1` exactly
    `T^2 * kl_divergence(softmax_temperature(z_s, T), p_teacher)`.
    """
    if soft.temperature != cfg.temperature:
        raise ValueError(
            f"Soft labels at T={soft.temperature} used with T={cfg.temperature}",
        )

    if cfg.alpha == 0:
        return cross_entropy(z_s, labels)

    if cfg.alpha == 1:
        return _pure_soft_term(z_s, soft.probabilities, cfg.temperature)

    soft_term = distillation_term(z_s, soft, cfg.temperature)
    hard_term = cross_entropy(z_s, labels)
    return add(mul(soft_term, cfg.alpha), mul(hard_term, 1.0 - cfg.alpha))


def kd_combined_loss(
    z_s: Tensor,
    z_t: Tensor,
    labels: np.ndarray | Sequence[int],
    cfg: DistillationConfig,
) -> Tensor:
    """`alpha * T^2 * KL + (1 - alpha) * CE` with teacher logits as constants.

    Args:
        z_s: Student logits `[N, K]`.
        z_t: Teacher logits `[N, K]`, never differentiated.
        labels: The hard labels.
        cfg: Temperature and mixing weight.

    Raises:
        ShapeMismatchError: If the logits differ in shape.
    """
    if z_s.shape != z_t.shape:
        raise ShapeMismatchError("kd_combined_loss", z_s.shape, z_t.shape)

    p_t = softmax_temperature(z_t.detach(), cfg.temperature).data
    soft = SoftLabelBatch(p_t, cfg.temperature, source="logits")
    return kd_loss_from_soft_labels(z_s, soft, labels, cfg)

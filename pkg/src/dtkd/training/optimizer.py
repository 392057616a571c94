"""SGD with momentum, the plateau scheduler and early stopping.

The three share one [`OptimizerState`][dtkd.training.OptimizerState], updated
once per mini-batch by [`sgd_step`][dtkd.training.sgd_step] and once per epoch by
[`reduce_lr_on_plateau`][dtkd.training.reduce_lr_on_plateau] and
[`early_stopping_check`][dtkd.training.early_stopping_check].
"""
from __future__ import annotations

import logging
import math
from collections.abc import Collection, Mapping
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from dtkd.autodiff import Tensor
from dtkd.exceptions import ShapeMismatchError
from dtkd.training.config import TrainingConfig

logger = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    """Everything SGD and the epoch-level schedules remember.

    Attributes:
        lr: The learning rate currently in effect.
        velocity: One momentum buffer per parameter name.
        plateau_best: Best validation accuracy seen by the scheduler.
        plateau_counter: Epochs since the scheduler saw an improvement.
        best_val_acc: Best validation accuracy seen by early stopping.
        best_epoch: The epoch that achieved `best_val_acc`.
        stop_counter: Epochs since early stopping saw an improvement.
    """

    lr: float
    velocity: dict[str, np.ndarray] = field(default_factory=dict)
    plateau_best: float = -math.inf
    plateau_counter: int = 0
    best_val_acc: float = -math.inf
    best_epoch: int = 0
    stop_counter: int = 0


def sgd_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: OptimizerState,
    cfg: TrainingConfig,
    *,
    frozen: Collection[str] = (),
) -> OptimizerState:
    """One momentum SGD update with weight decay.

    For each trainable parameter `p` with gradient `g`,
    `v <- momentum * v + (g + weight_decay * p)` then `p <- p - lr * v`.
    A parameter without a gradient is treated as having a zero gradient.
    Frozen parameters and their velocities are left untouched.

    Raises:
        ShapeMismatchError: If a gradient does not match its parameter.
    """
    for name, param in params.items():
        if name in frozen or not param.requires_grad:
            continue

        g = grads.get(name)
        if g is None:
            g = np.zeros_like(param.data)
        elif g.shape != param.shape:
            raise ShapeMismatchError(f"sgd_step[{name}]", param.shape, g.shape)

        v = state.velocity.get(name)
        if v is None:
            v = np.zeros_like(param.data)

        v = cfg.momentum * v + (g + cfg.weight_decay * param.data)
        state.velocity[name] = v
        param.assign(param.data - state.lr * v)

    return state


def reduce_lr_on_plateau(
    state: OptimizerState,
    val_acc: float,
    cfg: TrainingConfig,
) -> OptimizerState:
    """Multiply the learning rate by `lr_factor` after `lr_patience` flat epochs.

    Only a strict improvement over the best accuracy resets the counter.
    """
    if val_acc > state.plateau_best:
        state.plateau_best = val_acc
        state.plateau_counter = 0
        return state

    state.plateau_counter += 1
    if state.plateau_counter >= cfg.lr_patience:
        state.lr *= cfg.lr_factor
        state.plateau_counter = 0
        logger.debug(
            f"Plateau at {state.plateau_best:.4f}, lr reduced to {state.lr:.6g}",
        )

    return state


def early_stopping_check(
    state: OptimizerState,
    val_acc: float,
    cfg: TrainingConfig,
    epoch: int,
) -> Literal["continue", "stop"]:
    """Track the best epoch and stop after `early_stop_patience` flat epochs.

    Ties keep the earlier epoch as the best one.
    """
    if val_acc > state.best_val_acc:
        state.best_val_acc = val_acc
        state.best_epoch = epoch
        state.stop_counter = 0
        return "continue"

    state.stop_counter += 1
    if state.stop_counter >= cfg.early_stop_patience:
        logger.debug(
            f"No improvement for {state.stop_counter} epochs,"
            f" best epoch {state.best_epoch}",
        )
        return "stop"
    return "continue"

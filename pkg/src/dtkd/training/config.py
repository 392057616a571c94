from __future__ import annotations

from dataclasses import dataclass

from dtkd.exceptions import InvalidProbabilityError


@dataclass(frozen=True, kw_only=True)
class TrainingConfig:
    """Hyperparameters of SGD fine-tuning.

    Attributes:
        learning_rate: Initial step size.
        momentum: Velocity decay of SGD.
        weight_decay: L2 coefficient added to every gradient.
        batch_size: Samples per mini-batch, the last batch may be smaller.
        max_epochs: Upper bound on training epochs.
        lr_patience: Epochs without improvement before the learning rate is reduced.
        lr_factor: Multiplier applied on a plateau.
        early_stop_patience: Epochs without improvement before training stops.
        seed: Seed of shuffling, dropout and flips.
        flip_prob: Probability of a horizontal flip per sample and epoch.
    """

    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0005
    batch_size: int = 64
    max_epochs: int = 200
    lr_patience: int = 3
    lr_factor: float = 0.9
    early_stop_patience: int = 10
    seed: int = 0
    flip_prob: float = 0.0

    def __post_init__(self) -> None:
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ValueError(
                "learning_rate and weight_decay must be non-negative, got"
                f" {self.learning_rate} and {self.weight_decay}",
            )
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if not 0 < self.lr_factor < 1:
            raise ValueError(f"lr_factor must be in (0, 1), got {self.lr_factor}")
        for name in ("batch_size", "max_epochs", "lr_patience", "early_stop_patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0 <= self.flip_prob <= 1:
            raise InvalidProbabilityError(
                f"flip_prob must be in [0, 1], got {self.flip_prob}",
            )

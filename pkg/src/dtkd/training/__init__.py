from dtkd.training.config import TrainingConfig
from dtkd.training.history import (
    EpochRecord,
    TrainingHistory,
    epochs_to_threshold,
)
from dtkd.training.loops import (
    accuracy,
    as_teacher,
    pretrain,
    teacher_soft_labels,
    train_tl,
    train_tl_kd,
    transfer,
)
from dtkd.training.optimizer import (
    OptimizerState,
    early_stopping_check,
    reduce_lr_on_plateau,
    sgd_step,
)

__all__ = [
    "EpochRecord",
    "OptimizerState",
    "TrainingConfig",
    "TrainingHistory",
    "accuracy",
    "as_teacher",
    "early_stopping_check",
    "epochs_to_threshold",
    "pretrain",
    "reduce_lr_on_plateau",
    "sgd_step",
    "teacher_soft_labels",
    "train_tl",
    "train_tl_kd",
    "transfer",
]

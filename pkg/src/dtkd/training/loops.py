"""The TL and TL+KD training loops.

Both loops share one epoch driver and differ only in the loss of a
mini-batch. With `alpha == 0` the distillation loss is exactly the
cross-entropy and the teacher's eval-mode forward draws no random numbers, so
a TL+KD run reproduces the TL run bit for bit.

```python
from dtkd.training import TrainingConfig, train_tl, train_tl_kd

student, history = train_tl(student, train, val, TrainingConfig(max_epochs=20))
```
"""
from __future__ import annotations

import logging
from collections.abc import Callable

import numpy as np
from more_itertools import chunked

from dtkd.autodiff import Tensor, backward, paused, recording
from dtkd.data import ImageDataset, horizontal_flip
from dtkd.exceptions import EmptyDatasetError, HeadMismatchError, TeacherNotFrozenError
from dtkd.losses import (
    DistillationConfig,
    SoftLabelBatch,
    cross_entropy,
    kd_loss_from_soft_labels,
    softmax_temperature,
)
from dtkd.nn import Checkpoint, Model, freeze_backbone, replace_head
from dtkd.profiling import Timer
from dtkd.randomness import Op, SplitMix64, derive_seed
from dtkd.training.config import TrainingConfig
from dtkd.training.history import EpochRecord, TrainingHistory
from dtkd.training.optimizer import (
    OptimizerState,
    early_stopping_check,
    reduce_lr_on_plateau,
    sgd_step,
)

logger = logging.getLogger(__name__)

BatchLoss = Callable[[Tensor, np.ndarray, np.ndarray], Tensor]
"""`(logits, labels, batch images) -> scalar loss` for one mini-batch."""


def accuracy(model: Model, ds: ImageDataset, *, batch_size: int = 256) -> float:
    """Eval-mode top-1 accuracy."""
    if len(ds) == 0:
        raise EmptyDatasetError("Cannot compute the accuracy of an empty dataset")
    preds = model.predict(ds.images, batch_size=batch_size).argmax(axis=1)
    return float(np.mean(preds == ds.labels))


def _check_teacher(teacher: Model) -> None:
    if teacher.training or not teacher.fully_frozen:
        raise TeacherNotFrozenError(
            f"Teacher {teacher.name!r} must be in eval mode with every parameter frozen"
            f" (training={teacher.training}, frozen={teacher.fully_frozen})",
        )


def teacher_soft_labels(
    teacher: Model,
    images: np.ndarray,
    temperature: float,
) -> SoftLabelBatch:
    """`softmax(z_t / T)` of a frozen, eval-mode teacher, without a graph.

    Raises:
        TeacherNotFrozenError: If the teacher is in training mode or has a
            trainable parameter.
    """
    _check_teacher(teacher)
    with paused():
        logits = teacher.forward(images)
        probs = softmax_temperature(logits, temperature).data
    return SoftLabelBatch(probs, temperature, source=teacher.name)


def _flipped(
    images: np.ndarray,
    idx: np.ndarray,
    cfg: TrainingConfig,
    epoch: int,
) -> np.ndarray:
    if cfg.flip_prob == 0:
        return images
    return np.stack(
        [
            horizontal_flip(
                img,
                cfg.flip_prob,
                SplitMix64(derive_seed(cfg.seed, epoch, int(i), Op.FLIP)),
            )
            for img, i in zip(images, idx)
        ],
    )


def _fit(
    model: Model,
    train_ds: ImageDataset,
    val_ds: ImageDataset,
    cfg: TrainingConfig,
    batch_loss: BatchLoss,
) -> tuple[Model, TrainingHistory]:
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise EmptyDatasetError(
            f"Training needs samples, got {len(train_ds)} train and {len(val_ds)} val",
        )
    if model.num_outputs != train_ds.num_classes:
        raise HeadMismatchError(
            train_ds.num_classes,
            model.num_outputs,
            what=f"{model.name} head",
        )

    params = dict(model.named_parameters())
    state = OptimizerState(lr=cfg.learning_rate)
    history = TrainingHistory()
    best = Checkpoint.from_model(model)
    dropout_rng = np.random.default_rng(derive_seed(cfg.seed, Op.DROPOUT))

    for epoch in range(1, cfg.max_epochs + 1):
        shuffle = SplitMix64.stream(cfg.seed, epoch, Op.SHUFFLE)
        order = shuffle.permutation(len(train_ds))
        lr = state.lr
        loss_sum = 0.0
        model.train()
        with Timer.time() as interval:
            for batch in chunked(order, cfg.batch_size):
                idx = np.asarray(batch, dtype=np.int64)
                images = _flipped(train_ds.images[idx], idx, cfg, epoch)
                with recording() as tape:
                    logits = model.forward(images, rng=dropout_rng)
                    loss = batch_loss(logits, train_ds.labels[idx], images)
                by_id = backward(tape, loss)
                grads = {
                    name: by_id[t.id] for name, t in params.items() if t.id in by_id
                }
                sgd_step(params, grads, state, cfg, frozen=model.frozen)
                loss_sum += loss.item() * len(idx)

        val_acc = accuracy(model, val_ds)
        history.add(
            EpochRecord(
                epoch=epoch,
                train_loss=loss_sum / len(train_ds),
                val_acc=val_acc,
                lr=lr,
                wall_time=interval.duration,
            ),
        )
        logger.info(
            f"{model.name} epoch {epoch}: loss={loss_sum / len(train_ds):.4f}"
            f" val_acc={val_acc:.4f} lr={lr:.6g} ({interval.duration:.2f}s)",
        )

        decision = early_stopping_check(state, val_acc, cfg, epoch)
        if state.best_epoch == epoch:
            best = Checkpoint.from_model(model)
        reduce_lr_on_plateau(state, val_acc, cfg)
        if decision == "stop":
            break

    best.apply_to(model)
    model.eval()
    history.best_epoch = state.best_epoch
    logger.info(
        f"{model.name}: best epoch {state.best_epoch}"
        f" with val_acc={state.best_val_acc:.4f}",
    )
    return model, history


def train_tl(
    student: Model,
    train_ds: ImageDataset,
    val_ds: ImageDataset,
    cfg: TrainingConfig,
) -> tuple[Model, TrainingHistory]:
    """Fine-tune with the cross-entropy against hard labels.

    The returned model holds the weights of the best validation epoch, ties
    resolved to the earliest, and is left in eval mode.

    Raises:
        EmptyDatasetError: If either split is empty.
        HeadMismatchError: If the head width differs from the class count.
    """

    def batch_loss(logits: Tensor, labels: np.ndarray, _images: np.ndarray) -> Tensor:
        return cross_entropy(logits, labels)

    return _fit(student, train_ds, val_ds, cfg, batch_loss)


def train_tl_kd(
    student: Model,
    teacher: Model,
    train_ds: ImageDataset,
    val_ds: ImageDataset,
    cfg: TrainingConfig,
    dcfg: DistillationConfig,
) -> tuple[Model, TrainingHistory]:
    """Fine-tune with the combined distillation loss against a frozen teacher.

    Raises:
        HeadMismatchError: If teacher and student output widths differ.
        TeacherNotFrozenError: If the teacher is trainable or in training mode.
    """
    if teacher.num_outputs != student.num_outputs:
        raise HeadMismatchError(
            student.num_outputs,
            teacher.num_outputs,
            what="teacher head",
        )

    before = teacher.checksum()
    _check_teacher(teacher)

    def batch_loss(logits: Tensor, labels: np.ndarray, images: np.ndarray) -> Tensor:
        soft = teacher_soft_labels(teacher, images, dcfg.temperature)
        return kd_loss_from_soft_labels(logits, soft, labels, dcfg)

    model, history = _fit(student, train_ds, val_ds, cfg, batch_loss)
    after = teacher.checksum()
    assert before == after, "teacher parameters changed during distillation"
    return model, history


def transfer(
    model: Model,
    num_classes: int,
    *,
    seed: int = 0,
    freeze: bool = True,
) -> Model:
    """A copy of `model` with a fresh head for `num_classes`.

    The backbone is frozen unless `freeze` is False.
    """
    target = replace_head(model, num_classes, seed=seed)
    return freeze_backbone(target) if freeze else target


def pretrain(
    model: Model,
    train_ds: ImageDataset,
    val_ds: ImageDataset,
    cfg: TrainingConfig,
) -> tuple[Model, TrainingHistory]:
    """Train every parameter of `model` on the source task."""
    model.unfreeze()
    return train_tl(model, train_ds, val_ds, cfg)


def as_teacher(model: Model) -> Model:
    """Freeze every parameter and switch to eval mode."""
    return model.freeze().eval()

from __future__ import annotations

import numpy as np
import pytest

from dtkd.data import ImageDataset, make_synthetic_dataset, prepare
from dtkd.exceptions import EmptyDatasetError, HeadMismatchError, TeacherNotFrozenError
from dtkd.losses import DistillationConfig
from dtkd.nn import build_student, build_teacher
from dtkd.training import (
    TrainingConfig,
    accuracy,
    as_teacher,
    pretrain,
    teacher_soft_labels,
    train_tl,
    train_tl_kd,
    transfer,
)

CFG = TrainingConfig(max_epochs=3, batch_size=4, learning_rate=0.05)


@pytest.fixture(scope="module")
def splits() -> tuple[ImageDataset, ImageDataset]:
    train = prepare(make_synthetic_dataset(4, 2, image_size=8, seed=0))
    val = prepare(make_synthetic_dataset(3, 2, image_size=8, seed=0, split="val"))
    return train, val


def test_train_tl_returns_the_best_epoch(splits) -> None:
    train, val = splits
    model, history = train_tl(build_student(2, image_size=8), train, val, CFG)

    assert 1 <= len(history) <= CFG.max_epochs
    assert history.best_epoch is not None
    assert not model.training
    assert accuracy(model, val) == history.best_val_acc
    assert history.best_val_acc == max(history.val_acc)
    assert [r.lr for r in history][0] == CFG.learning_rate


def test_training_is_reproducible(splits) -> None:
    train, val = splits
    a, ha = train_tl(build_student(2, image_size=8, seed=1), train, val, CFG)
    b, hb = train_tl(build_student(2, image_size=8, seed=1), train, val, CFG)

    assert a.checksum() == b.checksum()
    assert ha.df(wall_time=False).equals(hb.df(wall_time=False))


def test_frozen_backbone_is_not_trained(splits) -> None:
    train, val = splits
    model = transfer(build_student(5, image_size=8), 2, seed=0)
    before = model.checksum(model.backbone_names())
    head_before = model.checksum(model.head_names())

    trained, _ = train_tl(model, train, val, CFG)
    assert trained.checksum(trained.backbone_names()) == before
    assert trained.checksum(trained.head_names()) != head_before


def test_alpha_zero_reproduces_tl(splits) -> None:
    train, val = splits
    teacher = as_teacher(build_teacher(2, image_size=8, seed=3))

    tl, tl_history = train_tl(build_student(2, image_size=8), train, val, CFG)
    kd, kd_history = train_tl_kd(
        build_student(2, image_size=8),
        teacher,
        train,
        val,
        CFG,
        DistillationConfig(alpha=0.0, temperature=10.0),
    )

    assert kd.checksum() == tl.checksum()
    assert kd_history.df(wall_time=False).equals(tl_history.df(wall_time=False))


def test_distillation_leaves_the_teacher_alone(splits) -> None:
    train, val = splits
    teacher = as_teacher(build_teacher(2, image_size=8, seed=3))
    before = teacher.checksum()

    _, history = train_tl_kd(
        build_student(2, image_size=8),
        teacher,
        train,
        val,
        TrainingConfig(max_epochs=2, batch_size=4, flip_prob=0.5),
        DistillationConfig(alpha=0.5, temperature=4.0),
    )
    assert teacher.checksum() == before
    assert len(history) == 2


def test_teacher_must_be_frozen(splits) -> None:
    train, val = splits
    teacher = build_teacher(2, image_size=8)
    with pytest.raises(TeacherNotFrozenError):
        student = build_student(2, image_size=8)
        train_tl_kd(student, teacher, train, val, CFG, DistillationConfig())

    teacher.eval()
    with pytest.raises(TeacherNotFrozenError):
        teacher_soft_labels(teacher, train.images, 2.0)


def test_soft_labels_are_distributions(splits) -> None:
    train, _ = splits
    teacher = as_teacher(build_teacher(2, image_size=8))
    soft = teacher_soft_labels(teacher, train.images, 10.0)

    assert soft.probabilities.shape == (len(train), 2)
    np.testing.assert_allclose(soft.probabilities.sum(axis=1), 1.0)
    assert soft.temperature == 10.0


def test_head_mismatch(splits) -> None:
    train, val = splits
    with pytest.raises(HeadMismatchError):
        train_tl(build_student(3, image_size=8), train, val, CFG)

    teacher = as_teacher(build_teacher(3, image_size=8))
    with pytest.raises(HeadMismatchError):
        student = build_student(2, image_size=8)
        train_tl_kd(student, teacher, train, val, CFG, DistillationConfig())


def test_empty_splits(splits) -> None:
    train, _ = splits
    empty = train.subset([])
    with pytest.raises(EmptyDatasetError):
        train_tl(build_student(2, image_size=8), train, empty, CFG)
    with pytest.raises(EmptyDatasetError):
        accuracy(build_student(2, image_size=8), empty)


def test_pretrain_trains_everything(splits) -> None:
    train, val = splits
    model = build_student(2, image_size=8).freeze()
    before = model.checksum(model.backbone_names())

    trained, _ = pretrain(model, train, val, TrainingConfig(max_epochs=1, batch_size=4))
    assert not trained.frozen
    assert trained.checksum(trained.backbone_names()) != before

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from pytest_cases import parametrize

from dtkd.autodiff import Tensor
from dtkd.exceptions import (
    CheckpointFormatError,
    InvalidProbabilityError,
    ShapeMismatchError,
)
from dtkd.nn import (
    Checkpoint,
    Layer,
    build_model,
    build_student,
    build_teacher,
    decode_checkpoint,
    encode_checkpoint,
    freeze_backbone,
    layer_forward,
    parameter_summary,
    replace_head,
    unfreeze,
)
from dtkd.training import OptimizerState, TrainingConfig, sgd_step


def test_conv_parameter_count() -> None:
    layer = Layer.conv2d(3, 8, 3, padding=1, rng=0)
    assert layer.parameter_count() == 8 * (3 * 3 * 3 + 1)


@parametrize(builder=[build_student, build_teacher])
def test_forward_shape(builder) -> None:
    model = builder(5, image_size=8, seed=0).eval()
    out = model.forward(np.zeros((2, 3, 8, 8)))
    assert out.shape == (2, 5)
    assert model.num_outputs == 5


def test_teacher_is_larger() -> None:
    assert build_teacher(10).parameter_count() > build_student(10).parameter_count()


@parametrize(kwargs=[{"num_classes": 1}, {"num_classes": 3, "image_size": 10}])
def test_builder_validation(kwargs) -> None:
    with pytest.raises(ValueError):  # noqa: PT011
        build_student(**kwargs)


def test_build_model_by_name() -> None:
    assert build_model("teacher", 3, image_size=8).name == "teacher"
    with pytest.raises(ValueError, match="Unknown model"):
        build_model("resnet", 3)


def test_same_seed_same_weights() -> None:
    assert build_student(4, seed=3).checksum() == build_student(4, seed=3).checksum()
    assert build_student(4, seed=3).checksum() != build_student(4, seed=4).checksum()


def test_predict_is_deterministic_in_eval(tiny_dataset) -> None:
    model = build_student(2, image_size=8, seed=0)
    first = model.predict(tiny_dataset.images, batch_size=5)
    second = model.predict(tiny_dataset.images, batch_size=64)
    np.testing.assert_allclose(first, second, atol=1e-12)
    assert model.training


def test_dropout_only_in_train_mode() -> None:
    layer = Layer.dropout(0.5)
    x = Tensor(np.ones((4, 10)))
    assert layer_forward(layer, x, mode="eval") is x
    out = layer_forward(layer, x, mode="train", rng=np.random.default_rng(0)).data
    assert set(np.unique(out)) <= {0.0, 2.0}
    with pytest.raises(ValueError, match="rng"):
        layer_forward(layer, x, mode="train")
    with pytest.raises(InvalidProbabilityError):
        Layer.dropout(1.0)


def test_dropout_zeroes_the_expected_fraction() -> None:
    x = Tensor(np.ones((1000, 1000)))
    rng = np.random.default_rng(0)
    out = layer_forward(Layer.dropout(0.2), x, mode="train", rng=rng).data
    assert np.mean(out == 0) == pytest.approx(0.2, abs=0.01)


def test_dropout_keeps_the_expected_value() -> None:
    p = 0.2
    x = Tensor(np.full((1000, 1000), 3.0))
    rng = np.random.default_rng(1)
    train = layer_forward(Layer.dropout(p), x, mode="train", rng=rng).data
    evaluated = layer_forward(Layer.dropout(p), x, mode="eval").data
    std_error = train.std() / np.sqrt(train.size)
    assert abs(train.mean() - evaluated.mean()) <= 3 * std_error


def test_residual_block_with_zero_weights_is_the_identity() -> None:
    inner = [
        Layer.conv2d(2, 2, 3, padding=1, rng=0),
        Layer.relu(),
        Layer.conv2d(2, 2, 3, padding=1, rng=1),
    ]
    for layer in inner:
        for tensor in layer.params.values():
            tensor.assign(np.zeros_like(tensor.data))
    block = Layer.residual_block(inner)
    x = Tensor(np.random.default_rng(2).standard_normal((2, 2, 4, 4)))

    out = layer_forward(block, x)
    np.testing.assert_array_equal(out.data, x.data)
    after_relu = layer_forward(Layer.relu(), out)
    np.testing.assert_array_equal(after_relu.data, np.maximum(x.data, 0))


def test_residual_block_must_keep_the_shape() -> None:
    block = Layer.residual_block([Layer.conv2d(2, 3, 1, rng=0)])
    with pytest.raises(ShapeMismatchError):
        layer_forward(block, Tensor(np.ones((1, 2, 2, 2))))


def test_replace_head_keeps_the_backbone() -> None:
    model = build_student(5, image_size=8, seed=0)
    new = replace_head(model, 3, seed=1)
    assert new.num_outputs == 3
    backbone = model.backbone_names()
    assert new.checksum(backbone) == model.checksum(backbone)
    assert model.num_outputs == 5


def test_replace_head_drops_frozen_flags() -> None:
    source = freeze_backbone(build_student(5, image_size=8, seed=0))
    new = replace_head(source, 3, seed=1)
    assert new.frozen == set()
    assert all(t.requires_grad for _, t in new.named_parameters())
    assert new.parameter_count(trainable_only=True) == new.parameter_count()

    backbone = new.backbone_names()
    before = new.checksum(backbone)
    params = dict(new.named_parameters())
    grads = {name: np.ones_like(t.data) for name, t in params.items()}
    state = OptimizerState(lr=0.1)
    sgd_step(params, grads, state, TrainingConfig(), frozen=new.frozen)
    assert new.checksum(backbone) != before
    source_params = dict(source.named_parameters())
    assert not any(source_params[n].requires_grad for n in backbone)


def test_freeze_backbone_leaves_the_head_trainable() -> None:
    model = freeze_backbone(build_student(5, image_size=8))
    trainable = {name for name, _ in model.trainable_parameters()}
    assert trainable == set(model.head_names())
    summary = parameter_summary(model)
    n_trainable = sum(t.size for _, t in model.trainable_parameters())
    assert summary.loc["total", "trainable"] == n_trainable
    assert summary.loc["total", "parameters"] == model.parameter_count()

    unfreeze(model)
    assert model.parameter_count(trainable_only=True) == model.parameter_count()


def test_state_dict_round_trip() -> None:
    source = build_student(3, image_size=8, seed=0)
    target = build_student(3, image_size=8, seed=9)
    target.load_state_dict(source.state_dict())
    assert target.checksum() == source.checksum()

    state = source.state_dict()
    state.pop(next(iter(state)))
    with pytest.raises(KeyError):
        target.load_state_dict(state)


def test_checkpoint_file(tmp_path: Path) -> None:
    model = build_student(3, image_size=8, seed=0)
    path = tmp_path / "best.dtkd"
    Checkpoint.from_model(model).save(path)

    assert Checkpoint.load(path) == Checkpoint.from_model(model)
    restored = Checkpoint.load(path).apply_to(build_student(3, image_size=8, seed=5))
    assert restored.checksum() == model.checksum()
    assert path.read_bytes()[:4] == b"DTKD"


def test_checkpoint_into_a_different_head_fails() -> None:
    checkpoint = Checkpoint.from_model(build_student(3, image_size=8))
    with pytest.raises(ShapeMismatchError):
        checkpoint.apply_to(build_student(4, image_size=8))


@parametrize(
    corrupt=[
        lambda b: b"XXXX" + b[4:],
        lambda b: b[:-3],
        lambda b: b + b"\x00",
        lambda b: b[:4] + b"\x02" + b[5:],
    ],
)
def test_corrupt_checkpoints_are_rejected(corrupt) -> None:
    blob = encode_checkpoint({"w": np.arange(6.0).reshape(2, 3)})
    with pytest.raises(CheckpointFormatError):
        decode_checkpoint(corrupt(blob))


def test_encoding_is_little_endian_f64() -> None:
    blob = encode_checkpoint({"b": np.array([1.5])})
    assert blob[-8:] == np.array([1.5], dtype="<f8").tobytes()
    np.testing.assert_array_equal(decode_checkpoint(blob)["b"], [1.5])

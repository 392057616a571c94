from __future__ import annotations

import math

import numpy as np
import pytest
from pytest_cases import parametrize

from dtkd.autodiff import Tensor, backward, gradcheck, recording
from dtkd.exceptions import (
    InvalidProbabilityError,
    InvalidTemperatureError,
    LabelIndexError,
    NonFiniteError,
    NotStochasticError,
    ShapeMismatchError,
)
from dtkd.losses import (
    DistillationConfig,
    SoftLabelBatch,
    cross_entropy,
    distillation_term,
    kd_combined_loss,
    kd_loss_from_soft_labels,
    kl_divergence,
    softmax,
    softmax_temperature,
    temperature_sweep,
)

LOGITS = [0.1, 0.14, 0.85, 0.55, 0.02]


def test_softmax_of_the_visualized_logits() -> None:
    p = softmax(Tensor([LOGITS])).data[0]
    np.testing.assert_allclose(p, [0.1504, 0.1565, 0.3184, 0.2359, 0.1388], atol=1e-4)


def test_temperature_one_is_softmax_bitwise(rng: np.random.Generator) -> None:
    z = Tensor(rng.standard_normal((4, 7)))
    assert np.array_equal(softmax_temperature(z, 1.0).data, softmax(z).data)


def test_huge_temperature_is_uniform() -> None:
    p = softmax_temperature(Tensor([[1.0, 2.0, 3.0]]), 1e9).data[0]
    np.testing.assert_allclose(p, [1 / 3] * 3, atol=1e-6)


def test_winning_probability_decreases_with_temperature() -> None:
    table = temperature_sweep(LOGITS, [1, 5, 20])
    winner = table["class_2"].tolist()
    assert winner[0] > winner[1] > winner[2]
    np.testing.assert_allclose(table.sum(axis=1), 1.0, atol=1e-9)
    assert list(table.index) == [1, 5, 20]


def test_argmax_is_kept(rng: np.random.Generator) -> None:
    z = rng.standard_normal((1000, 6))
    for t in (0.5, 1.0, 10.0):
        p = softmax_temperature(Tensor(z), t).data
        assert np.array_equal(p.argmax(axis=1), z.argmax(axis=1))
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


@parametrize(temperature=[0.0, -1.0])
def test_temperature_must_be_positive(temperature: float) -> None:
    with pytest.raises(InvalidTemperatureError):
        softmax_temperature(Tensor([[1.0, 2.0]]), temperature)


def test_non_finite_logits() -> None:
    with pytest.raises(NonFiniteError):
        softmax(Tensor([[1.0, math.nan]]))


def test_cross_entropy_values() -> None:
    assert cross_entropy(Tensor([[30.0, -30.0]]), [0]).item() == pytest.approx(0.0, abs=1e-12)
    assert cross_entropy(Tensor(np.zeros((3, 10))), [0, 4, 9]).item() == pytest.approx(
        2.302585,
        abs=1e-6,
    )


def test_cross_entropy_label_out_of_range() -> None:
    with pytest.raises(LabelIndexError):
        cross_entropy(Tensor(np.zeros((2, 3))), [0, 3])
    with pytest.raises(ShapeMismatchError):
        cross_entropy(Tensor(np.zeros((2, 3))), [0])


def test_kl_hand_evaluation() -> None:
    kl = kl_divergence(Tensor([[0.5, 0.5]]), np.array([[0.9, 0.1]]))
    expected = 0.9 * math.log(0.9 / 0.5) + 0.1 * math.log(0.1 / 0.5)
    assert kl.item() == pytest.approx(expected, abs=1e-12)
    assert kl.item() == pytest.approx(0.368064, abs=1e-6)


def test_kl_of_identical_rows_is_zero(rng: np.random.Generator) -> None:
    p = softmax(Tensor(rng.standard_normal((5, 4)))).data
    assert kl_divergence(Tensor(p), p).item() == pytest.approx(0.0, abs=1e-12)


def test_kl_is_non_negative(rng: np.random.Generator) -> None:
    p = rng.dirichlet(np.ones(5), size=1000)
    q = rng.dirichlet(np.ones(5), size=1000)
    for i in range(0, 1000, 100):
        assert kl_divergence(Tensor(p[i : i + 100]), q[i : i + 100]).item() >= 0


def test_kl_needs_stochastic_rows() -> None:
    with pytest.raises(NotStochasticError):
        kl_divergence(Tensor([[0.5, 0.6]]), np.array([[0.5, 0.5]]))


def test_config_validation() -> None:
    with pytest.raises(InvalidTemperatureError):
        DistillationConfig(temperature=0)
    with pytest.raises(InvalidProbabilityError):
        DistillationConfig(alpha=1.5)


def test_soft_labels_must_be_stochastic() -> None:
    with pytest.raises(NotStochasticError):
        SoftLabelBatch(np.array([[0.2, 0.2]]), 1.0, source="t")


def _batch(rng: np.random.Generator) -> tuple[Tensor, Tensor, np.ndarray]:
    return (
        Tensor(2 * rng.standard_normal((6, 5)), requires_grad=True),
        Tensor(2 * rng.standard_normal((6, 5))),
        rng.integers(0, 5, size=6),
    )


def test_alpha_zero_is_cross_entropy_bitwise(rng: np.random.Generator) -> None:
    z_s, z_t, y = _batch(rng)
    loss = kd_combined_loss(z_s, z_t, y, DistillationConfig(temperature=10, alpha=0))
    assert loss.item() == cross_entropy(z_s, y).item()


def test_alpha_one_is_scaled_kl_bitwise(rng: np.random.Generator) -> None:
    cfg = DistillationConfig(temperature=4, alpha=1)
    mismatches = 0
    for _ in range(200):
        z_s = Tensor(2 * rng.standard_normal((4, 5)))
        z_t = Tensor(2 * rng.standard_normal((4, 5)))
        loss = kd_combined_loss(z_s, z_t, [0, 1, 2, 3], cfg).item()
        kl = kl_divergence(softmax_temperature(z_s, 4), softmax_temperature(z_t, 4))
        mismatches += loss != 16 * kl.item()
    assert mismatches == 0


def test_alpha_one_matches_the_log_softmax_term(rng: np.random.Generator) -> None:
    z_s, z_t, y = _batch(rng)
    loss = kd_combined_loss(z_s, z_t, y, DistillationConfig(temperature=4, alpha=1))
    p_t = softmax_temperature(z_t, 4).data
    expected = distillation_term(z_s, p_t, 4).item()
    assert loss.item() == pytest.approx(expected, abs=1e-12)


def test_alpha_one_survives_underflowing_probabilities() -> None:
    z_s = Tensor([[2000.0, 0.0, -2000.0]])
    z_t = Tensor([[0.0, 0.0, 0.0]])
    loss = kd_combined_loss(z_s, z_t, [0], DistillationConfig(temperature=1, alpha=1))
    assert np.isfinite(loss.item())
    assert loss.item() > 0


def test_identical_logits_have_no_soft_loss(rng: np.random.Generator) -> None:
    z = Tensor(rng.standard_normal((3, 4)))
    loss = kd_combined_loss(z, z, [0, 1, 2], DistillationConfig(alpha=1))
    assert loss.item() == pytest.approx(0.0, abs=1e-10)


def test_loss_is_affine_in_alpha(rng: np.random.Generator) -> None:
    z_s, z_t, y = _batch(rng)
    at = {
        a: kd_combined_loss(z_s, z_t, y, DistillationConfig(alpha=a)).item()
        for a in (0.0, 0.3, 1.0)
    }
    assert at[0.3] == pytest.approx(0.7 * at[0.0] + 0.3 * at[1.0], abs=1e-10)


def test_soft_label_temperature_must_match(rng: np.random.Generator) -> None:
    z_s, z_t, y = _batch(rng)
    soft = SoftLabelBatch(softmax_temperature(z_t, 2).data, 2.0, source="t")
    with pytest.raises(ValueError, match="Soft labels"):
        kd_loss_from_soft_labels(z_s, soft, y, DistillationConfig(temperature=3))


def test_no_gradient_reaches_the_teacher(rng: np.random.Generator) -> None:
    z_s, _, y = _batch(rng)
    z_t = Tensor(rng.standard_normal((6, 5)), requires_grad=True)
    with recording() as tape:
        loss = kd_combined_loss(z_s, z_t, y, DistillationConfig(alpha=0.5))
    backward(tape, loss)
    assert z_t.grad is None or not np.any(z_t.grad)
    assert z_s.grad is not None


def test_logit_shapes_must_match() -> None:
    with pytest.raises(ShapeMismatchError):
        kd_combined_loss(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 4))), [0, 1], DistillationConfig())


@parametrize(alpha=[0.0, 0.1, 1.0])
def test_combined_loss_gradient(alpha: float, rng: np.random.Generator) -> None:
    z_s, z_t, y = _batch(rng)
    cfg = DistillationConfig(temperature=10, alpha=alpha)
    result = gradcheck(lambda z: kd_combined_loss(z, z_t, y, cfg), [z_s])
    assert result.passed(1e-4)


def test_matches_torch_losses(rng: np.random.Generator) -> None:
    torch = pytest.importorskip("torch")
    functional = torch.nn.functional

    z_s, z_t, y = _batch(rng)
    t, alpha = 10.0, 0.1
    cfg = DistillationConfig(temperature=t, alpha=alpha)
    ours = kd_combined_loss(z_s, z_t, y, cfg).item()

    s = torch.tensor(z_s.data)
    te = torch.tensor(z_t.data)
    kl = functional.kl_div(
        functional.log_softmax(s / t, dim=1),
        functional.softmax(te / t, dim=1),
        reduction="batchmean",
    )
    ce = functional.cross_entropy(s, torch.tensor(y))
    theirs = float(alpha * t * t * kl + (1 - alpha) * ce)
    assert ours == pytest.approx(theirs, abs=1e-9)

from __future__ import annotations

from collections.abc import Callable

import numpy as np
import pytest

from dtkd.autodiff import Tensor, backward, paused, recording
from dtkd.autodiff.ops import add, exp, log_softmax, mean, mul, total
from dtkd.exceptions import DisconnectedGraphWarning, NotScalarError, ShapeMismatchError


def test_backward_of_a_weighted_sum():
    w = Tensor([2.0, 3.0], requires_grad=True)
    x = Tensor([1.0, 4.0])
    with recording() as tape:
        loss = (w * x).sum()

    grads = backward(tape, loss)
    assert loss.item() == 14.0
    np.testing.assert_array_equal(w.grad, [1.0, 4.0])
    assert set(grads) == {w.id}


def test_gradients_accumulate_over_reuse():
    x = Tensor([3.0], requires_grad=True)
    with recording() as tape:
        loss = total(add(mul(x, x), x))

    backward(tape, loss)
    np.testing.assert_allclose(x.grad, [7.0])


def test_nothing_is_recorded_outside_a_block():
    x = Tensor([1.0], requires_grad=True)
    with recording() as tape:
        with paused():
            mul(x, 2.0)
        assert len(tape) == 0
        mul(x, 2.0)
    assert len(tape) == 1


def test_constants_are_not_recorded():
    with recording() as tape:
        mul(Tensor([1.0]), Tensor([2.0]))
    assert len(tape) == 0


def test_unused_leaf_gets_a_zero_gradient():
    x = Tensor([1.0, 2.0], requires_grad=True)
    y = Tensor([5.0], requires_grad=True)
    with recording() as tape:
        loss = total(mul(x, 2.0))
        mul(y, 3.0)

    backward(tape, loss)
    np.testing.assert_array_equal(y.grad, [0.0])
    np.testing.assert_array_equal(x.grad, [2.0, 2.0])


def test_backward_needs_a_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with recording() as tape:
        out = mul(x, 2.0)
    with pytest.raises(NotScalarError):
        backward(tape, out)


def test_disconnected_loss_warns_and_zeroes():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with recording() as tape:
        mul(x, 2.0)
    with pytest.warns(DisconnectedGraphWarning):
        backward(tape, Tensor(3.0))
    np.testing.assert_array_equal(x.grad, [0.0, 0.0])


def test_tensors_are_read_only():
    t = Tensor([1.0, 2.0])
    with pytest.raises(ValueError, match="read-only"):
        t.data[0] = 5.0


def test_assign_keeps_old_arrays_intact():
    t = Tensor([1.0, 2.0])
    before = t.data
    t.assign(np.array([3.0, 4.0]))
    np.testing.assert_array_equal(before, [1.0, 2.0])
    np.testing.assert_array_equal(t.data, [3.0, 4.0])
    with pytest.raises(ShapeMismatchError):
        t.assign(np.zeros(3))


def test_item_needs_one_value():
    assert Tensor([[2.5]]).item() == 2.5
    with pytest.raises(NotScalarError):
        Tensor([1.0, 2.0]).item()


def _losses(x: Tensor, w: np.ndarray) -> tuple[Tensor, Tensor]:
    first = total(mul(exp(mul(x, 0.5)), Tensor(w)))
    second = mean(mul(log_softmax(x, 2.0), Tensor(w[::-1].copy())))
    return first, second


def _grad_of(x: Tensor, loss_fn: Callable[[], Tensor]) -> np.ndarray:
    with recording() as tape:
        loss = loss_fn()
    backward(tape, loss)
    assert x.grad is not None
    return x.grad.copy()


def test_backward_is_linear_in_the_loss() -> None:
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    w = rng.standard_normal((3, 4))
    a, b = 0.7, -2.5

    g1 = _grad_of(x, lambda: _losses(x, w)[0])
    g2 = _grad_of(x, lambda: _losses(x, w)[1])

    def combined() -> Tensor:
        first, second = _losses(x, w)
        return add(mul(first, a), mul(second, b))

    np.testing.assert_allclose(_grad_of(x, combined), a * g1 + b * g2, atol=1e-12)


def test_replaying_a_tape_is_bitwise_identical() -> None:
    rng = np.random.default_rng(1)
    x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    w = rng.standard_normal((3, 4))
    with recording() as tape:
        first, second = _losses(x, w)
        loss = add(first, second)

    grads = backward(tape, loss)
    again = backward(tape, loss)
    assert grads.keys() == again.keys()
    for tid, grad in grads.items():
        assert np.array_equal(grad, again[tid])

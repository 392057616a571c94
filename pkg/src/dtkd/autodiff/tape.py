"""Recording of primitive applications and reverse-mode differentiation.

Operations record themselves on the tape that is active in the current context,
and only when at least one of their inputs requires a gradient. Outside of a
[`recording()`][dtkd.autodiff.recording] block nothing is kept alive, which makes
plain forward passes (evaluation, attribution, teacher inference) cheap.

```python
from dtkd.autodiff import Tensor, backward, recording

w = Tensor([2.0, 3.0], requires_grad=True)
x = Tensor([1.0, 1.0])

with recording() as tape:
    loss = (w * x).sum()

grads = backward(tape, loss)
assert list(w.grad) == [1.0, 1.0]
```
"""
from __future__ import annotations

import logging
import warnings
from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field

import numpy as np

from dtkd.autodiff.tensor import Tensor
from dtkd.exceptions import DisconnectedGraphWarning, NotScalarError

logger = logging.getLogger(__name__)

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]
"""Maps the gradient of an output to the gradients of each input."""


@dataclass(frozen=True)
class TapeEntry:
    """One recorded primitive application.

    Attributes:
        op: The name of the primitive.
        inputs: The ids of the input tensors, in argument order.
        output: The id of the produced tensor.
        backward: Closure over the saved forward values.
    """

    op: str
    inputs: tuple[int, ...]
    output: int
    backward: BackwardFn = field(repr=False)


class ComputationTape:
    """An ordered record of primitive applications.

    Entries are appended in execution order so every input precedes its
    consumers; replaying them in reverse visits each node once.
    """

    def __init__(self) -> None:
        super().__init__()
        self.entries: list[TapeEntry] = []
        self.leaves: dict[int, Tensor] = {}
        self._produced: set[int] = set()

    def record(
        self,
        op: str,
        inputs: Sequence[Tensor],
        output: Tensor,
        backward: BackwardFn,
    ) -> None:
        """Append a primitive application.

        Args:
            op: The name of the primitive.
            inputs: The input tensors.
            output: The produced tensor.
            backward: The vector-Jacobian product of the primitive.
        """
        for t in inputs:
            if t.requires_grad and t.id not in self._produced:
                self.leaves.setdefault(t.id, t)

        self.entries.append(
            TapeEntry(op, tuple(t.id for t in inputs), output.id, backward),
        )
        self._produced.add(output.id)

    def produced(self, tensor: Tensor) -> bool:
        """Whether `tensor` is the output of a recorded entry."""
        return tensor.id in self._produced

    def __len__(self) -> int:
        return len(self.entries)


_active_tape: ContextVar[ComputationTape | None] = ContextVar(
    "dtkd_active_tape",
    default=None,
)


def active_tape() -> ComputationTape | None:
    """The tape operations currently record to, if any."""
    return _active_tape.get()


@contextmanager
def recording(tape: ComputationTape | None = None) -> Iterator[ComputationTape]:
    """Record every differentiable operation in this block.

    Args:
        tape: Continue an existing tape, otherwise a fresh one is created.

    Yields:
        The tape being recorded to.
    """
    tape = tape if tape is not None else ComputationTape()
    token = _active_tape.set(tape)
    try:
        yield tape
    finally:
        _active_tape.reset(token)


@contextmanager
def paused() -> Iterator[None]:
    """Suspend recording, for forward passes that must not be differentiated."""
    token = _active_tape.set(None)
    try:
        yield
    finally:
        _active_tape.reset(token)


def backward(tape: ComputationTape, loss: Tensor) -> dict[int, np.ndarray]:
    """Compute the gradient of a scalar loss for every leaf on the tape.

    Each leaf's `.grad` is overwritten with its gradient. Gradients of
    intermediate tensors are discarded.

    Args:
        tape: The tape the loss was recorded on.
        loss: A tensor holding a single value.

    Returns:
        A mapping from leaf tensor id to its gradient.

    Raises:
        NotScalarError: If the loss holds more than one value.
    """
    if loss.size != 1:
        raise NotScalarError(loss.shape)

    if not tape.produced(loss):
        warnings.warn(
            "The loss was not produced by the tape, all gradients are zero.",
            DisconnectedGraphWarning,
            stacklevel=2,
        )
        grads = {tid: np.zeros_like(t.data) for tid, t in tape.leaves.items()}
        for tid, t in tape.leaves.items():
            t.grad = grads[tid]
        return grads

    pending: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.data)}
    for entry in reversed(tape.entries):
        grad_out = pending.pop(entry.output, None)
        if grad_out is None:
            continue

        grads_in = entry.backward(grad_out)
        for input_id, grad_in in zip(entry.inputs, grads_in, strict=True):
            if grad_in is None:
                continue
            if input_id in pending:
                pending[input_id] = pending[input_id] + grad_in
            else:
                pending[input_id] = grad_in

    grads = {}
    for tid, t in tape.leaves.items():
        grad = pending.get(tid)
        if grad is None:
            grads[tid] = np.zeros_like(t.data)
        else:
            grads[tid] = np.array(grad, dtype=np.float64)
        t.grad = grads[tid]

    logger.debug(f"Backward over {len(tape)} entries for {len(grads)} leaves")
    return grads

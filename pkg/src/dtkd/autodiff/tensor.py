"""The [`Tensor`][dtkd.autodiff.Tensor], a dense float64 array that may carry a gradient.

Values are held in a row-major `numpy` array which is marked read-only on
creation. Operations never write into an existing tensor; the optimizer replaces
a parameter's array instead of mutating it, so arrays saved on a
[`ComputationTape`][dtkd.autodiff.ComputationTape] stay valid.
"""
from __future__ import annotations

import copy
import itertools
from collections.abc import Sequence
from typing import TYPE_CHECKING, Any
from typing_extensions import override

import numpy as np

from dtkd.exceptions import NotScalarError, ShapeMismatchError

if TYPE_CHECKING:
    from typing_extensions import Self

_ids = itertools.count()


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


class Tensor:
    """A dense n-dimensional array of float64 values.

    Attributes:
        data: The values, read-only.
        requires_grad: Whether gradients should be computed for this tensor.
        grad: The gradient from the last call to
            [`backward`][dtkd.autodiff.backward], if any.
        id: A process-unique identifier used by the tape.
        name: An optional name, parameters carry their qualified name.
    """

    __slots__ = ("data", "requires_grad", "grad", "id", "name")

    def __init__(
        self,
        data: Any,
        *,
        requires_grad: bool = False,
        name: str | None = None,
    ) -> None:
        """Create a tensor from anything `numpy` can turn into an array.

        The values are copied.

        Args:
            data: The values.
            requires_grad: Whether this tensor is a leaf to differentiate against.
            name: An optional name.
        """
        super().__init__()
        self.data: np.ndarray = _frozen(np.array(data, dtype=np.float64))
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.id = next(_ids)
        self.name = name

    @classmethod
    def wrap(cls, array: np.ndarray, *, requires_grad: bool = False) -> Tensor:
        """Wrap an array produced by an operation without copying it."""
        tensor = cls.__new__(cls)
        tensor.data = _frozen(np.asarray(array, dtype=np.float64))
        tensor.requires_grad = requires_grad
        tensor.grad = None
        tensor.id = next(_ids)
        tensor.name = None
        return tensor

    @property
    def shape(self) -> tuple[int, ...]:
        """The shape of the tensor."""
        return self.data.shape

    @property
    def ndim(self) -> int:
        """The number of dimensions."""
        return self.data.ndim

    @property
    def size(self) -> int:
        """The number of values."""
        return self.data.size

    def numpy(self) -> np.ndarray:
        """A read-only view of the values."""
        return self.data

    def item(self) -> float:
        """The single value of a one-element tensor."""
        if self.data.size != 1:
            raise NotScalarError(self.shape)

        return float(self.data.reshape(-1)[0])

    def assign(self, values: np.ndarray) -> None:
        """Replace the values of a parameter.

        The previous array is left untouched, arrays referenced elsewhere
        keep their values.

        Args:
            values: The new values, must have the current shape.
        """
        if values.shape != self.data.shape:
            raise ShapeMismatchError("assign", self.data.shape, values.shape)

        self.data = _frozen(np.array(values, dtype=np.float64))

    def detach(self) -> Tensor:
        """A tensor sharing these values that does not require a gradient."""
        return Tensor.wrap(self.data, requires_grad=False)

    def reshape(self, *shape: int | Sequence[int]) -> Tensor:
        """See [`reshape`][dtkd.autodiff.ops.reshape]."""
        from dtkd.autodiff.ops import reshape

        dims = shape[0] if len(shape) == 1 and not isinstance(shape[0], int) else shape
        return reshape(self, tuple(dims))  # type: ignore[arg-type]

    def sum(self) -> Tensor:
        """See [`total`][dtkd.autodiff.ops.total]."""
        from dtkd.autodiff.ops import total

        return total(self)

    def __add__(self, other: Tensor | float) -> Tensor:
        from dtkd.autodiff.ops import add

        return add(self, other)

    def __sub__(self, other: Tensor | float) -> Tensor:
        from dtkd.autodiff.ops import sub

        return sub(self, other)

    def __mul__(self, other: Tensor | float) -> Tensor:
        from dtkd.autodiff.ops import mul

        return mul(self, other)

    def __rmul__(self, other: float) -> Tensor:
        from dtkd.autodiff.ops import mul

        return mul(self, other)

    def __neg__(self) -> Tensor:
        from dtkd.autodiff.ops import neg

        return neg(self)

    def __matmul__(self, other: Tensor) -> Tensor:
        from dtkd.autodiff.ops import matmul

        return matmul(self, other)

    def __deepcopy__(self, memo: dict[int, Any]) -> Self:
        clone = self.__class__.wrap(self.data.copy(), requires_grad=self.requires_grad)
        clone.name = self.name
        clone.grad = copy.deepcopy(self.grad, memo)
        return clone  # type: ignore[return-value]

    @override
    def __repr__(self) -> str:
        name = f", name={self.name!r}" if self.name else ""
        return (
            f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{name})"
        )

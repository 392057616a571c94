"""The errors and warnings raised throughout dtkd.

Every error derives from [`DTKDError`][dtkd.exceptions.DTKDError] as well as
the builtin exception it most closely resembles, so that callers may catch
either one.
"""
from __future__ import annotations

from collections.abc import Sequence
from typing import Any


class DTKDError(Exception):
    """Base class of all errors raised by dtkd."""


# --- autodiff / nn


class ShapeMismatchError(DTKDError, ValueError):
    """Two shapes that must agree do not."""

    def __init__(self, op: str, *shapes: Sequence[int] | tuple[int, ...]) -> None:
        """Initialize the exception.

        Args:
            op: The name of the operation that was attempted.
            *shapes: The offending shapes.
        """
        rendered = ", ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"Shape mismatch in `{op}`: got {rendered}.")


class DomainError(DTKDError, ValueError):
    """An input lies outside the domain of an operation."""


class NotScalarError(DTKDError, ValueError):
    """A scalar tensor was required."""

    def __init__(self, shape: tuple[int, ...]) -> None:
        """Initialize the exception.

        Args:
            shape: The shape of the non-scalar tensor.
        """
        super().__init__(f"Expected a scalar loss but got a tensor of shape {shape}.")


class OddDimensionError(DTKDError, ValueError):
    """A spatial dimension must be even."""

    def __init__(self, op: str, shape: tuple[int, ...]) -> None:
        """Initialize the exception.

        Args:
            op: The operation requiring even dimensions.
            shape: The offending shape.
        """
        super().__init__(f"`{op}` requires even spatial dimensions, got {shape}.")


class InvalidProbabilityError(DTKDError, ValueError):
    """A probability outside of its allowed interval."""


class CheckpointFormatError(DTKDError, ValueError):
    """A checkpoint file could not be decoded."""


class HeadMismatchError(DTKDError, ValueError):
    """Output widths of two models, or of a model and a dataset, differ."""

    def __init__(self, expected: int, got: int, *, what: str = "model head") -> None:
        """Initialize the exception.

        Args:
            expected: The expected number of outputs.
            got: The actual number of outputs.
            what: What is being compared.
        """
        super().__init__(f"{what} has {got} outputs, expected {expected}.")


class TeacherNotFrozenError(DTKDError, RuntimeError):
    """The teacher must be fully frozen and in eval mode."""


# --- losses


class NonFiniteError(DTKDError, ValueError):
    """NaN or infinite values where finite values are required."""


class InvalidTemperatureError(DTKDError, ValueError):
    """Temperatures must be strictly positive."""

    def __init__(self, temperature: float) -> None:
        """Initialize the exception.

        Args:
            temperature: The offending temperature.
        """
        super().__init__(f"Temperature must be > 0, got {temperature}.")


class LabelIndexError(DTKDError, IndexError):
    """A class index is outside of [0, K)."""

    def __init__(self, index: int, num_classes: int) -> None:
        """Initialize the exception.

        Args:
            index: The offending index.
            num_classes: The number of classes K.
        """
        super().__init__(f"Class index {index} is out of range for K={num_classes}.")


class NotStochasticError(DTKDError, ValueError):
    """Rows of a probability matrix must sum to one."""


# --- data


class TruncatedFileError(DTKDError, ValueError):
    """A binary dataset file ends in the middle of a record."""


class LabelOutOfRangeError(DTKDError, ValueError):
    """A stored label is not a valid class index."""


class FormatError(DTKDError, ValueError):
    """A file does not follow the expected binary format."""


class ZeroSigmaError(DTKDError, ValueError):
    """A normalization standard deviation is not strictly positive."""


class InvalidRangeError(DTKDError, ValueError):
    """A range of sizes is empty or exceeds the image."""


class SingleClassError(DTKDError, ValueError):
    """A label cannot be changed when there is only one class."""


class EmptyResultError(DTKDError, ValueError):
    """An operation would produce an empty result."""


class SplitError(DTKDError, ValueError):
    """An operation was applied to the wrong dataset split."""


class MissingAnnotationError(DTKDError, KeyError):
    """No annotation exists for the requested image."""


class MalformedPolygonError(DTKDError, ValueError):
    """A polygon has fewer than three vertices or an odd coordinate count."""


class InvalidMaskError(DTKDError, ValueError):
    """A mask lacks either foreground or background pixels."""


class DimMismatchError(DTKDError, ValueError):
    """A per-pixel map and a mask disagree on dimensions."""


# --- training / metrics / attribution


class EmptyDatasetError(DTKDError, ValueError):
    """A dataset without samples was given where samples are required."""


class EmptyMatrixError(DTKDError, ValueError):
    """A confusion matrix without any counts."""


class TooLongError(DTKDError, ValueError):
    """Exact enumeration was requested for too many pairs."""


class AllZeroDifferencesError(DTKDError, ValueError):
    """Every paired difference is zero, there is nothing to rank."""


class TooManyPlayersError(DTKDError, ValueError):
    """Exact Shapley enumeration was requested for too many players."""

    def __init__(self, n: int, limit: int) -> None:
        """Initialize the exception.

        Args:
            n: The requested number of players.
            limit: The maximum supported number of players.
        """
        super().__init__(f"Exact Shapley values support at most {limit} players, got {n}.")


class EmptySetError(DTKDError, ValueError):
    """A background set without images."""


class SampleMismatchError(DTKDError, ValueError):
    """Rows from different samples were compared."""

    def __init__(self, left: Any, right: Any) -> None:
        """Initialize the exception.

        Args:
            left: The sample id of the first row.
            right: The sample id of the second row.
        """
        super().__init__(f"Cannot compare rows of different samples: {left!r} != {right!r}.")


# --- cli


class MalformedCSVError(DTKDError, ValueError):
    """A CSV file is missing required columns or rows."""


class ConfigError(DTKDError, ValueError):
    """An experiment configuration is invalid."""


# --- warnings


class DisconnectedGraphWarning(UserWarning):
    """The loss does not depend on the recorded tape; gradients are zero."""


class UndefinedRatioWarning(UserWarning):
    """A contribution ratio has a zero denominator and was replaced by NaN."""

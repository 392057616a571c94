"""The DTKD checkpoint format.

```
magic       4 bytes   b"DTKD"
version     u32 LE
count       u32 LE
per tensor:
  name_len  u16 LE, then name_len bytes of UTF-8
  rank      u8
  dims      rank * u64 LE
  values    prod(dims) * f64 LE
```

Loading validates the magic, the version and that the byte length is exactly
what the header implies.
"""
from __future__ import annotations

import logging
import math
import struct
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from dtkd.exceptions import CheckpointFormatError

if TYPE_CHECKING:
    from dtkd.nn.models import Model

logger = logging.getLogger(__name__)

MAGIC = b"DTKD"
VERSION = 1


def encode_checkpoint(tensors: Mapping[str, np.ndarray]) -> bytes:
    """Serialize named arrays, in mapping order."""
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, array in tensors.items():
        raw_name = name.encode("utf-8")
        values = np.asarray(array, dtype="<f8")
        parts.append(struct.pack("<H", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<B", values.ndim))
        parts.append(struct.pack(f"<{values.ndim}Q", *values.shape))
        parts.append(np.ascontiguousarray(values).tobytes())
    return b"".join(parts)


def decode_checkpoint(blob: bytes) -> dict[str, np.ndarray]:
    """Parse a checkpoint produced by [`encode_checkpoint`][dtkd.nn.encode_checkpoint].

    Raises:
        CheckpointFormatError: On a wrong magic, an unknown version, a truncated
            body or trailing bytes.
    """
    view = memoryview(blob)

    def take(n: int, offset: int) -> tuple[memoryview, int]:
        if offset + n > len(view):
            raise CheckpointFormatError(
                f"Checkpoint truncated: needed {offset + n} bytes, have {len(view)}",
            )
        return view[offset : offset + n], offset + n

    magic, offset = take(4, 0)
    if bytes(magic) != MAGIC:
        raise CheckpointFormatError(f"Bad magic {bytes(magic)!r}, expected {MAGIC!r}")

    header, offset = take(8, offset)
    version, count = struct.unpack("<II", header)
    if version != VERSION:
        raise CheckpointFormatError(f"Unsupported checkpoint version {version}")

    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        raw, offset = take(2, offset)
        (name_len,) = struct.unpack("<H", raw)
        raw, offset = take(name_len, offset)
        try:
            name = bytes(raw).decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointFormatError(f"Tensor name is not UTF-8: {bytes(raw)!r}") from e

        raw, offset = take(1, offset)
        (rank,) = struct.unpack("<B", raw)
        raw, offset = take(8 * rank, offset)
        dims = struct.unpack(f"<{rank}Q", raw)
        raw, offset = take(8 * math.prod(dims), offset)
        tensors[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(dims)

    if offset != len(view):
        raise CheckpointFormatError(
            f"Checkpoint has {len(view) - offset} trailing bytes after {count} tensors",
        )

    return tensors


@dataclass(eq=False)
class Checkpoint:
    """Named parameter arrays as written to a `.dtkd` file.

    ```python
    Checkpoint.from_model(model).save("best.dtkd")
    Checkpoint.load("best.dtkd").apply_to(build_student(10))
    ```
    """

    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_model(cls, model: Model) -> Checkpoint:
        """Snapshot the parameters of a model."""
        return cls(model.state_dict())

    def apply_to(self, model: Model) -> Model:
        """Load these values into `model`, names and shapes must match."""
        return model.load_state_dict(self.tensors)

    def save(self, path: Path | str) -> None:
        """Write the checkpoint to `path`."""
        Path(path).write_bytes(encode_checkpoint(self.tensors))
        logger.debug(f"Saved {len(self.tensors)} tensors to {path}")

    @classmethod
    def load(cls, path: Path | str) -> Checkpoint:
        """Read a checkpoint from `path`."""
        return cls(decode_checkpoint(Path(path).read_bytes()))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Checkpoint):
            return NotImplemented
        return list(self.tensors) == list(other.tensors) and all(
            np.array_equal(self.tensors[k], other.tensors[k]) for k in self.tensors
        )

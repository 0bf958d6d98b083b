"""Dense rank-3 arrays in one fixed (row, column, channel) layout.

Every image and every intermediate layer output is a ``Tensor3``. The
flattening order (row, then column, then channel) is the single canonical
order used everywhere: dense-layer inputs, descriptor harvesting and
container serialization all rely on it, so weight layouts can never drift
out of sync silently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError

__all__ = ["Tensor3"]


@dataclass(frozen=True)
class Tensor3:
    """An R x C x K array stored C-contiguously as float32."""

    array: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.array)
        if a.ndim != 3:
            raise ShapeMismatchError(f"Tensor3 needs a rank-3 array, got rank {a.ndim}")
        if min(a.shape) < 1:
            raise ShapeMismatchError(f"Tensor3 dimensions must be positive, got {a.shape}")
        if a.dtype != np.float32 or not a.flags.c_contiguous:
            a = np.ascontiguousarray(a, dtype=np.float32)
        object.__setattr__(self, "array", a)

    @classmethod
    def from_flat(cls, data, rows: int, cols: int, channels: int) -> "Tensor3":
        flat = np.asarray(data, dtype=np.float32).ravel()
        if flat.size != rows * cols * channels:
            raise ShapeMismatchError(
                f"flat data has {flat.size} values, expected {rows}*{cols}*{channels}"
                f" = {rows * cols * channels}"
            )
        return cls(flat.reshape(rows, cols, channels))

    @property
    def rows(self) -> int:
        return self.array.shape[0]

    @property
    def cols(self) -> int:
        return self.array.shape[1]

    @property
    def channels(self) -> int:
        return self.array.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.array.shape

    @property
    def data(self) -> np.ndarray:
        """Flat view in the canonical (row, col, channel) order."""
        return self.array.reshape(-1)

    def fiber(self, i: int, j: int) -> np.ndarray:
        """Channel fiber at spatial location (i, j)."""
        return self.array[i, j, :]

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.array).all())

    def __eq__(self, other) -> bool:
        return isinstance(other, Tensor3) and np.array_equal(self.array, other.array)

"""Harvesting layer outputs as dense local descriptors, plus reservoir sampling.

Each spatial location of a layer output contributes its channel fiber as
one descriptor. Per-layer training sets are pooled across images with a
bounded uniform reservoir so codebook / mixture training cost stays fixed
no matter how many images stream through.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError
from .tensor import Tensor3

__all__ = ["DescriptorSet", "DescriptorSample", "harvest", "reservoir_extend"]


@dataclass(frozen=True)
class DescriptorSet:
    """All channel fibers of one layer output of one image, in scan order."""

    layer: int
    vectors: np.ndarray  # (count, dim) float32

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float32)
        if v.ndim != 2:
            raise ShapeMismatchError(f"descriptor matrix must be rank 2, got {v.ndim}")
        object.__setattr__(self, "vectors", v)

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def harvest(layer_output: Tensor3, layer: int) -> DescriptorSet:
    """Extract the rows*cols channel fibers of a layer output.

    Scan order is the canonical row-major (row, then column) order, so the
    result is deterministic and exactly rows*cols vectors of length
    channels.
    """
    arr = layer_output.array
    vectors = arr.reshape(arr.shape[0] * arr.shape[1], arr.shape[2]).copy()
    return DescriptorSet(layer=layer, vectors=vectors)


class DescriptorSample:
    """Bounded uniform sample of descriptors pooled across images (one layer).

    Classic reservoir sampling: after seeing t descriptors every one of
    them is retained with probability capacity/t. Deterministic given the
    seed and the presentation order. Batched internally, which changes
    neither the distribution nor the determinism.
    """

    def __init__(self, layer: int, dim: int, capacity: int, seed: int = 0):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.layer = layer
        self.dim = dim
        self.capacity = capacity
        self.seed = seed
        self.seen = 0
        self._buf = np.empty((capacity, dim), dtype=np.float32)
        self._rng = np.random.default_rng(seed)

    @property
    def size(self) -> int:
        return min(self.seen, self.capacity)

    @property
    def descriptors(self) -> np.ndarray:
        return self._buf[: self.size]

    def extend(self, dset: DescriptorSet) -> "DescriptorSample":
        if dset.dim != self.dim:
            raise ShapeMismatchError(
                f"descriptor dim {dset.dim} does not match sample dim {self.dim}"
            )
        vecs = dset.vectors
        m = vecs.shape[0]
        start = 0
        if self.seen < self.capacity:
            take = min(self.capacity - self.seen, m)
            self._buf[self.seen:self.seen + take] = vecs[:take]
            self.seen += take
            start = take
        if start < m:
            tail = m - start
            # Global 1-based index of each remaining descriptor in the stream.
            t = self.seen + np.arange(1, tail + 1, dtype=np.int64)
            draws = self._rng.integers(0, t)
            hits = np.nonzero(draws < self.capacity)[0]
            for h in hits:  # later items overwrite earlier winners, in order
                self._buf[draws[h]] = vecs[start + h]
            self.seen += tail
        return self


def reservoir_extend(sample: DescriptorSample, dset: DescriptorSet) -> DescriptorSample:
    """Feed one descriptor set into the reservoir (updates in place)."""
    return sample.extend(dset)

"""K-means codebooks and Bag-of-Words encoding.

The codebook partitions descriptor space into nearest-centroid cells; the
BoW feature of an image is the relative frequency of its descriptors per
cell. Ties in nearest-centroid queries always break toward the lowest
index. Training is deterministic for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .descriptors import DescriptorSample, DescriptorSet
from .errors import ShapeMismatchError

__all__ = ["Codebook", "kmeans_train", "nearest_codeword", "nearest_codewords", "bow_encode"]


@dataclass(frozen=True)
class Codebook:
    layer: int
    centroids: np.ndarray  # (N, dim) float32
    objective_trace: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        c = np.asarray(self.centroids, dtype=np.float32)
        if c.ndim != 2 or c.shape[0] < 1:
            raise ShapeMismatchError("centroids must be a non-empty (N, dim) matrix")
        if not np.isfinite(c).all():
            raise ValueError("centroids must be finite")
        if len(np.unique(c, axis=0)) != c.shape[0]:
            raise ValueError("codebook contains identical centroids")
        object.__setattr__(self, "centroids", c)

    @property
    def size(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


def _as_points(sample) -> np.ndarray:
    if isinstance(sample, DescriptorSample):
        pts = sample.descriptors
    else:
        pts = np.asarray(sample)
    return np.ascontiguousarray(pts, dtype=np.float64)


def nearest_codewords(points: np.ndarray, centroids: np.ndarray):
    """Exact nearest-centroid assignment for a batch of points.

    Returns (labels, squared distances). One centroid at a time, float64,
    strict-less comparison so ties stay with the lowest centroid index.
    """
    pts = np.asarray(points, dtype=np.float64)
    cents = np.asarray(centroids, dtype=np.float64)
    best = np.full(pts.shape[0], np.inf)
    labels = np.zeros(pts.shape[0], dtype=np.int64)
    for j in range(cents.shape[0]):
        diff = pts - cents[j]
        d = np.einsum("ij,ij->i", diff, diff)
        closer = d < best
        best[closer] = d[closer]
        labels[closer] = j
    return labels, best


def _kmeanspp_init(pts: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    m = pts.shape[0]
    centroids = np.empty((n, pts.shape[1]), dtype=np.float64)
    first = rng.integers(0, m)
    centroids[0] = pts[first]
    diff = pts - centroids[0]
    d2 = np.einsum("ij,ij->i", diff, diff)
    for j in range(1, n):
        total = d2.sum()
        if total <= 0.0:
            # all remaining points coincide with chosen centroids
            centroids[j] = pts[rng.integers(0, m)]
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, m - 1)
            centroids[j] = pts[idx]
        diff = pts - centroids[j]
        d2 = np.minimum(d2, np.einsum("ij,ij->i", diff, diff))
    return centroids


def kmeans_train(sample, n_codewords: int, max_iters: int = 100, seed: int = 0,
                 layer: int | None = None) -> Codebook:
    """Lloyd's algorithm with k-means++ seeding.

    Accepts a DescriptorSample or a raw (M, dim) array. Empty clusters are
    re-seeded from the point currently farthest from its centroid. The
    quantization objective (mean squared distance to the nearest centroid)
    is recorded per iteration in ``objective_trace`` and never increases.
    """
    pts = _as_points(sample)
    if layer is None:
        layer = getattr(sample, "layer", 0)
    m = pts.shape[0]
    if m < n_codewords:
        raise ValueError(f"{m} descriptors cannot support {n_codewords} codewords")
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(pts, n_codewords, rng)

    labels = None
    trace: list[float] = []
    for _ in range(max_iters):
        new_labels, d2 = nearest_codewords(pts, centroids)
        trace.append(float(d2.mean()))
        counts = np.bincount(new_labels, minlength=n_codewords)
        empties = np.nonzero(counts == 0)[0]
        if empties.size:
            far = np.argsort(-d2)
            for rank, j in enumerate(empties):
                centroids[j] = pts[far[rank]]
            # re-assign with the repaired codebook before updating means
            new_labels, d2 = nearest_codewords(pts, centroids)
            counts = np.bincount(new_labels, minlength=n_codewords)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        occupied = counts > 0  # duplicates in the sample can defeat re-seeding
        for d in range(pts.shape[1]):
            sums = np.bincount(labels, weights=pts[:, d], minlength=n_codewords)
            centroids[occupied, d] = sums[occupied] / counts[occupied]
    cents32 = centroids.astype(np.float32)
    if len(np.unique(cents32, axis=0)) != n_codewords:
        raise ValueError(
            "sample has too few distinct descriptors for the requested codebook size"
        )
    return Codebook(layer=layer, centroids=cents32, objective_trace=tuple(trace))


def nearest_codeword(x, codebook: Codebook) -> int:
    """Index of the closest centroid (squared Euclidean, lowest index wins)."""
    v = np.asarray(x, dtype=np.float64).ravel()
    if v.size != codebook.dim:
        raise ShapeMismatchError(
            f"descriptor dim {v.size} does not match codebook dim {codebook.dim}"
        )
    labels, _ = nearest_codewords(v[None, :], codebook.centroids)
    return int(labels[0])


def bow_encode(dset: DescriptorSet, codebook: Codebook) -> np.ndarray:
    """Relative frequency of descriptors per nearest-centroid cell.

    Output is length N, nonnegative, and sums to 1 (float64). Invariant to
    descriptor order and to any common positive rescaling of descriptors
    and centroids.
    """
    if dset.count == 0:
        raise ValueError("cannot encode an empty descriptor set")
    if dset.dim != codebook.dim:
        raise ShapeMismatchError(
            f"descriptor dim {dset.dim} does not match codebook dim {codebook.dim}"
        )
    labels, _ = nearest_codewords(dset.vectors, codebook.centroids)
    counts = np.bincount(labels, minlength=codebook.size)
    return counts.astype(np.float64) / dset.count

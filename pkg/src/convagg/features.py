"""Hybrid image features: per-layer encoded segments concatenated in order.

A layer subset strategy (single / first-L / last-L / explicit) picks which
spatial layers contribute, each contributing one encoded segment; raw
fully-connected outputs can be appended unencoded at the end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codebook import Codebook, bow_encode
from .descriptors import DescriptorSet
from .errors import ShapeMismatchError
from .gmm import GmmModel, fv_encode
from .network import ArchitectureDescriptor
from .tensor import Tensor3

__all__ = [
    "FeatureSegment",
    "HybridFeature",
    "LayerSubset",
    "encode_layer",
    "concat_layers",
    "append_fc",
]


@dataclass(frozen=True)
class FeatureSegment:
    layer: int
    encoder: str  # "bow" | "fv" | "raw"
    vector: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64).ravel()
        object.__setattr__(self, "vector", v)

    @property
    def dim(self) -> int:
        return self.vector.size


@dataclass(frozen=True)
class HybridFeature:
    """Ordered encoded segments; ``concat`` yields the single image feature."""

    segments: tuple[FeatureSegment, ...]

    @property
    def total_dim(self) -> int:
        return sum(s.dim for s in self.segments)

    def concat(self) -> np.ndarray:
        return np.concatenate([s.vector for s in self.segments])

    def layer_order(self) -> tuple[int, ...]:
        return tuple(s.layer for s in self.segments)


@dataclass(frozen=True)
class LayerSubset:
    """Which spatial layers contribute segments, and in what order.

    Strategies: ``single:L`` (just layer L), ``first:L`` / ``last:L``
    (the first or last L non-dense layers), ``list:a,b,c`` (explicit).
    Resolved indices are always ascending.
    """

    strategy: str
    arg: tuple[int, ...]

    @classmethod
    def parse(cls, text: str) -> "LayerSubset":
        head, _, rest = text.strip().partition(":")
        head = head.lower()
        if head in ("single", "first", "last"):
            return cls(head, (int(rest),))
        if head == "list":
            vals = tuple(int(v) for v in rest.replace(",", " ").split())
            if not vals:
                raise ValueError("empty explicit layer list")
            return cls("list", vals)
        raise ValueError(f"unknown layer subset strategy {text!r}")

    def spec_text(self) -> str:
        return f"{self.strategy}:{','.join(str(v) for v in self.arg)}"

    def resolve(self, descriptor: ArchitectureDescriptor) -> tuple[int, ...]:
        spatial = descriptor.non_dense_indices()
        if self.strategy == "single":
            chosen = self.arg
        elif self.strategy == "first":
            count = self.arg[0]
            if not 1 <= count <= len(spatial):
                raise ValueError(f"first:{count} outside 1..{len(spatial)}")
            chosen = spatial[:count]
        elif self.strategy == "last":
            count = self.arg[0]
            if not 1 <= count <= len(spatial):
                raise ValueError(f"last:{count} outside 1..{len(spatial)}")
            chosen = spatial[-count:]
        else:
            chosen = tuple(sorted(set(self.arg)))
        for l in chosen:
            if l not in spatial:
                raise ValueError(f"layer {l} is not a spatial (non-dense) layer")
        return tuple(sorted(chosen))


def encode_layer(dset: DescriptorSet, model, **fv_kwargs) -> FeatureSegment:
    """Encode one layer's descriptors with its trained aggregator.

    Dispatches on the model type (codebook -> BoW, mixture -> FV) and
    refuses models trained for a different layer.
    """
    if isinstance(model, Codebook):
        if model.layer != dset.layer:
            raise ShapeMismatchError(
                f"codebook for layer {model.layer} applied to layer {dset.layer}"
            )
        return FeatureSegment(dset.layer, "bow", bow_encode(dset, model))
    if isinstance(model, GmmModel):
        if model.layer != dset.layer:
            raise ShapeMismatchError(
                f"mixture for layer {model.layer} applied to layer {dset.layer}"
            )
        return FeatureSegment(dset.layer, "fv", fv_encode(dset, model, **fv_kwargs))
    raise TypeError(f"unsupported aggregator model {type(model).__name__}")


def concat_layers(segments, subset_order) -> HybridFeature:
    """Assemble per-layer segments into one hybrid feature.

    ``segments`` maps layer index to FeatureSegment (or is an iterable of
    segments); ``subset_order`` is the resolved layer order. Missing layers
    raise.
    """
    if isinstance(segments, dict):
        by_layer = segments
    else:
        by_layer = {s.layer: s for s in segments}
    ordered = []
    for l in subset_order:
        if l not in by_layer:
            raise KeyError(f"no encoded feature for layer {l}")
        ordered.append(by_layer[l])
    return HybridFeature(tuple(ordered))


def append_fc(feature: HybridFeature, fc_outputs) -> HybridFeature:
    """Append raw fully-connected outputs as extra unencoded segments.

    ``fc_outputs`` is an iterable of (layer, Tensor3) with 1x1xU tensors;
    segments are appended in ascending layer order. Returns a new feature.
    """
    items = sorted(fc_outputs, key=lambda lt: lt[0])
    extra = []
    for layer, tensor in items:
        if not isinstance(tensor, Tensor3) or tensor.rows != 1 or tensor.cols != 1:
            shape = getattr(tensor, "shape", None)
            raise ShapeMismatchError(
                f"layer {layer}: fully-connected output must be 1x1xU, got {shape}"
            )
        extra.append(FeatureSegment(layer, "raw", tensor.data.astype(np.float64)))
    return HybridFeature(feature.segments + tuple(extra))

"""Conversion manifests: JSON describing how source blobs map to targets.

Schema::

    {
      "format": "caffe-legacy" | "onnx",
      "source_sha256": {"<filename>": "<hex>"},          # optional
      "architecture": ["input 224 224 3", "conv ...", ...],
      "mean": [104.0, 117.0, 123.0],                      # optional
      "mappings": [
        {
          "source": "conv1",              # layer name (caffe) / initializer name (onnx)
          "blob": 0,                      # caffe only: index within the layer's blobs
          "target": "layer1.weights",
          "layout": "conv_oihw" | "dense" | "dense_spatial" | "bias",
          "expected_source_shape": [96, 3, 11, 11],
          "spatial": {"rows": 6, "cols": 6, "channels": 256},   # dense_spatial only
          "target_sha256": "<hex>"        # optional, checked by verify
        }, ...
      ]
    }

Every parameterized layer of the emitted architecture must be mapped
exactly once; layouts describe the source ordering so the converter can
canonicalize into the engine's channel-last layout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

__all__ = ["ConversionManifest", "Mapping", "ManifestError", "load_manifest"]

FORMATS = ("caffe-legacy", "onnx")
LAYOUTS = ("conv_oihw", "dense", "dense_spatial", "bias")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class Mapping:
    source: str
    target: str
    layout: str
    expected_source_shape: tuple[int, ...]
    blob: int = 0
    spatial: dict | None = None
    target_sha256: str | None = None

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise ManifestError(f"mapping {self.target!r}: unknown layout {self.layout!r}")
        if self.layout == "dense_spatial":
            if not self.spatial or set(self.spatial) != {"rows", "cols", "channels"}:
                raise ManifestError(
                    f"mapping {self.target!r}: dense_spatial needs spatial rows/cols/channels"
                )


@dataclass(frozen=True)
class ConversionManifest:
    format: str
    mappings: tuple[Mapping, ...]
    architecture: tuple[str, ...]
    mean: tuple[float, float, float] = (0.0, 0.0, 0.0)
    source_sha256: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ManifestError(
                f"unknown source format {self.format!r}; expected one of {FORMATS}"
            )
        targets = [m.target for m in self.mappings]
        if len(set(targets)) != len(targets):
            dupes = sorted({t for t in targets if targets.count(t) > 1})
            raise ManifestError(f"duplicate mapping targets: {dupes}")
        if not self.mappings:
            raise ManifestError("manifest has no mappings")


def load_manifest(path) -> ConversionManifest:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    try:
        mappings = tuple(
            Mapping(
                source=m["source"],
                target=m["target"],
                layout=m["layout"],
                expected_source_shape=tuple(int(d) for d in m["expected_source_shape"]),
                blob=int(m.get("blob", 0)),
                spatial=m.get("spatial"),
                target_sha256=m.get("target_sha256"),
            )
            for m in raw["mappings"]
        )
        return ConversionManifest(
            format=raw["format"],
            mappings=mappings,
            architecture=tuple(raw.get("architecture", ())),
            mean=tuple(float(v) for v in raw.get("mean", (0.0, 0.0, 0.0))),
            source_sha256=dict(raw.get("source_sha256", {})),
        )
    except KeyError as exc:
        raise ManifestError(f"manifest is missing required key {exc}") from exc

"""Checkpoint conversion and verification.

``convert`` parses the source checkpoint, checks every mapped blob's
shape, canonicalizes layouts into the engine's channel-last conventions,
and emits the container plus the architecture text, the channel-mean file
and a per-tensor report (name, shape, payload sha256). ``verify``
re-reads a container and checks names, shapes and checksums against the
manifest (and optionally a convert report).

Layout canonicalization:

* ``conv_oihw``: source (out, in, kh, kw) -> engine (out, kh, kw, in).
* ``dense``: (out, in), kept (legacy 4-D (1, 1, out, in) is squeezed).
* ``dense_spatial``: like dense, but the input columns were flattened
  channel-major (c, h, w) while the engine flattens (h, w, c); columns
  are permuted so that target column (h*W + w)*C + c takes source column
  (c*H + h)*W + w. Worked example with rows=cols=channels=2: source
  columns [c0h0w0, c0h0w1, c0h1w0, c0h1w1, c1h0w0, ...] become
  [h0w0c0, h0w0c1, h0w1c0, h0w1c1, h1w0c0, ...], i.e. permutation
  (0, 4, 1, 5, 2, 6, 3, 7).
* ``bias``: flattened 1-D.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .caffe_legacy import parse_net
from .container import read_tensors, write_tensors
from .manifest import ConversionManifest, Mapping
from .onnx_format import parse_model

__all__ = ["ConversionError", "convert", "verify", "VerifyReport"]


class ConversionError(ValueError):
    pass


def _payload_sha256(values: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(values, dtype="<f4").tobytes()).hexdigest()


def _file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _load_source(paths: list[Path], manifest: ConversionManifest):
    """Returns source lookup: (mapping) -> ndarray with declared shape."""
    for path in paths:
        want = manifest.source_sha256.get(path.name)
        if want:
            got = _file_sha256(path)
            if got != want:
                raise ConversionError(
                    f"source {path.name}: sha256 {got} does not match manifest {want}"
                )

    if manifest.format == "caffe-legacy":
        if len(paths) != 1:
            raise ConversionError("caffe-legacy conversion takes exactly one source file")
        layers = parse_net(paths[0].read_bytes())

        def lookup(mapping: Mapping) -> np.ndarray:
            if mapping.source not in layers:
                raise ConversionError(f"source layer {mapping.source!r} not found")
            blobs = layers[mapping.source]
            if mapping.blob >= len(blobs):
                raise ConversionError(
                    f"source layer {mapping.source!r} has {len(blobs)} blobs, "
                    f"mapping wants blob {mapping.blob}"
                )
            blob = blobs[mapping.blob]
            return blob.values

        return lookup

    tensors = {}
    for path in paths:
        tensors.update(parse_model(path.read_bytes()))

    def lookup(mapping: Mapping) -> np.ndarray:
        if mapping.source not in tensors:
            raise ConversionError(f"initializer {mapping.source!r} not found")
        return tensors[mapping.source]

    return lookup


def _squeeze_legacy_fc(arr: np.ndarray) -> np.ndarray:
    if arr.ndim == 4 and arr.shape[0] == 1 and arr.shape[1] == 1:
        return arr.reshape(arr.shape[2], arr.shape[3])
    return arr


def _spatial_permutation(rows: int, cols: int, channels: int) -> np.ndarray:
    """Column order mapping HWC target positions to CHW source positions."""
    src = np.arange(channels * rows * cols).reshape(channels, rows, cols)
    return src.transpose(1, 2, 0).reshape(-1)


def canonicalize(values: np.ndarray, mapping: Mapping) -> np.ndarray:
    arr = values
    if mapping.layout in ("dense", "dense_spatial"):
        arr = _squeeze_legacy_fc(arr)
    if tuple(arr.shape) != mapping.expected_source_shape and \
            tuple(values.shape) != mapping.expected_source_shape:
        raise ConversionError(
            f"{mapping.target}: source shape {tuple(values.shape)} does not match "
            f"expected {mapping.expected_source_shape}"
        )
    if mapping.layout == "conv_oihw":
        if arr.ndim != 4:
            raise ConversionError(f"{mapping.target}: conv_oihw needs a rank-4 blob")
        return np.ascontiguousarray(arr.transpose(0, 2, 3, 1))
    if mapping.layout == "bias":
        return arr.reshape(-1)
    if mapping.layout == "dense":
        if arr.ndim != 2:
            raise ConversionError(f"{mapping.target}: dense needs a rank-2 blob")
        return arr
    # dense_spatial
    if arr.ndim != 2:
        raise ConversionError(f"{mapping.target}: dense_spatial needs a rank-2 blob")
    sp = mapping.spatial
    rows, cols, channels = int(sp["rows"]), int(sp["cols"]), int(sp["channels"])
    if arr.shape[1] != rows * cols * channels:
        raise ConversionError(
            f"{mapping.target}: {arr.shape[1]} columns, spatial says "
            f"{rows}*{cols}*{channels} = {rows * cols * channels}"
        )
    return np.ascontiguousarray(arr[:, _spatial_permutation(rows, cols, channels)])


def convert(source_paths, manifest: ConversionManifest, out_dir) -> dict:
    """Emit container + architecture + mean file + report; returns report."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lookup = _load_source([Path(p) for p in source_paths], manifest)

    records = []
    report_rows = []
    for mapping in manifest.mappings:
        canonical = canonicalize(lookup(mapping), mapping)
        records.append((mapping.target, canonical))
        report_rows.append({
            "target": mapping.target,
            "shape": list(canonical.shape),
            "sha256": _payload_sha256(canonical),
        })

    container_path = out_dir / "model.hfw"
    container_path.write_bytes(write_tensors(records))
    arch_path = out_dir / "model.arch"
    arch_path.write_text("\n".join(manifest.architecture) + "\n", encoding="utf-8")
    mean_path = out_dir / "model_mean.txt"
    mean_path.write_text(" ".join(f"{v:.8g}" for v in manifest.mean) + "\n", encoding="utf-8")

    report = {
        "container": container_path.name,
        "architecture": arch_path.name,
        "mean": mean_path.name,
        "tensors": report_rows,
    }
    (out_dir / "report.json").write_text(json.dumps(report, indent=2), encoding="utf-8")
    return report


def expected_target_shape(mapping: Mapping) -> tuple[int, ...]:
    shape = mapping.expected_source_shape
    if mapping.layout == "conv_oihw":
        o, i, kh, kw = shape
        return (o, kh, kw, i)
    if mapping.layout == "bias":
        n = 1
        for d in shape:
            n *= d
        return (n,)
    if shape and shape[0] == 1 and len(shape) == 4 and shape[1] == 1:
        return (shape[2], shape[3])
    return tuple(shape)


@dataclass
class VerifyReport:
    ok: bool
    lines: list[str]

    def __str__(self):
        return "\n".join(self.lines)


def verify(container_path, manifest: ConversionManifest, report_path=None) -> VerifyReport:
    """Check container names, shapes, and payload checksums against the manifest."""
    tensors = read_tensors(Path(container_path).read_bytes())
    checksums = {m.target: m.target_sha256 for m in manifest.mappings}
    if report_path:
        rep = json.loads(Path(report_path).read_text(encoding="utf-8"))
        for row in rep.get("tensors", ()):
            checksums.setdefault(row["target"], row["sha256"])
            if checksums[row["target"]] is None:
                checksums[row["target"]] = row["sha256"]

    lines = []
    ok = True
    missing = [m.target for m in manifest.mappings if m.target not in tensors]
    for name in missing:
        lines.append(f"MISSING  {name}")
        ok = False
    extra = sorted(set(tensors) - {m.target for m in manifest.mappings})
    for name in extra:
        lines.append(f"EXTRA    {name}")
        ok = False
    for mapping in manifest.mappings:
        if mapping.target not in tensors:
            continue
        got = tensors[mapping.target]
        want_shape = expected_target_shape(mapping)
        if tuple(got.shape) != want_shape:
            lines.append(f"SHAPE    {mapping.target}: {tuple(got.shape)} != {want_shape}")
            ok = False
            continue
        want_sum = checksums.get(mapping.target)
        if want_sum:
            got_sum = _payload_sha256(got)
            if got_sum != want_sum:
                lines.append(f"CHECKSUM {mapping.target}: {got_sum[:16]}... != {want_sum[:16]}...")
                ok = False
                continue
        lines.append(f"OK       {mapping.target} {tuple(got.shape)}")
    return VerifyReport(ok=ok, lines=lines)

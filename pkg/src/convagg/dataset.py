"""Dataset manifests and image decoding / preprocessing.

Manifest grammar (UTF-8, one record per line)::

    # full-line comments and blank lines are ignored
    classes: circle,square,triangle        # optional vocabulary declaration
    images/img_000.png<TAB>train<TAB>circle
    images/img_001.png<TAB>test<TAB>circle,square

Fields are tab-separated: relative path, split (train|val|test), then a
comma-separated label set. Declaring ``classes:`` makes unknown labels an
error; without it the vocabulary is inferred from the records.

Preprocessing decodes with Pillow, warp-resizes with an in-house bilinear
kernel (half-pixel centers, no antialiasing), optionally center-crops,
reorders channels and subtracts a per-channel mean. Pixel values stay in
the decoded 0..255 range before mean subtraction. Everything is
deterministic: repeated loads are bitwise identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ManifestError
from .tensor import Tensor3

__all__ = [
    "ManifestRecord",
    "Manifest",
    "parse_manifest",
    "load_manifest",
    "PreprocessSpec",
    "bilinear_resize",
    "load_and_preprocess",
    "read_mean_file",
    "write_mean_file",
]

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class ManifestRecord:
    path: str
    split: str
    labels: frozenset[str]


@dataclass(frozen=True)
class Manifest:
    records: tuple[ManifestRecord, ...]
    classes: tuple[str, ...]

    def split_records(self, split: str) -> tuple[ManifestRecord, ...]:
        return tuple(r for r in self.records if r.split == split)

    def label_matrix(self, split: str) -> np.ndarray:
        """(n_images, n_classes) 0/1 indicators, rows in manifest order."""
        recs = self.split_records(split)
        out = np.zeros((len(recs), len(self.classes)), dtype=np.float32)
        index = {c: i for i, c in enumerate(self.classes)}
        for row, rec in enumerate(recs):
            for lab in rec.labels:
                out[row, index[lab]] = 1.0
        return out

    def summary(self) -> str:
        lines = []
        for split in SPLITS:
            recs = self.split_records(split)
            lines.append(f"{split}: {len(recs)} images")
            for c in self.classes:
                n = sum(1 for r in recs if c in r.labels)
                lines.append(f"  {c}: {n}")
        return "\n".join(lines)


def parse_manifest(text: str) -> Manifest:
    declared: tuple[str, ...] | None = None
    records: list[ManifestRecord] = []
    seen_paths: set[str] = set()
    seen_labels: list[str] = []

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.lower().startswith("classes:"):
            if declared is not None:
                raise ManifestError(f"line {line_no}: duplicate classes declaration")
            names = [c.strip() for c in line.split(":", 1)[1].split(",") if c.strip()]
            if not names:
                raise ManifestError(f"line {line_no}: empty classes declaration")
            declared = tuple(names)
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ManifestError(
                f"line {line_no}: expected 3 tab-separated fields, got {len(parts)}"
            )
        path, split, labels_text = (p.strip() for p in parts)
        if not path:
            raise ManifestError(f"line {line_no}: empty image path")
        if path in seen_paths:
            raise ManifestError(f"line {line_no}: duplicate path {path!r}")
        seen_paths.add(path)
        if split not in SPLITS:
            raise ManifestError(
                f"line {line_no}: split must be one of {'|'.join(SPLITS)}, got {split!r}"
            )
        labels = [l.strip() for l in labels_text.split(",") if l.strip()]
        if not labels:
            raise ManifestError(f"line {line_no}: record has no labels")
        for lab in labels:
            if declared is not None and lab not in declared:
                raise ManifestError(f"line {line_no}: unknown label {lab!r}")
            if lab not in seen_labels:
                seen_labels.append(lab)
        records.append(ManifestRecord(path, split, frozenset(labels)))

    if not records:
        raise ManifestError("no records in manifest")
    classes = declared if declared is not None else tuple(sorted(seen_labels))
    return Manifest(tuple(records), classes)


def load_manifest(path) -> Manifest:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_manifest(fh.read())


@dataclass(frozen=True)
class PreprocessSpec:
    target_rows: int = 224
    target_cols: int = 224
    channel_order: str = "rgb"  # rgb | bgr
    mean: tuple[float, float, float] = (0.0, 0.0, 0.0)
    resize_mode: str = "warp"  # warp | center_crop

    def __post_init__(self):
        if self.channel_order not in ("rgb", "bgr"):
            raise ValueError(f"channel_order must be rgb or bgr, got {self.channel_order!r}")
        if self.resize_mode not in ("warp", "center_crop"):
            raise ValueError(f"resize_mode must be warp or center_crop, got {self.resize_mode!r}")


def bilinear_resize(img: np.ndarray, out_rows: int, out_cols: int) -> np.ndarray:
    """Bilinear resampling with half-pixel-center alignment, no antialias.

    Source coordinate of output pixel i is (i + 0.5) * in/out - 0.5,
    clamped to the valid range; the four neighbors are blended with the
    usual separable weights.
    """
    img = np.asarray(img, dtype=np.float64)
    in_rows, in_cols = img.shape[0], img.shape[1]

    def axis_coords(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1.0)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = src - lo
        return lo, hi, frac

    r0, r1, fr = axis_coords(in_rows, out_rows)
    c0, c1, fc = axis_coords(in_cols, out_cols)
    fr = fr[:, None, None] if img.ndim == 3 else fr[:, None]
    fc = fc[None, :, None] if img.ndim == 3 else fc[None, :]

    top = img[r0][:, c0] * (1 - fc) + img[r0][:, c1] * fc
    bot = img[r1][:, c0] * (1 - fc) + img[r1][:, c1] * fc
    return top * (1 - fr) + bot * fr


def load_and_preprocess(path, spec: PreprocessSpec = PreprocessSpec()) -> Tensor3:
    """Decode one image file into a network-ready Tensor3."""
    try:
        with Image.open(path) as im:
            img = np.asarray(im.convert("RGB"), dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise IOError(f"cannot decode image {path!r}: {exc}") from exc

    tr, tc = spec.target_rows, spec.target_cols
    if spec.resize_mode == "warp":
        out = bilinear_resize(img, tr, tc)
    else:
        # scale the shorter side to the target, then crop the center
        scale = max(tr / img.shape[0], tc / img.shape[1])
        mid_r = max(tr, int(round(img.shape[0] * scale)))
        mid_c = max(tc, int(round(img.shape[1] * scale)))
        mid = bilinear_resize(img, mid_r, mid_c)
        r_off = (mid_r - tr) // 2
        c_off = (mid_c - tc) // 2
        out = mid[r_off:r_off + tr, c_off:c_off + tc]

    if spec.channel_order == "bgr":
        out = out[:, :, ::-1]
    out = out - np.asarray(spec.mean, dtype=np.float64)
    return Tensor3(out.astype(np.float32))


def read_mean_file(path) -> tuple[float, float, float]:
    """Per-channel mean file: three whitespace-separated floats."""
    vals = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                vals.extend(float(v) for v in line.split())
    if len(vals) != 3:
        raise ValueError(f"mean file {path!r} must hold exactly 3 values, got {len(vals)}")
    return tuple(vals)


def write_mean_file(path, mean) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(" ".join(f"{float(v):.8g}" for v in mean) + "\n")

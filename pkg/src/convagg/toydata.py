"""Bundled synthetic dataset: colored shapes on noisy backgrounds.

Generates a small three-class image set (red circles, green squares, blue
triangles), a manifest with train/val/test splits, a random-weight 4-layer
architecture and its weight container, and a zero mean file. This is the
fixture behind the end-to-end smoke test and the README walkthrough;
everything is deterministic for a fixed seed.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .container import TensorRecord, write_container_file
from .dataset import write_mean_file

__all__ = ["TOY_CLASSES", "TOY_ARCH_TEXT", "generate_toy_dataset"]

TOY_CLASSES = ("circle", "square", "triangle")

TOY_ARCH_TEXT = """\
# 4-layer random-weight toy network (descriptor source for smoke tests)
input 224 224 3
conv n=11 stride=4 pad=2 out=8 groups=1 relu=1
pool size=3 stride=2
conv n=5 stride=2 pad=2 out=16 groups=1 relu=1
pool size=3 stride=2
"""

_COLORS = {
    "circle": (205, 40, 40),
    "square": (40, 205, 40),
    "triangle": (40, 40, 205),
}


def _draw_image(cls: str, rng: np.random.Generator, size: int = 224) -> Image.Image:
    base = int(rng.integers(20, 60))
    noise = rng.normal(0.0, 8.0, size=(size, size, 3))
    bg = np.clip(base + noise, 0, 255).astype(np.uint8)
    im = Image.fromarray(bg, "RGB")
    draw = ImageDraw.Draw(im)

    jitter = rng.integers(-25, 26, size=3)
    color = tuple(int(np.clip(c + j, 0, 255)) for c, j in zip(_COLORS[cls], jitter))
    half = int(rng.integers(40, 80))
    cx = int(rng.integers(half + 5, size - half - 5))
    cy = int(rng.integers(half + 5, size - half - 5))
    box = (cx - half, cy - half, cx + half, cy + half)
    if cls == "circle":
        draw.ellipse(box, fill=color)
    elif cls == "square":
        draw.rectangle(box, fill=color)
    else:
        draw.polygon(
            [(cx, cy - half), (cx - half, cy + half), (cx + half, cy + half)],
            fill=color,
        )
    return im


def _toy_weights(seed: int) -> list[TensorRecord]:
    rng = np.random.default_rng(seed + 17)
    w1 = rng.normal(0.0, 0.05, size=(8, 11, 11, 3)).astype(np.float32)
    b1 = rng.normal(0.0, 0.01, size=8).astype(np.float32)
    w3 = rng.normal(0.0, 0.05, size=(16, 5, 5, 8)).astype(np.float32)
    b3 = rng.normal(0.0, 0.01, size=16).astype(np.float32)
    return [
        TensorRecord("layer1.weights", w1),
        TensorRecord("layer1.biases", b1),
        TensorRecord("layer3.weights", w3),
        TensorRecord("layer3.biases", b3),
    ]


def generate_toy_dataset(root, n_images: int = 60, seed: int = 0) -> dict:
    """Write images, manifest, architecture, weights and mean file under root.

    Returns a dict of the created paths. Splits are per class:
    half train, a fifth val, the rest test (30/12/18 at the default 60).
    """
    root = Path(root)
    img_dir = root / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    per_class = n_images // len(TOY_CLASSES)
    n_train = per_class // 2
    n_val = per_class // 5
    lines = ["# synthetic shapes dataset", "classes: " + ",".join(TOY_CLASSES)]
    for cls_i, cls in enumerate(TOY_CLASSES):
        for k in range(per_class):
            im = _draw_image(cls, rng)
            name = f"images/{cls}_{k:03d}.png"
            im.save(root / name)
            split = "train" if k < n_train else ("val" if k < n_train + n_val else "test")
            lines.append(f"{name}\t{split}\t{cls}")

    manifest_path = root / "manifest.tsv"
    manifest_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    arch_path = root / "toy.arch"
    arch_path.write_text(TOY_ARCH_TEXT, encoding="utf-8")

    weights_path = root / "toy_weights.hfw"
    write_container_file(weights_path, _toy_weights(seed))

    mean_path = root / "toy_mean.txt"
    write_mean_file(mean_path, (0.0, 0.0, 0.0))

    return {
        "root": root,
        "manifest": manifest_path,
        "arch": arch_path,
        "weights": weights_path,
        "mean": mean_path,
    }

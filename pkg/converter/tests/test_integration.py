"""End-to-end: converted artifacts drive the feature-extraction engine.

The engine is exercised strictly through its external interfaces: the
container/architecture/mean files written by convert, and the ``convagg``
command line invoked as a subprocess. No engine imports here.
"""

import json
import os
import shutil
import subprocess
import sys

import numpy as np
import pytest

from hfwconvert.cli import main as cli_main
from hfwconvert.manifest import ConversionManifest, Mapping

from protohelpers import onnx_model, onnx_tensor

ARCH = (
    "# converted toy network",
    "input 64 64 3",
    "conv n=5 stride=2 pad=2 out=6 groups=1 relu=1",
    "pool size=3 stride=2",
    "conv n=3 stride=1 pad=1 out=8 groups=1 relu=1",
    "pool size=3 stride=2",
)


def build_source(tmp_path, seed=0):
    rng = np.random.default_rng(seed)
    w1 = rng.normal(0, 0.1, size=(6, 3, 5, 5)).astype(np.float32)
    b1 = rng.normal(0, 0.01, size=6).astype(np.float32)
    w3 = rng.normal(0, 0.1, size=(8, 6, 3, 3)).astype(np.float32)
    b3 = rng.normal(0, 0.01, size=8).astype(np.float32)
    model = onnx_model([
        onnx_tensor("features.0.weight", w1),
        onnx_tensor("features.0.bias", b1),
        onnx_tensor("features.2.weight", w3),
        onnx_tensor("features.2.bias", b3),
    ])
    src = tmp_path / "toy.onnx"
    src.write_bytes(model)
    manifest = {
        "format": "onnx",
        "architecture": list(ARCH),
        "mean": [100.0, 100.0, 100.0],
        "mappings": [
            {"source": "features.0.weight", "target": "layer1.weights",
             "layout": "conv_oihw", "expected_source_shape": [6, 3, 5, 5]},
            {"source": "features.0.bias", "target": "layer1.biases",
             "layout": "bias", "expected_source_shape": [6]},
            {"source": "features.2.weight", "target": "layer3.weights",
             "layout": "conv_oihw", "expected_source_shape": [8, 6, 3, 3]},
            {"source": "features.2.bias", "target": "layer3.biases",
             "layout": "bias", "expected_source_shape": [8]},
        ],
    }
    map_path = tmp_path / "map.json"
    map_path.write_text(json.dumps(manifest, indent=2))
    return src, map_path


def test_cli_convert_then_verify(tmp_path, capsys):
    src, map_path = build_source(tmp_path)
    out = tmp_path / "out"
    assert cli_main(["convert", "--src", str(src), "--map", str(map_path),
                     "--out", str(out)]) == 0
    assert cli_main(["verify", "--container", str(out / "model.hfw"),
                     "--map", str(map_path),
                     "--report", str(out / "report.json")]) == 0
    printed = capsys.readouterr().out
    assert "PASS" in printed


def test_cli_verify_fails_on_wrong_manifest(tmp_path, capsys):
    src, map_path = build_source(tmp_path)
    out = tmp_path / "out"
    cli_main(["convert", "--src", str(src), "--map", str(map_path), "--out", str(out)])
    bad = json.loads(map_path.read_text())
    bad["mappings"][0]["target"] = "layer9.weights"
    bad_path = tmp_path / "bad.json"
    bad_path.write_text(json.dumps(bad))
    assert cli_main(["verify", "--container", str(out / "model.hfw"),
                     "--map", str(bad_path)]) == 1
    assert "MISSING  layer9.weights" in capsys.readouterr().out


def _engine_available() -> bool:
    try:
        import importlib.util

        return importlib.util.find_spec("convagg.cli") is not None
    except ImportError:
        return False


@pytest.mark.skipif(not _engine_available(),
                    reason="convagg CLI not installed in this environment")
def test_converted_model_binds_and_extracts(tmp_path):
    pil = pytest.importorskip("PIL.Image")
    src, map_path = build_source(tmp_path)
    out = tmp_path / "out"
    assert cli_main(["convert", "--src", str(src), "--map", str(map_path),
                     "--out", str(out)]) == 0

    data = tmp_path / "data"
    (data / "images").mkdir(parents=True)
    rng = np.random.default_rng(1)
    lines = ["classes: a,b"]
    for i in range(6):
        arr = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
        name = f"images/img_{i}.png"
        pil.fromarray(arr, "RGB").save(data / name)
        split = ("train", "val", "test")[i % 3]
        lines.append(f"{name}\t{split}\t{'a' if i % 2 else 'b'}")
    (data / "manifest.tsv").write_text("\n".join(lines) + "\n")

    proc = subprocess.run(
        [sys.executable, "-m", "convagg.cli", "extract",
         "--manifest", str(data / "manifest.tsv"),
         "--arch", str(out / "model.arch"),
         "--weights", str(out / "model.hfw"),
         "--mean-file", str(out / "model_mean.txt"),
         "--cache-dir", str(tmp_path / "cache"),
         "--layers", "last:2", "--codebook-size", "2"],
        capture_output=True, text=True, timeout=600,
    )
    assert proc.returncode == 0, proc.stderr
    assert "stage=extract status=computed" in proc.stdout


REAL_ENV = "HFWCONVERT_REAL_CHECKPOINT"


@pytest.mark.skipif(REAL_ENV not in os.environ, reason=(
    "optional real-checkpoint cross-check; set HFWCONVERT_REAL_CHECKPOINT to a "
    "downloaded checkpoint and HFWCONVERT_REAL_MANIFEST to its mapping manifest"
))
def test_real_checkpoint_optional(tmp_path):
    src = os.environ[REAL_ENV]
    map_path = os.environ["HFWCONVERT_REAL_MANIFEST"]
    out = tmp_path / "real"
    assert cli_main(["convert", "--src", src, "--map", map_path, "--out", str(out)]) == 0
    assert cli_main(["verify", "--container", str(out / "model.hfw"),
                     "--map", map_path, "--report", str(out / "report.json")]) == 0

"""Conversion, layout canonicalization, verify round-trips."""

import json

import numpy as np
import pytest

from hfwconvert.container import read_tensors, write_tensors
from hfwconvert.convert import (
    ConversionError,
    canonicalize,
    convert,
    expected_target_shape,
    verify,
)
from hfwconvert.manifest import ConversionManifest, ManifestError, Mapping, load_manifest

from protohelpers import caffe_blob, caffe_net, caffe_v1_layer, onnx_model, onnx_tensor

ARCH = (
    "input 8 8 3",
    "conv n=3 stride=1 pad=1 out=4 groups=1 relu=1",
    "pool size=2 stride=2",
    "dense out=5 relu=0",
)


def small_manifest(**kw):
    base = dict(
        format="caffe-legacy",
        architecture=ARCH,
        mean=(1.0, 2.0, 3.0),
        mappings=(
            Mapping("conv1", "layer1.weights", "conv_oihw", (4, 3, 3, 3), blob=0),
            Mapping("conv1", "layer1.biases", "bias", (4,), blob=1),
            Mapping("fc", "layer3.weights", "dense_spatial", (5, 48), blob=0,
                    spatial={"rows": 4, "cols": 4, "channels": 3}),
            Mapping("fc", "layer3.biases", "bias", (5,), blob=1),
        ),
    )
    base.update(kw)
    return ConversionManifest(**base)


@pytest.fixture
def caffe_source(tmp_path):
    rng = np.random.default_rng(0)
    w1 = rng.normal(size=(4, 3, 3, 3)).astype(np.float32)
    b1 = rng.normal(size=4).astype(np.float32)
    wfc = rng.normal(size=(5, 48)).astype(np.float32)
    bfc = rng.normal(size=5).astype(np.float32)
    net = caffe_net(v1_layers=[
        caffe_v1_layer("conv1", [caffe_blob(w1), caffe_blob(b1)]),
        caffe_v1_layer("fc", [caffe_blob(wfc), caffe_blob(bfc)]),
    ])
    path = tmp_path / "net.binary"
    path.write_bytes(net)
    return path, dict(w1=w1, b1=b1, wfc=wfc, bfc=bfc)


class TestLayouts:
    def test_conv_oihw_transposition_worked_example(self):
        # value encodes (o, i, h, w) as o*1000 + i*100 + h*10 + w
        o, i, h, w = 2, 3, 2, 2
        src = np.zeros((o, i, h, w), np.float32)
        for oo in range(o):
            for ii in range(i):
                for hh in range(h):
                    for ww in range(w):
                        src[oo, ii, hh, ww] = oo * 1000 + ii * 100 + hh * 10 + ww
        m = Mapping("s", "t", "conv_oihw", (o, i, h, w))
        out = canonicalize(src, m)
        assert out.shape == (o, h, w, i)
        assert out[1, 0, 1, 2] == 1 * 1000 + 2 * 100 + 0 * 10 + 1

    def test_dense_spatial_permutation_worked_example(self):
        # source columns flattened channel-major (c,h,w); engine wants (h,w,c)
        rows = cols = channels = 2
        src = np.arange(8, dtype=np.float32)[None, :]  # value == source column
        m = Mapping("s", "t", "dense_spatial", (1, 8),
                    spatial={"rows": rows, "cols": cols, "channels": channels})
        out = canonicalize(src, m)
        np.testing.assert_array_equal(out[0], [0, 4, 1, 5, 2, 6, 3, 7])

    def test_legacy_fc_blob_squeezed(self):
        src = np.arange(6, dtype=np.float32).reshape(1, 1, 2, 3)
        m = Mapping("s", "t", "dense", (2, 3))
        out = canonicalize(src, m)
        assert out.shape == (2, 3)

    def test_shape_mismatch_names_target(self):
        m = Mapping("s", "layer1.weights", "conv_oihw", (4, 3, 3, 3))
        with pytest.raises(ConversionError, match="layer1.weights"):
            canonicalize(np.zeros((4, 3, 5, 5), np.float32), m)


class TestConvert:
    def test_single_blob_mapping(self, tmp_path):
        w = np.arange(9, dtype=np.float32).reshape(1, 1, 3, 3)
        net = caffe_net(v1_layers=[caffe_v1_layer("conv1", [caffe_blob(w)])])
        src = tmp_path / "one.binary"
        src.write_bytes(net)
        manifest = ConversionManifest(
            format="caffe-legacy", architecture=("input 3 3 1",),
            mappings=(Mapping("conv1", "layer1.weights", "conv_oihw", (1, 1, 3, 3)),),
        )
        report = convert([src], manifest, tmp_path / "out")
        tensors = read_tensors((tmp_path / "out" / "model.hfw").read_bytes())
        assert tuple(tensors["layer1.weights"].shape) == (1, 3, 3, 1)
        np.testing.assert_array_equal(
            tensors["layer1.weights"].reshape(3, 3), w.reshape(3, 3)
        )
        assert report["tensors"][0]["target"] == "layer1.weights"

    def test_full_conversion_lossless(self, caffe_source, tmp_path):
        src, arrays = caffe_source
        manifest = small_manifest()
        convert([src], manifest, tmp_path / "out")
        tensors = read_tensors((tmp_path / "out" / "model.hfw").read_bytes())

        got_w1 = tensors["layer1.weights"].transpose(0, 3, 1, 2)  # invert OIHW->OHWI
        assert got_w1.astype("<f4").tobytes() == arrays["w1"].astype("<f4").tobytes()

        perm = np.arange(48).reshape(3, 4, 4).transpose(1, 2, 0).reshape(-1)
        inverse = np.argsort(perm)
        got_fc = tensors["layer3.weights"][:, inverse]
        assert got_fc.astype("<f4").tobytes() == arrays["wfc"].astype("<f4").tobytes()

        arch = (tmp_path / "out" / "model.arch").read_text().strip().splitlines()
        assert tuple(arch) == ARCH
        mean = (tmp_path / "out" / "model_mean.txt").read_text().split()
        assert [float(v) for v in mean] == [1.0, 2.0, 3.0]

    def test_missing_blob_named(self, caffe_source, tmp_path):
        src, _ = caffe_source
        manifest = small_manifest(mappings=(
            Mapping("conv9", "layer1.weights", "conv_oihw", (4, 3, 3, 3)),
        ))
        with pytest.raises(ConversionError, match="conv9"):
            convert([src], manifest, tmp_path / "out")

    def test_source_checksum_enforced(self, caffe_source, tmp_path):
        src, _ = caffe_source
        manifest = small_manifest(source_sha256={src.name: "0" * 64})
        with pytest.raises(ConversionError, match="sha256"):
            convert([src], manifest, tmp_path / "out")

    def test_onnx_path(self, tmp_path):
        rng = np.random.default_rng(1)
        w = rng.normal(size=(4, 3, 3, 3)).astype(np.float32)
        b = rng.normal(size=4).astype(np.float32)
        model = onnx_model([onnx_tensor("w", w), onnx_tensor("b", b, raw=False)])
        src = tmp_path / "model.onnx"
        src.write_bytes(model)
        manifest = ConversionManifest(
            format="onnx", architecture=("input 8 8 3",),
            mappings=(
                Mapping("w", "layer1.weights", "conv_oihw", (4, 3, 3, 3)),
                Mapping("b", "layer1.biases", "bias", (4,)),
            ),
        )
        convert([src], manifest, tmp_path / "out")
        tensors = read_tensors((tmp_path / "out" / "model.hfw").read_bytes())
        assert tensors["layer1.weights"].shape == (4, 3, 3, 1 * 3)
        np.testing.assert_array_equal(tensors["layer1.biases"], b)


class TestVerify:
    def test_convert_then_verify_passes(self, caffe_source, tmp_path):
        src, _ = caffe_source
        manifest = small_manifest()
        convert([src], manifest, tmp_path / "out")
        result = verify(tmp_path / "out" / "model.hfw", manifest,
                        report_path=tmp_path / "out" / "report.json")
        assert result.ok, str(result)
        assert all(line.startswith("OK") for line in result.lines)

    def test_renamed_tensor_fails_naming_it(self, caffe_source, tmp_path):
        src, _ = caffe_source
        manifest = small_manifest()
        convert([src], manifest, tmp_path / "out")
        tensors = read_tensors((tmp_path / "out" / "model.hfw").read_bytes())
        tensors["layer1.wrongname"] = tensors.pop("layer1.weights")
        (tmp_path / "out" / "model.hfw").write_bytes(
            write_tensors(sorted(tensors.items()))
        )
        result = verify(tmp_path / "out" / "model.hfw", manifest)
        assert not result.ok
        assert any("MISSING  layer1.weights" in l for l in result.lines)
        assert any("EXTRA    layer1.wrongname" in l for l in result.lines)

    def test_empty_container_lists_all_missing(self, tmp_path):
        manifest = small_manifest()
        empty = tmp_path / "empty.hfw"
        empty.write_bytes(write_tensors([]))
        result = verify(empty, manifest)
        assert not result.ok
        missing = [l for l in result.lines if l.startswith("MISSING")]
        assert len(missing) == len(manifest.mappings)

    def test_checksum_mismatch_detected(self, caffe_source, tmp_path):
        src, _ = caffe_source
        manifest = small_manifest()
        convert([src], manifest, tmp_path / "out")
        tensors = read_tensors((tmp_path / "out" / "model.hfw").read_bytes())
        tensors["layer1.biases"] = tensors["layer1.biases"] + 1.0
        (tmp_path / "out" / "model.hfw").write_bytes(write_tensors(list(tensors.items())))
        result = verify(tmp_path / "out" / "model.hfw", manifest,
                        report_path=tmp_path / "out" / "report.json")
        assert not result.ok
        assert any("CHECKSUM layer1.biases" in l for l in result.lines)


class TestManifest:
    def test_load_and_validate(self, tmp_path):
        payload = {
            "format": "onnx",
            "architecture": ["input 4 4 1"],
            "mappings": [{"source": "w", "target": "layer1.weights",
                          "layout": "conv_oihw", "expected_source_shape": [1, 1, 3, 3]}],
        }
        path = tmp_path / "map.json"
        path.write_text(json.dumps(payload))
        manifest = load_manifest(path)
        assert manifest.format == "onnx"
        assert manifest.mappings[0].target == "layer1.weights"

    def test_unknown_format_rejected(self):
        with pytest.raises(ManifestError, match="unknown source format"):
            small_manifest(format="torch-pickle")

    def test_duplicate_targets_rejected(self):
        with pytest.raises(ManifestError, match="duplicate"):
            small_manifest(mappings=(
                Mapping("a", "layer1.weights", "bias", (4,)),
                Mapping("b", "layer1.weights", "bias", (4,)),
            ))

    def test_expected_target_shapes(self):
        assert expected_target_shape(Mapping("s", "t", "conv_oihw", (96, 3, 11, 11))) \
            == (96, 11, 11, 3)
        assert expected_target_shape(Mapping("s", "t", "bias", (1, 1, 1, 8))) == (8,)
        assert expected_target_shape(Mapping("s", "t", "dense", (1, 1, 5, 48))) == (5, 48)

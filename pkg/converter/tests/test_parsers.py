"""Wire reader and the two checkpoint parsers against synthetic fixtures."""

import numpy as np
import pytest

from hfwconvert.caffe_legacy import parse_net
from hfwconvert.onnx_format import parse_model
from hfwconvert.wire import WireError, iter_fields, packed_int64, read_varint

from protohelpers import (
    caffe_blob,
    caffe_net,
    caffe_new_layer,
    caffe_v1_layer,
    field_bytes,
    field_varint,
    onnx_model,
    onnx_tensor,
    varint,
)


class TestWire:
    def test_varint_round_trip(self):
        for value in (0, 1, 127, 128, 300, 2 ** 32, 2 ** 60):
            got, pos = read_varint(varint(value), 0)
            assert got == value and pos == len(varint(value))

    def test_truncated_varint(self):
        with pytest.raises(WireError):
            read_varint(b"\x80", 0)

    def test_iter_fields_mixed(self):
        blob = field_varint(3, 42) + field_bytes(7, b"hi")
        fields = list(iter_fields(blob))
        assert fields[0] == (3, 0, 42)
        assert fields[1] == (7, 2, b"hi")

    def test_packed_int64(self):
        assert packed_int64(varint(5) + varint(300)) == [5, 300]


class TestCaffeParser:
    def test_v1_layer_with_shape_message(self):
        w = np.arange(24, dtype=np.float32).reshape(2, 3, 2, 2)
        b = np.array([0.5, -0.5], np.float32)
        net = caffe_net(v1_layers=[caffe_v1_layer("conv1", [caffe_blob(w), caffe_blob(b)])])
        layers = parse_net(net)
        assert list(layers) == ["conv1"]
        np.testing.assert_array_equal(layers["conv1"][0].values, w)
        np.testing.assert_array_equal(layers["conv1"][1].values, b)

    def test_legacy_dims_and_unpacked_floats(self):
        w = np.linspace(-1, 1, 8, dtype=np.float32).reshape(1, 2, 2, 2)
        net = caffe_net(v1_layers=[caffe_v1_layer("fc", [caffe_blob(w, style="legacy"),
                                                         caffe_blob(w, style="unpacked")])])
        layers = parse_net(net)
        np.testing.assert_array_equal(layers["fc"][0].values, w)
        np.testing.assert_array_equal(layers["fc"][1].values, w)

    def test_new_style_layer_field(self):
        w = np.ones((3, 2), np.float32)
        net = caffe_net(new_layers=[caffe_new_layer("ip1", [caffe_blob(w)])])
        layers = parse_net(net)
        assert layers["ip1"][0].shape == (3, 2)

    def test_count_mismatch_rejected(self):
        from protohelpers import field_bytes as fb, packed_floats, packed_int64

        bad_blob = fb(7, fb(1, packed_int64((3, 3)))) + fb(5, packed_floats([1.0, 2.0]))
        net = caffe_net(v1_layers=[caffe_v1_layer("x", [bad_blob])])
        with pytest.raises(WireError, match="carries"):
            parse_net(net)


class TestOnnxParser:
    def test_raw_and_float_data(self):
        w = np.random.default_rng(0).normal(size=(4, 3, 2, 2)).astype(np.float32)
        model = onnx_model([
            onnx_tensor("conv.w", w, raw=True),
            onnx_tensor("conv.b", w[:, 0, 0, 0], raw=False),
        ])
        tensors = parse_model(model)
        np.testing.assert_array_equal(tensors["conv.w"], w)
        assert tensors["conv.w"].view(np.uint32).tobytes() == w.view(np.uint32).tobytes()
        np.testing.assert_array_equal(tensors["conv.b"], w[:, 0, 0, 0])

    def test_non_float_dtype_rejected(self):
        from protohelpers import field_bytes as fb, field_varint as fv, packed_int64

        t = fb(1, packed_int64((2,))) + fv(2, 7) + fb(8, b"q") + fb(9, b"\x00" * 16)
        with pytest.raises(WireError, match="float32"):
            parse_model(onnx_model([t]))

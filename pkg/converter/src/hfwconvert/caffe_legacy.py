"""Reader for the legacy conv-net checkpoint format (binary protobuf).

Understands the subset needed to pull named parameter blobs out of a
serialized network: both the old ``layers`` (field 2, V1 layer messages)
and newer ``layer`` (field 100) lists, blobs with either legacy
num/channels/height/width dims or an explicit shape message, and packed
or unpacked float data.
"""

from __future__ import annotations

import struct

import numpy as np

from .wire import BYTES, FIXED32, VARINT, WireError, iter_fields, packed_floats, packed_int64

__all__ = ["parse_net", "SourceBlob"]


class SourceBlob:
    def __init__(self, values: np.ndarray, shape: tuple[int, ...]):
        self.values = values.astype(np.float32).reshape(shape)
        self.shape = tuple(shape)


def _parse_blob(buf: bytes) -> SourceBlob:
    legacy = {1: 0, 2: 0, 3: 0, 4: 0}
    shape: tuple[int, ...] | None = None
    data: list[float] = []
    for field, wtype, value in iter_fields(buf):
        if field in legacy and wtype == VARINT:
            legacy[field] = int(value)
        elif field == 5:  # repeated float data
            if wtype == BYTES:
                data.extend(packed_floats(value))
            elif wtype == FIXED32:
                data.append(struct.unpack("<f", value)[0])
        elif field == 7 and wtype == BYTES:  # BlobShape { repeated int64 dim = 1 }
            dims: list[int] = []
            for sfield, swtype, svalue in iter_fields(value):
                if sfield == 1:
                    if swtype == BYTES:
                        dims.extend(packed_int64(svalue))
                    elif swtype == VARINT:
                        dims.append(int(svalue))
            shape = tuple(dims)
    if shape is None:
        legacy_dims = (legacy[1], legacy[2], legacy[3], legacy[4])
        shape = tuple(d for d in legacy_dims) if any(legacy_dims) else (len(data),)
        if any(legacy_dims):
            shape = legacy_dims
    values = np.asarray(data, dtype=np.float32)
    expected = int(np.prod(shape)) if shape else 0
    if values.size != expected:
        raise WireError(
            f"blob declares shape {shape} ({expected} values) but carries {values.size}"
        )
    return SourceBlob(values, shape)


def _parse_layer(buf: bytes, name_field: int, blobs_field: int):
    name = None
    blobs: list[SourceBlob] = []
    for field, wtype, value in iter_fields(buf):
        if field == name_field and wtype == BYTES:
            name = value.decode("utf-8")
        elif field == blobs_field and wtype == BYTES:
            blobs.append(_parse_blob(value))
    return name, blobs


def parse_net(data: bytes) -> dict[str, list[SourceBlob]]:
    """Map layer name to its parameter blobs (weights first, then biases)."""
    out: dict[str, list[SourceBlob]] = {}
    for field, wtype, value in iter_fields(data):
        if wtype != BYTES:
            continue
        if field == 2:  # V1LayerParameter: name=4, blobs=6
            name, blobs = _parse_layer(value, name_field=4, blobs_field=6)
        elif field == 100:  # LayerParameter: name=1, blobs=7
            name, blobs = _parse_layer(value, name_field=1, blobs_field=7)
        else:
            continue
        if name and blobs:
            out.setdefault(name, []).extend(blobs)
    return out

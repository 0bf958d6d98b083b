"""Reader for the open neural-network exchange checkpoint format.

Walks ModelProto -> GraphProto -> initializer TensorProto entries and
returns float tensors by name. Handles dims as packed or repeated
varints, and values as float_data or little-endian raw_data. Only
float32 tensors are of interest; other dtypes raise.
"""

from __future__ import annotations

import numpy as np

from .wire import BYTES, VARINT, WireError, iter_fields, packed_floats, packed_int64

__all__ = ["parse_model"]

_FLOAT = 1  # TensorProto.DataType.FLOAT


def _parse_tensor(buf: bytes):
    dims: list[int] = []
    dtype = _FLOAT
    name = None
    floats: list[float] = []
    raw = None
    for field, wtype, value in iter_fields(buf):
        if field == 1:  # dims
            if wtype == BYTES:
                dims.extend(packed_int64(value))
            elif wtype == VARINT:
                dims.append(int(value))
        elif field == 2 and wtype == VARINT:
            dtype = int(value)
        elif field == 4 and wtype == BYTES:
            floats.extend(packed_floats(value))
        elif field == 8 and wtype == BYTES:
            name = value.decode("utf-8")
        elif field == 9 and wtype == BYTES:
            raw = value
    if name is None:
        raise WireError("initializer tensor without a name")
    if dtype != _FLOAT:
        raise WireError(f"initializer {name!r} has data_type {dtype}, only float32 is supported")
    if raw is not None:
        values = np.frombuffer(raw, dtype="<f4").astype(np.float32)
    else:
        values = np.asarray(floats, dtype=np.float32)
    shape = tuple(dims) if dims else (values.size,)
    if values.size != int(np.prod(shape)):
        raise WireError(
            f"initializer {name!r} declares {shape} but carries {values.size} values"
        )
    return name, values.reshape(shape)


def parse_model(data: bytes) -> dict[str, np.ndarray]:
    """Map initializer name to its float32 tensor."""
    out: dict[str, np.ndarray] = {}
    for field, wtype, value in iter_fields(data):
        if field == 7 and wtype == BYTES:  # graph
            for gfield, gwtype, gvalue in iter_fields(value):
                if gfield == 5 and gwtype == BYTES:  # initializer
                    name, tensor = _parse_tensor(gvalue)
                    out[name] = tensor
    return out

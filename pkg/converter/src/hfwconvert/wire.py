"""Minimal protobuf wire-format reader.

Just enough of the encoding to walk checkpoint files: varints, the four
wire types, packed repeated scalars. No schema compilation; callers match
field numbers themselves.
"""

from __future__ import annotations

import struct

__all__ = ["WireError", "read_varint", "iter_fields", "packed_floats",
           "packed_int64", "zigzag"]

VARINT, FIXED64, BYTES, FIXED32 = 0, 1, 2, 5


class WireError(ValueError):
    """Malformed protobuf wire data."""


def read_varint(buf: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(buf):
            raise WireError("truncated varint")
        byte = buf[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7
        if shift > 70:
            raise WireError("varint too long")


def zigzag(value: int) -> int:
    return (value >> 1) ^ -(value & 1)


def iter_fields(buf: bytes):
    """Yield (field_number, wire_type, value) triples.

    value is an int for VARINT, raw bytes for BYTES, and 8/4 raw bytes for
    the fixed types.
    """
    pos = 0
    while pos < len(buf):
        key, pos = read_varint(buf, pos)
        field, wtype = key >> 3, key & 0x7
        if wtype == VARINT:
            value, pos = read_varint(buf, pos)
        elif wtype == FIXED64:
            if pos + 8 > len(buf):
                raise WireError("truncated fixed64")
            value = buf[pos:pos + 8]
            pos += 8
        elif wtype == BYTES:
            length, pos = read_varint(buf, pos)
            if pos + length > len(buf):
                raise WireError("truncated length-delimited field")
            value = buf[pos:pos + length]
            pos += length
        elif wtype == FIXED32:
            if pos + 4 > len(buf):
                raise WireError("truncated fixed32")
            value = buf[pos:pos + 4]
            pos += 4
        else:
            raise WireError(f"unsupported wire type {wtype} for field {field}")
        yield field, wtype, value


def packed_floats(data: bytes) -> list[float]:
    if len(data) % 4:
        raise WireError("packed float payload not a multiple of 4 bytes")
    return list(struct.unpack(f"<{len(data) // 4}f", data))


def packed_int64(data: bytes) -> list[int]:
    out = []
    pos = 0
    while pos < len(data):
        value, pos = read_varint(data, pos)
        out.append(value)
    return out

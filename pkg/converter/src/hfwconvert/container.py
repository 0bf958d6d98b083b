"""Writer/reader for the HFW1 tensor container byte format.

The format is the engine's public interchange interface, implemented here
independently so this tool stays standalone. Layout (little-endian):
magic "HFW1", u32 version (1), u32 record count, then per record
name_len u32 + UTF-8 name, rank u32, dims u64 each, float32 values;
trailing CRC-32 over everything after the magic.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

__all__ = ["ContainerError", "write_tensors", "read_tensors"]

MAGIC = b"HFW1"
VERSION = 1


class ContainerError(ValueError):
    pass


def write_tensors(records: list[tuple[str, np.ndarray]]) -> bytes:
    seen = set()
    body = bytearray(struct.pack("<II", VERSION, len(records)))
    for name, values in records:
        if name in seen:
            raise ContainerError(f"duplicate tensor name {name!r}")
        seen.add(name)
        arr = np.ascontiguousarray(values, dtype="<f4")
        encoded = name.encode("utf-8")
        body += struct.pack("<I", len(encoded))
        body += encoded
        body += struct.pack("<I", arr.ndim)
        for dim in arr.shape:
            body += struct.pack("<Q", dim)
        body += arr.tobytes()
    crc = zlib.crc32(bytes(body)) & 0xFFFFFFFF
    return MAGIC + bytes(body) + struct.pack("<I", crc)


def read_tensors(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:4] != MAGIC:
        raise ContainerError("bad magic: not a HFW1 container")
    if len(blob) < 12:
        raise ContainerError("truncated container")
    stored = struct.unpack("<I", blob[-4:])[0]
    if stored != zlib.crc32(blob[4:-4]) & 0xFFFFFFFF:
        raise ContainerError("checksum mismatch")
    pos = 4
    version, count = struct.unpack_from("<II", blob, pos)
    pos += 8
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}Q", blob, pos)
        pos += 8 * rank
        n_values = 1
        for dim in dims:
            n_values *= dim
        values = np.frombuffer(blob, dtype="<f4", count=n_values, offset=pos)
        pos += 4 * n_values
        out[name] = values.reshape(dims).copy()
    if pos != len(blob) - 4:
        raise ContainerError("unconsumed bytes before trailer")
    return out

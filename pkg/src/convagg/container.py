"""Binary container for named float32 tensors (magic ``HFW1``).

Layout, all integers little-endian:

    magic    4 bytes  b"HFW1"
    version  u32      (currently 1)
    count    u32      number of tensor records
    records  per tensor:
        name_len u32, name UTF-8 bytes
        rank     u32
        dims     u64 x rank
        values   f32 x prod(dims), IEEE-754 little-endian
    crc32    u32      CRC-32 over every byte after the magic

``read_container(write_container(x))`` reproduces names, shapes, order and
values bitwise. Readers reject unknown versions, truncated streams and
checksum mismatches. A loaded container is immutable and safe to share
across threads. See the README for a hex-dump example.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import ChecksumMismatchError, ContainerError, ContainerVersionError

__all__ = [
    "MAGIC",
    "VERSION",
    "TensorRecord",
    "WeightContainer",
    "write_container",
    "read_container",
    "write_container_file",
    "read_container_file",
]

MAGIC = b"HFW1"
VERSION = 1


@dataclass(frozen=True)
class TensorRecord:
    name: str
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        object.__setattr__(self, "values", v)
        if not self.name:
            raise ContainerError("tensor name must be non-empty")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape


@dataclass(frozen=True)
class WeightContainer:
    version: int
    records: tuple[TensorRecord, ...]

    def names(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.records)

    def __contains__(self, name: str) -> bool:
        return any(r.name == name for r in self.records)

    def get(self, name: str) -> np.ndarray:
        for r in self.records:
            if r.name == name:
                return r.values
        raise KeyError(name)


def write_container(records) -> bytes:
    recs = [r if isinstance(r, TensorRecord) else TensorRecord(*r) for r in records]
    seen = set()
    for r in recs:
        if r.name in seen:
            raise ContainerError(f"duplicate tensor name {r.name!r}")
        seen.add(r.name)

    body = bytearray()
    body += struct.pack("<II", VERSION, len(recs))
    for r in recs:
        name = r.name.encode("utf-8")
        body += struct.pack("<I", len(name))
        body += name
        body += struct.pack("<I", r.values.ndim)
        for d in r.values.shape:
            body += struct.pack("<Q", d)
        body += np.ascontiguousarray(r.values, dtype="<f4").tobytes()
    crc = zlib.crc32(bytes(body)) & 0xFFFFFFFF
    return MAGIC + bytes(body) + struct.pack("<I", crc)


class _Cursor:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise ContainerError(
                f"truncated stream: wanted {n} bytes at offset {self.pos}, "
                f"have {len(self.buf) - self.pos}"
            )
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]


def read_container(stream: bytes) -> WeightContainer:
    cur = _Cursor(bytes(stream))
    if cur.take(4) != MAGIC:
        raise ContainerError("bad magic: not a HFW1 container")
    if len(stream) < 4 + 4:
        raise ContainerError("truncated stream: missing trailer")
    stored_crc = struct.unpack("<I", stream[-4:])[0]
    actual_crc = zlib.crc32(stream[4:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise ChecksumMismatchError(
            f"checksum mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}"
        )
    version = cur.u32()
    if version != VERSION:
        raise ContainerVersionError(f"unsupported container version {version}")
    count = cur.u32()
    records = []
    names = set()
    for _ in range(count):
        name = cur.take(cur.u32()).decode("utf-8")
        if name in names:
            raise ContainerError(f"duplicate tensor name {name!r}")
        names.add(name)
        rank = cur.u32()
        dims = tuple(cur.u64() for _ in range(rank))
        for d in dims:
            if d < 1:
                raise ContainerError(f"tensor {name!r} has non-positive dim {d}")
        nval = 1
        for d in dims:
            nval *= d
        raw = cur.take(4 * nval)
        values = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
        records.append(TensorRecord(name, values))
    if cur.pos != len(stream) - 4:
        raise ContainerError(
            f"{len(stream) - 4 - cur.pos} unconsumed bytes before trailer"
        )
    return WeightContainer(version=version, records=tuple(records))


def write_container_file(path, records) -> None:
    with open(path, "wb") as fh:
        fh.write(write_container(records))


def read_container_file(path) -> WeightContainer:
    with open(path, "rb") as fh:
        return read_container(fh.read())

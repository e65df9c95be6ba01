"""Binary weights file format.

Layout (all integers little-endian):

    magic   4 bytes  "GLDF"
    version u32      currently 1
    count   u32      number of tensors
    per tensor:
        name_len u32, name bytes (UTF-8),
        rank u32, dims u32 each,
        raw float32 values (row-major)
    crc32   u32      of every preceding byte

Values are stored as float32; loading reproduces the saved bytes
exactly, so save -> load round-trips are bit-exact for float32 stores.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .network import WeightStore
from .tensor import Tensor

MAGIC = b"GLDF"
VERSION = 1


class WeightsFormatError(Exception):
    """Base class; exit_code distinguishes the failure class."""

    exit_code = 20


class BadMagicError(WeightsFormatError):
    exit_code = 21


class VersionMismatchError(WeightsFormatError):
    exit_code = 22


class ChecksumError(WeightsFormatError):
    exit_code = 23


class TruncatedFileError(WeightsFormatError):
    exit_code = 24


def save_weights(store, path):
    parts = [MAGIC, struct.pack("<II", VERSION, len(store))]
    for name, tensor in store.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        dims = tensor.dims
        parts.append(struct.pack("<I", len(dims)))
        parts.append(struct.pack(f"<{len(dims)}I", *dims))
        parts.append(np.ascontiguousarray(tensor.data, dtype="<f4").tobytes())
    payload = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise TruncatedFileError(
                f"needed {n} bytes at offset {self.pos}, file has {len(self.buf)}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]


def load_weights(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < len(MAGIC) + 8 + 4:
        raise TruncatedFileError(f"file is only {len(buf)} bytes")
    r = _Reader(buf)
    if r.take(4) != MAGIC:
        raise BadMagicError(f"bad magic {buf[:4]!r}")
    version = r.u32()
    if version != VERSION:
        raise VersionMismatchError(f"format version {version}, expected {VERSION}")
    count = r.u32()
    store = WeightStore()
    for _ in range(count):
        name = r.take(r.u32()).decode("utf-8")
        rank = r.u32()
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank))
        n_vals = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(r.take(4 * n_vals), dtype="<f4").reshape(dims)
        store[name] = Tensor(data.astype(np.float32), requires_grad=True)
    stored_crc = struct.unpack("<I", r.take(4))[0]
    if r.pos != len(buf):
        raise TruncatedFileError(f"{len(buf) - r.pos} trailing bytes after checksum")
    if zlib.crc32(buf[:-4]) != stored_crc:
        raise ChecksumError("crc32 mismatch")
    return store

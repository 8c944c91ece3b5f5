"""FDT: the package's portable binary tensor file format.

Layout (little-endian throughout): magic b"FDT1", one dtype byte
(0 = f32, 1 = f64), one rank byte (always 4), four u64 extents (N, C, H, W),
then the row-major scalar payload. Round-trips are bit-exact.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import FdtError
from .core import Tensor

__all__ = ["read_fdt", "write_fdt", "MAGIC"]

MAGIC = b"FDT1"
_DTYPE_CODE = {"f32": 0, "f64": 1}
_CODE_NPDT = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_HEADER = struct.Struct("<4Q")


def write_fdt(path, tensor: Tensor) -> None:
    arr = tensor.data
    le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([_DTYPE_CODE[tensor.dtype], 4]))
        fh.write(_HEADER.pack(*arr.shape))
        fh.write(le.tobytes(order="C"))


def read_fdt(path) -> Tensor:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise FdtError(f"{path}: not an FDT file (magic {blob[:4]!r})")
    if len(blob) < 4 + 2 + _HEADER.size:
        raise FdtError(f"{path}: truncated header ({len(blob)} bytes)")
    code, rank = blob[4], blob[5]
    if code not in _CODE_NPDT:
        raise FdtError(f"{path}: unknown dtype code {code}")
    if rank != 4:
        raise FdtError(f"{path}: rank {rank} unsupported (expected 4)")
    shape = _HEADER.unpack_from(blob, 6)
    dt = _CODE_NPDT[code]
    expected = int(np.prod(shape)) * dt.itemsize
    payload = blob[6 + _HEADER.size:]
    if len(payload) != expected:
        raise FdtError(f"{path}: payload holds {len(payload)} bytes, expected {expected} "
                       f"for extents {shape}")
    arr = np.frombuffer(payload, dtype=dt).reshape(shape)
    return Tensor._wrap(arr.astype(dt.newbyteorder("=")))

"""TNSR binary tensor files.

Layout (little-endian): ``b"TNSR"``, u8 version (1), u8 dtype (0 = f32,
1 = f64), u8 rank, u8 zero pad, ``rank`` x u64 dims, then the row-major scalars.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .tensor import Tensor

MAGIC = b"TNSR"
VERSION = 1
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


class TnsrFormatError(ValueError):
    pass


def encode(array) -> bytes:
    arr = array.data if isinstance(array, Tensor) else np.asarray(array)
    if arr.dtype not in _CODES:
        raise TnsrFormatError(f"unsupported dtype {arr.dtype}")
    code = _CODES[arr.dtype]
    header = MAGIC + struct.pack("<BBBB", VERSION, code, arr.ndim, 0)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()


def decode(blob: bytes) -> np.ndarray:
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise TnsrFormatError("bad magic: not a TNSR file")
    version, code, rank, _pad = struct.unpack_from("<BBBB", blob, 4)
    if version != VERSION:
        raise TnsrFormatError(f"unsupported TNSR version {version}")
    if code not in _DTYPES:
        raise TnsrFormatError(f"unknown dtype code {code}")
    offset = 8 + 8 * rank
    if len(blob) < offset:
        raise TnsrFormatError("truncated header")
    dims = struct.unpack_from(f"<{rank}Q", blob, 8)
    dtype = _DTYPES[code]
    count = int(np.prod(dims, dtype=np.int64))
    if len(blob) != offset + count * dtype.itemsize:
        raise TnsrFormatError(f"payload size mismatch for shape {dims}")
    data = np.frombuffer(blob, dtype=dtype, count=count, offset=offset)
    return data.reshape(dims).astype(dtype.newbyteorder("="))


def save(path, array) -> None:
    Path(path).write_bytes(encode(array))


def load(path) -> np.ndarray:
    return decode(Path(path).read_bytes())

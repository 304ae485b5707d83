"""Binary tensor container.

A file is a concatenation of records; each record is::

    b"PRSM"                magic
    u16  format version    (1)
    u16  dtype code        (1 = float64, 2 = int64)
    u16  rank
    u64  dims[rank]
    payload                row-major, little-endian

All integers are little-endian.
"""
from __future__ import annotations

import hashlib
import io
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import PrismIOError

MAGIC = b"PRSM"
VERSION = 1
_DTYPES = {1: np.dtype("<f8"), 2: np.dtype("<i8")}
_CODES = {np.dtype("float64"): 1, np.dtype("int64"): 2}


def encode_tensor(array) -> bytes:
    a = np.asarray(array)
    if a.dtype.kind == "f":
        a = a.astype("<f8", copy=False)
    elif a.dtype.kind in "iub":
        a = a.astype("<i8", copy=False)
    else:
        raise TypeError(f"unsupported dtype {a.dtype}")
    code = 1 if a.dtype.kind == "f" else 2
    head = MAGIC + struct.pack("<HHH", VERSION, code, a.ndim)
    head += struct.pack(f"<{a.ndim}Q", *a.shape)
    return head + np.ascontiguousarray(a).tobytes()


def decode_tensors(blob: bytes, source: str = "<bytes>") -> list[np.ndarray]:
    out = []
    buf = io.BytesIO(blob)
    while True:
        magic = buf.read(4)
        if not magic:
            break
        if magic != MAGIC:
            raise PrismIOError(f"{source}: bad magic {magic!r}")
        hdr = buf.read(6)
        if len(hdr) != 6:
            raise PrismIOError(f"{source}: truncated header")
        version, code, rank = struct.unpack("<HHH", hdr)
        if version != VERSION:
            raise PrismIOError(f"{source}: unsupported format version {version}")
        if code not in _DTYPES:
            raise PrismIOError(f"{source}: unknown dtype code {code}")
        raw_dims = buf.read(8 * rank)
        if len(raw_dims) != 8 * rank:
            raise PrismIOError(f"{source}: truncated dims")
        dims = struct.unpack(f"<{rank}Q", raw_dims)
        dtype = _DTYPES[code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        payload = buf.read(nbytes)
        if len(payload) != nbytes:
            raise PrismIOError(f"{source}: truncated payload")
        arr = np.frombuffer(payload, dtype=dtype).reshape(dims)
        out.append(arr.astype(dtype.newbyteorder("="), copy=True))
    return out


def save_tensors(path, arrays: Sequence) -> str:
    """Write ``arrays`` to ``path``; returns the sha256 of the file bytes."""
    blob = b"".join(encode_tensor(a) for a in arrays)
    try:
        Path(path).write_bytes(blob)
    except OSError as exc:
        raise PrismIOError(f"{path}: {exc}") from exc
    return hashlib.sha256(blob).hexdigest()


def load_tensors(path) -> list[np.ndarray]:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise PrismIOError(f"{path}: {exc}") from exc
    return decode_tensors(blob, str(path))


def file_sha256(path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError as exc:
        raise PrismIOError(f"{path}: {exc}") from exc

"""Dataset and checkpoint file formats.

Tensor files (little-endian)::

    offset  size  field
    0       4     magic b"MOMP"
    4       4     uint32 format version (1)
    8       4     uint32 N_B
    12      4     uint32 N_M
    16      4     uint32 N_S
    20      4     uint32 count
    24      ...   count * N_B * N_M * N_S complex values, row-major
                  (tensor index, then b, m, s), each as float64 re, float64 im

A matrix is stored as a single ``(rows, cols, 1)`` tensor.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

__all__ = [
    "MAGIC",
    "VERSION",
    "FormatError",
    "write_tensors",
    "read_tensors",
    "write_matrix",
    "read_matrix",
    "write_json",
    "read_json",
]

MAGIC = b"MOMP"
VERSION = 1
_HEADER = struct.Struct("<4sIIIII")


class FormatError(ValueError):
    """File does not follow the tensor format."""


def write_tensors(path, tensors) -> None:
    """Write a stack of equally shaped complex 3-way tensors."""
    arr = np.asarray(tensors, dtype=np.complex128)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4:
        raise ValueError(f"expected (count, N_B, N_M, N_S), got {arr.shape}")
    count, nb, nm, ns = arr.shape
    path = Path(path)
    try:
        with path.open("wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, nb, nm, ns, count))
            fh.write(np.ascontiguousarray(arr).astype("<c16").tobytes())
    except OSError as exc:
        raise OSError(f"cannot write tensor file {path}: {exc}") from exc


def read_tensors(path) -> np.ndarray:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read tensor file {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, nb, nm, ns, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 16 * count * nb * nm * ns
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size)
    return data.astype(np.complex128).reshape(count, nb, nm, ns)


def write_matrix(path, m) -> None:
    m = np.asarray(m)
    write_tensors(path, m.reshape(m.shape[0], m.shape[1], 1))


def read_matrix(path) -> np.ndarray:
    t = read_tensors(path)
    if t.shape[0] != 1 or t.shape[3] != 1:
        raise FormatError(f"{path}: not a matrix file")
    return t[0, :, :, 0]


def write_json(path, obj) -> None:
    path = Path(path)
    try:
        path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc

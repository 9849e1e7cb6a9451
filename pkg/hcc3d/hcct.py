"""The HCCT binary tensor format.

Layout: magic `HCCT`, u8 version, u8 dtype code (1=f32, 2=f64), u8 ndim,
little-endian u64 dims, then the little-endian row-major payload.
"""

from __future__ import annotations

import math
import struct
from typing import TYPE_CHECKING, Final

import numpy as np

import hcc3d.errors
import hcc3d.file
import hcc3d.tensor

if TYPE_CHECKING:
    from hcc3d.file import PathLike

MAGIC: Final = b"HCCT"
VERSION: Final = 1
_HEADER: Final = struct.Struct("<4sBBB")
_CODES: Final = {"float32": 1, "float64": 2}
_LAYOUTS: Final = {1: np.dtype("<f4"), 2: np.dtype("<f8")}


def encode(value: hcc3d.tensor.Tensor | np.ndarray) -> bytes:
    arr = value.data if isinstance(value, hcc3d.tensor.Tensor) else np.asarray(value)
    code = _CODES.get(str(arr.dtype))
    if code is None:
        raise hcc3d.errors.FormatError(f'dtype "{arr.dtype}" cannot be stored as HCCT.')

    header = _HEADER.pack(MAGIC, VERSION, code, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + dims + np.ascontiguousarray(arr, dtype=_LAYOUTS[code]).tobytes()


def decode(buf: bytes, *, name: str = "tensor") -> hcc3d.tensor.Tensor:
    if len(buf) < _HEADER.size:
        raise hcc3d.errors.FormatError(f"{name}: truncated HCCT header.")

    magic, version, code, ndim = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise hcc3d.errors.FormatError(f"{name}: bad magic bytes {magic!r}.")
    if version != VERSION:
        raise hcc3d.errors.FormatError(f"{name}: unsupported HCCT version {version}.")
    if code not in _LAYOUTS:
        raise hcc3d.errors.FormatError(f"{name}: unknown dtype code {code}.")

    dims_end = _HEADER.size + 8 * ndim
    if len(buf) < dims_end:
        raise hcc3d.errors.FormatError(f"{name}: truncated HCCT dims.")

    shape = struct.unpack_from(f"<{ndim}Q", buf, _HEADER.size)
    layout = _LAYOUTS[code]
    expected = math.prod(shape) * layout.itemsize
    if len(buf) - dims_end != expected:
        raise hcc3d.errors.FormatError(
            f"{name}: payload holds {len(buf) - dims_end} bytes, expected {expected}."
        )

    if expected == 0:
        return hcc3d.tensor.Tensor(np.zeros(shape, dtype=layout.newbyteorder("=")))

    arr = np.frombuffer(buf, dtype=layout, offset=dims_end).reshape(shape)
    return hcc3d.tensor.Tensor(arr.astype(layout.newbyteorder("=")))


def write(path: PathLike, value: hcc3d.tensor.Tensor | np.ndarray) -> None:
    hcc3d.file.write(path, encode(value))


def read(path: PathLike) -> hcc3d.tensor.Tensor:
    return decode(hcc3d.file.read(path), name=str(path))

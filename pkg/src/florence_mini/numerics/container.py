"""Bit-exact binary tensor container and checkpoint directories.

Container layout (little-endian):
    magic "FMT1" | dtype code u8 (0=f32, 1=f64, 2=u8) | rank u32 |
    rank x u32 extents | raw row-major payload

A checkpoint is a directory holding one container file per named parameter
plus ``manifest.json`` mapping name -> {file, shape, dtype}; arbitrary
JSON-serializable metadata (model config, vocabulary, optimizer scalars)
rides along in the manifest.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .tensor import Tensor

MAGIC = b"FMT1"
MAX_RANK = 5

_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1, np.dtype(np.uint8): 2}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


class TensorFormatError(ValueError):
    pass


def _as_array(t) -> np.ndarray:
    return t.data if isinstance(t, Tensor) else np.asarray(t)


def write_tensor_file(path, t) -> None:
    arr = _as_array(t)
    if not arr.flags["C_CONTIGUOUS"]:
        # ascontiguousarray would promote rank-0 to rank-1; 0-d is always contiguous
        arr = np.ascontiguousarray(arr)
    if arr.dtype not in _DTYPE_CODES:
        raise TensorFormatError(f"unsupported dtype {arr.dtype}")
    if arr.ndim > MAX_RANK:
        raise TensorFormatError(f"rank {arr.ndim} exceeds container maximum {MAX_RANK}")
    for ext in arr.shape:
        if ext >= 2**32:
            raise TensorFormatError(f"extent {ext} exceeds u32")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<B", _DTYPE_CODES[arr.dtype]))
        fh.write(struct.pack("<I", arr.ndim))
        for ext in arr.shape:
            fh.write(struct.pack("<I", ext))
        if arr.dtype.byteorder == ">":
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        fh.write(arr.tobytes(order="C"))


def _read_header(fh, path) -> tuple[tuple[int, ...], np.dtype]:
    magic = fh.read(4)
    if magic != MAGIC:
        raise TensorFormatError(f"{path}: bad magic {magic!r}")
    head = fh.read(5)
    if len(head) != 5:
        raise TensorFormatError(f"{path}: truncated header")
    code, rank = struct.unpack("<BI", head)
    if code not in _CODE_DTYPES:
        raise TensorFormatError(f"{path}: unknown dtype code {code}")
    if rank > MAX_RANK:
        raise TensorFormatError(f"{path}: rank {rank} exceeds container maximum {MAX_RANK}")
    raw = fh.read(4 * rank)
    if len(raw) != 4 * rank:
        raise TensorFormatError(f"{path}: truncated extent list")
    shape = struct.unpack(f"<{rank}I", raw) if rank else ()
    return shape, _CODE_DTYPES[code]


def read_tensor_header(path) -> tuple[tuple[int, ...], np.dtype]:
    """Shape and dtype without loading the payload."""
    with open(path, "rb") as fh:
        return _read_header(fh, path)


def read_tensor_file(path) -> Tensor:
    with open(path, "rb") as fh:
        shape, dtype = _read_header(fh, path)
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        payload = fh.read(count * dtype.itemsize + 1)
        if len(payload) < count * dtype.itemsize:
            raise TensorFormatError(f"{path}: truncated payload")
        if len(payload) > count * dtype.itemsize:
            raise TensorFormatError(f"{path}: trailing bytes after payload")
    arr = np.frombuffer(payload, dtype=dtype.newbyteorder("<"), count=count)
    return Tensor(arr.astype(dtype, copy=True).reshape(shape))


def save_checkpoint(dirpath, tensors: dict[str, np.ndarray], metadata: dict | None = None) -> Path:
    """Write one container file per tensor plus a manifest."""
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    entries = {}
    for name in sorted(tensors):
        arr = _as_array(tensors[name])
        fname = name + ".bin"
        write_tensor_file(d / fname, arr)
        entries[name] = {"file": fname, "shape": list(arr.shape), "dtype": str(arr.dtype)}
    manifest = {"format": "florence-mini-checkpoint-v1", "tensors": entries}
    if metadata:
        manifest.update(metadata)
    with open(d / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return d


def load_checkpoint(dirpath) -> tuple[dict[str, np.ndarray], dict]:
    """Inverse of save_checkpoint; verifies shapes and dtypes per manifest."""
    d = Path(dirpath)
    with open(d / "manifest.json") as fh:
        manifest = json.load(fh)
    tensors: dict[str, np.ndarray] = {}
    for name, entry in manifest["tensors"].items():
        t = read_tensor_file(d / entry["file"])
        if list(t.shape) != entry["shape"] or str(t.dtype) != entry["dtype"]:
            raise TensorFormatError(f"{name}: manifest/file disagreement")
        tensors[name] = t.data
    return tensors, manifest

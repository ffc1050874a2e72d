"""Tensor and checkpoint serialization.

Single-tensor format (extension .egt):

    bytes 0..3   magic "EGT1"
    8 bytes      rank, unsigned 64-bit little-endian
    rank * 8     extents, unsigned 64-bit little-endian each
    rest         payload, float32 little-endian, C order

Checkpoint container (extension .egtc): magic "EGTC", an 8-byte
little-endian manifest length, the JSON manifest, then the tensor
records back to back, each a complete EGT1 blob.  The manifest maps
tensor names to offsets (relative to the payload start) and shapes, and
carries arbitrary metadata (config, seed, optimizer step).  Manifest
JSON is emitted with sorted keys and no whitespace and tensors are laid
out in sorted-name order, so writing the same state twice produces
byte-identical files.
"""

from __future__ import annotations

import io
import json
import struct

import numpy as np

__all__ = [
    "MAGIC",
    "CONTAINER_MAGIC",
    "encode_tensor",
    "decode_tensor",
    "write_tensor",
    "read_tensor",
    "write_container",
    "read_container",
]

MAGIC = b"EGT1"
CONTAINER_MAGIC = b"EGTC"


class FormatError(ValueError):
    """Raised on malformed serialized data."""


def encode_tensor(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    header = MAGIC + struct.pack("<Q", arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b""
    return header + arr.tobytes()


def decode_tensor(buf, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decode one tensor starting at ``offset``; returns (array, end offset)."""
    buf = memoryview(buf)
    if buf[offset : offset + 4] != MAGIC:
        raise FormatError("bad magic, not an EGT1 tensor")
    (rank,) = struct.unpack_from("<Q", buf, offset + 4)
    if rank > 32:
        raise FormatError(f"implausible rank {rank}")
    shape = struct.unpack_from(f"<{rank}Q", buf, offset + 12)
    count = int(np.prod(shape, dtype=np.uint64)) if rank else 1
    start = offset + 12 + 8 * rank
    end = start + 4 * count
    if end > len(buf):
        raise FormatError("truncated tensor payload")
    arr = np.frombuffer(buf[start:end], dtype="<f4").reshape(shape).copy()
    return arr, end


def write_tensor(path, arr: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_tensor(arr))


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    arr, end = decode_tensor(buf)
    if end != len(buf):
        raise FormatError("trailing bytes after tensor payload")
    return arr


def write_container(path, tensors: dict[str, np.ndarray], meta: dict) -> None:
    """Write named tensors plus JSON metadata as one checkpoint file."""
    payload = io.BytesIO()
    index = {}
    for name in sorted(tensors):
        arr = tensors[name]
        index[name] = {"offset": payload.tell(), "shape": list(arr.shape)}
        payload.write(encode_tensor(arr))
    manifest = dict(meta)
    manifest["tensors"] = index
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CONTAINER_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(payload.getvalue())


def read_container(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint; returns ({name: float32 array}, metadata dict)."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != CONTAINER_MAGIC:
        raise FormatError("bad magic, not a checkpoint container")
    (mlen,) = struct.unpack_from("<Q", buf, 4)
    manifest = json.loads(buf[12 : 12 + mlen].decode("utf-8"))
    base = 12 + mlen
    tensors = {}
    for name, entry in manifest.pop("tensors").items():
        arr, _ = decode_tensor(buf, base + entry["offset"])
        if list(arr.shape) != list(entry["shape"]):
            raise FormatError(f"shape mismatch for {name!r}")
        tensors[name] = arr
    return tensors, manifest

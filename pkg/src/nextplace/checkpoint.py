"""Self-describing binary container for named parameter arrays.

Layout: magic ``CKPT``, format version (u32 LE), entry count (u32 LE), then
per entry a UTF-8 name (u16 length prefix), rank (u8), dims (u32 each), and
the row-major float64 little-endian payload. Everything is fixed-width, so
identical inputs serialize to identical bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"CKPT"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Malformed, truncated, or incompatible checkpoint file."""


def save_checkpoint(path, entries: list[tuple[str, np.ndarray]]) -> None:
    """Write (name, array) pairs in the given order."""
    names = [name for name, _ in entries]
    if len(set(names)) != len(names):
        raise CheckpointError("duplicate parameter names in checkpoint entries")
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(entries))]
    for name, arr in entries:
        arr = np.asarray(arr, dtype=np.float64)
        raw_name = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw_name)))
        chunks.append(raw_name)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
        chunks.append(arr.astype("<f8").tobytes(order="C"))
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path, expected_shapes: dict | None = None) -> dict[str, np.ndarray]:
    """Read a checkpoint back as an ordered name -> array mapping.

    When expected_shapes is given, the file must contain exactly those names
    with exactly those shapes.
    """
    blob = Path(path).read_bytes()
    view = memoryview(blob)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(blob):
            raise CheckpointError(f"truncated checkpoint: wanted {n} bytes at offset {pos}")
        piece = view[pos:pos + n]
        pos += n
        return piece

    if bytes(take(4)) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, count = struct.unpack("<II", take(8))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version}")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim)) if ndim else ()
        size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        arr = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape).copy()
        if name in out:
            raise CheckpointError(f"duplicate parameter {name!r} in checkpoint")
        out[name] = arr
    if pos != len(blob):
        raise CheckpointError(f"{len(blob) - pos} trailing bytes after last entry")
    if expected_shapes is not None:
        missing = sorted(set(expected_shapes) - set(out))
        extra = sorted(set(out) - set(expected_shapes))
        if missing or extra:
            raise CheckpointError(
                f"parameter set mismatch: missing {missing}, unexpected {extra}")
        for name, shape in expected_shapes.items():
            if out[name].shape != tuple(shape):
                raise CheckpointError(
                    f"shape mismatch for {name!r}: file has {out[name].shape}, "
                    f"model expects {tuple(shape)}")
    return out

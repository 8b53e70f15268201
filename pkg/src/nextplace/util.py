"""Seed derivation and content digests shared across stages."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path


def derive_seed(root: int, *parts) -> int:
    """Stable 64-bit seed from a root seed and a label path.

    Hash-based so that independent stages (and independent walks or epochs
    within a stage) get decorrelated streams while staying reproducible.
    """
    h = hashlib.sha256()
    h.update(str(int(root)).encode("utf-8"))
    for part in parts:
        h.update(b"\x1f")
        h.update(str(part).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little")


def digest_of_bytes(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def digest_of_file(path) -> str:
    return digest_of_bytes(Path(path).read_bytes())


def digest_of_json(obj) -> str:
    """Digest of a JSON-serializable object, independent of dict order."""
    return digest_of_bytes(
        json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8"))

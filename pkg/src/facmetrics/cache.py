"""Versioned binary cache keyed by input digest.

Layout: magic b"FMX1", format version (uint16 big-endian), 64-byte hex
digest of the inputs that produced the payload, then a pickled dict of
columns. A version bump invalidates every existing cache file; a digest
mismatch marks the cache stale for the given inputs.
"""

from __future__ import annotations

import pickle
import struct
from pathlib import Path

from .errors import CacheError

MAGIC = b"FMX1"
VERSION = 1


def write_cache(path: str | Path, digest: str, payload: dict) -> None:
    if len(digest) != 64:
        raise CacheError(f"digest must be 64 hex chars, got {len(digest)}")
    raw = MAGIC + struct.pack(">H", VERSION) + digest.encode("ascii")
    raw += pickle.dumps(payload, protocol=4)
    Path(path).write_bytes(raw)


def read_cache(path: str | Path, expected_digest: str | None = None) -> tuple[str, dict]:
    """Return (digest, payload). Raises CacheError on bad magic, version,
    or digest mismatch against expected_digest."""
    raw = Path(path).read_bytes()
    if len(raw) < 4 + 2 + 64:
        raise CacheError(f"cache file too short: {path}")
    if raw[:4] != MAGIC:
        raise CacheError(f"bad cache magic in {path}")
    (version,) = struct.unpack(">H", raw[4:6])
    if version != VERSION:
        raise CacheError(f"cache version {version} != {VERSION} in {path}")
    digest = raw[6:70].decode("ascii")
    if expected_digest is not None and digest != expected_digest:
        raise CacheError(f"stale cache: digest {digest[:12]}... != expected {expected_digest[:12]}...")
    payload = pickle.loads(raw[70:])
    return digest, payload

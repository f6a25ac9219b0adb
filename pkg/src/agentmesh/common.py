"""Shared primitives: id generation, wall-clock ms, canonical JSON, snapshots.

Every value that crosses a module boundary (scope writes, trace payloads,
bank digests) is JSON-representable; `canonical_dumps` is the one
serialization used for digesting and equality checks.
"""

from __future__ import annotations

import hashlib
import json
import secrets
import time
from typing import Any

# Snapshots larger than this are stored as content hash + truncated preview.
SNAPSHOT_LIMIT_BYTES = 64 * 1024
SNAPSHOT_PREVIEW_CHARS = 512


def new_id() -> str:
    """URL-safe random 128-bit identifier."""
    return secrets.token_urlsafe(16)


def now_ms() -> int:
    """Wall-clock time in milliseconds."""
    return int(time.time() * 1000)


def canonical_dumps(value: Any) -> str:
    """Canonical JSON text: sorted keys, no insignificant whitespace."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_bytes(value: Any) -> bytes:
    return canonical_dumps(value).encode("utf-8")


def json_roundtrip(value: Any) -> Any:
    """Deep-copy a value through JSON, proving it is JSON-representable.

    Raises TypeError/ValueError for values that do not serialize.
    """
    return json.loads(json.dumps(value, ensure_ascii=False))


def md5_hex(data: bytes) -> str:
    """32-hex-char MD5 digest of raw bytes."""
    return hashlib.md5(data).hexdigest()


def snapshot_value(value: Any) -> Any:
    """Bound a snapshot for storage.

    Values whose canonical form exceeds SNAPSHOT_LIMIT_BYTES are replaced by
    a marker carrying the content hash and a preview, so logs stay small but
    dedup over stored forms remains meaningful.
    """
    try:
        text = canonical_dumps(value)
    except (TypeError, ValueError):
        text = canonical_dumps(repr(value))
        value = repr(value)
    raw = text.encode("utf-8")
    if len(raw) <= SNAPSHOT_LIMIT_BYTES:
        return json.loads(text)
    return {
        "__truncated__": True,
        "content_md5": md5_hex(raw),
        "byte_length": len(raw),
        "preview": text[:SNAPSHOT_PREVIEW_CHARS],
    }

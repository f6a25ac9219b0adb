"""Four-tier hierarchical state store.

Visibility narrows application -> session group -> request -> node. The
first three tiers live in this store; node-level arguments live on the
request envelope itself and are never implicitly inherited by callees.

Values are JSON-representable; writes are last-writer-wins and atomic per
key. Request maps are dropped when the root request completes and its
trace is sealed.
"""

from __future__ import annotations

import threading
from enum import Enum
from typing import Any

from .common import json_roundtrip
from .errors import MissingGroupId


class ScopeLevel(str, Enum):
    APPLICATION = "application"
    SESSION_GROUP = "session_group"
    REQUEST = "request"
    NODE = "node"


class _Absent:
    """Sentinel distinguishing 'no value stored' from a stored None."""

    _instance: "_Absent | None" = None

    def __new__(cls) -> "_Absent":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "ABSENT"

    def __bool__(self) -> bool:
        return False


ABSENT = _Absent()


class ScopeStore:
    """Concurrent-safe maps for the application, group, and request tiers."""

    def __init__(self) -> None:
        self._application: dict[str, Any] = {}
        self._groups: dict[str, dict[str, Any]] = {}
        self._requests: dict[str, dict[str, Any]] = {}
        self._lock = threading.Lock()

    def set(self, level: ScopeLevel, key: str, value: Any, *,
            request_id: str | None = None, group_id: str | None = None) -> None:
        if not key:
            raise ValueError("scope key must be non-empty")
        stored = json_roundtrip(value)
        with self._lock:
            self._target(level, request_id, group_id, create=True)[key] = stored

    def get(self, level: ScopeLevel, key: str, *,
            request_id: str | None = None, group_id: str | None = None) -> Any:
        with self._lock:
            target = self._target(level, request_id, group_id, create=False)
            if target is None or key not in target:
                return ABSENT
            return json_roundtrip(target[key])

    def _target(self, level: ScopeLevel, request_id: str | None,
                group_id: str | None, create: bool) -> dict[str, Any] | None:
        if level is ScopeLevel.APPLICATION:
            return self._application
        if level is ScopeLevel.SESSION_GROUP:
            if not group_id:
                raise MissingGroupId("session-group access requires a group_id")
            if group_id not in self._groups:
                if not create:
                    return None
                self._groups[group_id] = {}
            return self._groups[group_id]
        if level is ScopeLevel.REQUEST:
            if not request_id:
                raise ValueError("request-level access requires a request_id")
            if request_id not in self._requests:
                if not create:
                    return None
                self._requests[request_id] = {}
            return self._requests[request_id]
        raise ValueError("node scope lives on the request envelope, not the store")

    def drop_request(self, request_id: str) -> None:
        """Garbage-collect a finished trajectory's request map."""
        with self._lock:
            self._requests.pop(request_id, None)

    def debug_view(self, request_id: str, group_id: str | None = None) -> dict[str, Any]:
        """Read-only snapshot for the debugging endpoint."""
        with self._lock:
            return {
                "request": dict(self._requests.get(request_id, {})),
                "group": dict(self._groups.get(group_id, {})) if group_id else None,
                "application": dict(self._application),
            }

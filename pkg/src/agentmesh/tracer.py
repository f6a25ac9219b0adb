"""Trace capture, storage, replay metadata, and inspection.

Each inference trajectory gets a trace directory; each run of that
trajectory (the original or a regeneration) is one JSONL event log named
by version. Versions form a tree recorded in the trace index, so edits
branch history instead of overwriting it.

Event logs are append-only. A regenerated version starts with an inherit
marker pointing at the seq range it shares with its parent instead of
copying those lines.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

from .common import canonical_bytes, md5_hex, new_id, now_ms, snapshot_value
from .errors import SealedTrace, UnknownCall, UnknownTrace, UnsealedTrace
from .lifecycle import AspectPhase, LifecycleStage

RUNNING = "running"
OK = "ok"
ERROR = "error"


@dataclass
class TraceEvent:
    trace_id: str
    seq: int
    ts_ms: int
    call_id: str
    parent_call_id: str | None
    node: str
    kind: str
    stage: str
    phase: str
    status: str
    payload: Any = None
    annotations: list[dict[str, Any]] = field(default_factory=list)

    def as_dict(self) -> dict[str, Any]:
        return {
            "trace_id": self.trace_id,
            "seq": self.seq,
            "ts_ms": self.ts_ms,
            "call_id": self.call_id,
            "parent_call_id": self.parent_call_id,
            "node": self.node,
            "kind": self.kind,
            "stage": self.stage,
            "phase": self.phase,
            "status": self.status,
            "payload": self.payload,
            "annotations": self.annotations,
        }


@dataclass
class CallNode:
    call_id: str
    name: str
    kind: str
    parent_call_id: str | None
    first_seq: int
    begin_ms: int
    end_ms: int | None = None
    status: str = RUNNING
    children: list["CallNode"] = field(default_factory=list)

    @property
    def duration_ms(self) -> int | None:
        if self.end_ms is None:
            return None
        return self.end_ms - self.begin_ms

    def as_dict(self) -> dict[str, Any]:
        return {
            "call_id": self.call_id,
            "name": self.name,
            "kind": self.kind,
            "parent_call_id": self.parent_call_id,
            "status": self.status,
            "begin_ms": self.begin_ms,
            "end_ms": self.end_ms,
            "duration_ms": self.duration_ms,
            "children": [c.as_dict() for c in self.children],
        }


@dataclass
class ExecutionGraph:
    trace_id: str
    version_id: str
    roots: list[CallNode]
    by_call_id: dict[str, CallNode]

    def walk(self) -> Iterator[CallNode]:
        """Depth-first preorder; children in first-event order."""
        stack = list(reversed(self.roots))
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))


def build_graph(trace_id: str, version_id: str, events: list[dict[str, Any]]) -> ExecutionGraph:
    by_id: dict[str, CallNode] = {}
    roots: list[CallNode] = []
    for ev in events:
        cid = ev["call_id"]
        node = by_id.get(cid)
        if node is None:
            node = CallNode(
                call_id=cid,
                name=ev["node"],
                kind=ev["kind"],
                parent_call_id=ev.get("parent_call_id"),
                first_seq=ev["seq"],
                begin_ms=ev["ts_ms"],
            )
            by_id[cid] = node
            parent = by_id.get(node.parent_call_id) if node.parent_call_id else None
            if parent is not None:
                parent.children.append(node)
            else:
                roots.append(node)
        node.end_ms = ev["ts_ms"]
        # the final joinpoint of a call fixes its terminal status
        if ev["stage"] == LifecycleStage.FORMAT_OUTPUT.value and ev["phase"] == AspectPhase.AFTER.value:
            node.status = ev["status"]
    for node in by_id.values():
        node.children.sort(key=lambda c: c.first_seq)
        if node.status == RUNNING:
            node.end_ms = None
    roots.sort(key=lambda c: c.first_seq)
    return ExecutionGraph(trace_id=trace_id, version_id=version_id, roots=roots, by_call_id=by_id)


@dataclass
class TimingBreakdown:
    call_id: str
    name: str
    kind: str
    total_ms: int
    self_ms: int
    llm_ms: int
    tool_ms: int
    agent_ms: int

    def as_dict(self) -> dict[str, Any]:
        return {
            "call_id": self.call_id,
            "name": self.name,
            "kind": self.kind,
            "total_ms": self.total_ms,
            "self_ms": self.self_ms,
            "llm_ms": self.llm_ms,
            "tool_ms": self.tool_ms,
            "agent_ms": self.agent_ms,
        }


def timing_report(graph: ExecutionGraph) -> list[TimingBreakdown]:
    """Attribute each call's inclusive time across its direct children.

    Child time buckets by the child's kind; whatever is left over is the
    call's own bookkeeping and stage work.
    """
    report: list[TimingBreakdown] = []
    for node in graph.walk():
        total = node.duration_ms if node.duration_ms is not None else 0
        llm = tool = agent = 0
        for child in node.children:
            d = child.duration_ms if child.duration_ms is not None else 0
            if child.kind == "llm":
                llm += d
            elif child.kind == "tool":
                tool += d
            else:  # agent and flow both count as delegation time
                agent += d
        self_ms = max(total - (llm + tool + agent), 0)
        report.append(
            TimingBreakdown(
                call_id=node.call_id,
                name=node.name,
                kind=node.kind,
                total_ms=total,
                self_ms=self_ms,
                llm_ms=llm,
                tool_ms=tool,
                agent_ms=agent,
            )
        )
    return report


def export_dot(graph: ExecutionGraph) -> str:
    """Render the call tree as DOT. Node ids come from names plus the
    DFS visit number, so identical structures export identical text."""
    if not graph.roots:
        return "// execution trace\ndigraph trace {}"
    ids: dict[str, str] = {}
    lines = ["// execution trace", "digraph trace {", "  rankdir=TB;"]
    for i, node in enumerate(graph.walk(), start=1):
        ids[node.call_id] = f"{node.name}_c{i}"
    for node in graph.walk():
        dur = f"{node.duration_ms}ms" if node.duration_ms is not None else "-"
        label = f"{node.name} [{node.kind}] {node.status} {dur}"
        lines.append(f'  "{ids[node.call_id]}" [label="{label}"];')
    for node in graph.walk():
        for child in node.children:
            lines.append(f'  "{ids[node.call_id]}" -> "{ids[child.call_id]}";')
    lines.append("}")
    return "\n".join(lines)


def normalize_graph(graph: ExecutionGraph) -> dict[str, Any]:
    """Structure-only projection: timestamps dropped, call ids replaced by
    DFS positions. Two runs of the same plan normalize identically."""
    index: dict[str, int] = {}
    nodes: list[dict[str, Any]] = []
    for i, node in enumerate(graph.walk()):
        index[node.call_id] = i
        parent = index.get(node.parent_call_id) if node.parent_call_id else None
        nodes.append(
            {
                "i": i,
                "parent": parent,
                "name": node.name,
                "kind": node.kind,
                "status": node.status,
            }
        )
    return {"nodes": nodes}


def structure_checksum(graph: ExecutionGraph) -> str:
    return md5_hex(canonical_bytes(normalize_graph(graph)))


class TraceStore:
    """Filesystem-backed event log with per-trace version trees.

    Layout under the data directory:

        traces/<trace_id>/index.json
        traces/<trace_id>/<version_id>.jsonl

    Sequence numbers are dense per version and assigned under the store
    lock, so concurrent subcalls interleave without gaps.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root) / "traces"
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._cond = threading.Condition(self._lock)
        self._index: dict[str, dict[str, Any]] = {}
        self._buffers: dict[tuple[str, str], list[dict[str, Any]]] = {}
        self._inherited: dict[tuple[str, str], list[dict[str, Any]]] = {}
        self._next_seq: dict[tuple[str, str], int] = {}
        for trace_dir in sorted(self.root.iterdir()) if self.root.exists() else []:
            idx = trace_dir / "index.json"
            if idx.is_file():
                self._index[trace_dir.name] = json.loads(idx.read_text(encoding="utf-8"))

    # -- index helpers ---------------------------------------------------

    def _trace_dir(self, trace_id: str) -> Path:
        return self.root / trace_id

    def _write_index(self, trace_id: str) -> None:
        path = self._trace_dir(trace_id) / "index.json"
        path.write_text(
            json.dumps(self._index[trace_id], indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    def _require_trace(self, trace_id: str) -> dict[str, Any]:
        try:
            return self._index[trace_id]
        except KeyError:
            raise UnknownTrace(f"no trace {trace_id!r}")

    def _require_version(self, trace_id: str, version_id: str) -> dict[str, Any]:
        meta = self._require_trace(trace_id)
        try:
            return meta["versions"][version_id]
        except KeyError:
            raise UnknownTrace(f"trace {trace_id!r} has no version {version_id!r}")

    # -- lifecycle ---------------------------------------------------------

    def begin_trace(self, *, group_id: str | None = None, meta: dict[str, Any] | None = None) -> tuple[str, str]:
        trace_id = "t-" + new_id()
        with self._lock:
            self._trace_dir(trace_id).mkdir(parents=True, exist_ok=True)
            self._index[trace_id] = {
                "trace_id": trace_id,
                "created_ms": now_ms(),
                "group_id": group_id,
                "meta": meta or {},
                "versions": {
                    "v1": {
                        "parent": None,
                        "created_ms": now_ms(),
                        "sealed": False,
                        "seal_ms": None,
                        "meta": {"origin": "root"},
                    }
                },
            }
            self._next_seq[(trace_id, "v1")] = 0
            self._buffers[(trace_id, "v1")] = []
            self._write_index(trace_id)
        return trace_id, "v1"

    def new_version(
        self,
        trace_id: str,
        parent_version: str,
        *,
        meta: dict[str, Any] | None = None,
    ) -> str:
        with self._lock:
            index = self._require_trace(trace_id)
            if parent_version not in index["versions"]:
                raise UnknownTrace(f"trace {trace_id!r} has no version {parent_version!r}")
            version_id = f"v{len(index['versions']) + 1}"
            index["versions"][version_id] = {
                "parent": parent_version,
                "created_ms": now_ms(),
                "sealed": False,
                "seal_ms": None,
                "meta": meta or {},
            }
            self._next_seq[(trace_id, version_id)] = 0
            self._buffers[(trace_id, version_id)] = []
            self._write_index(trace_id)
        return version_id

    def record_inherit(
        self, trace_id: str, version_id: str, parent_version: str, from_seq: int, to_seq: int
    ) -> None:
        """Mark [from_seq, to_seq] of the parent log as shared by reference.

        The new version's own events continue at to_seq + 1.
        """
        with self._lock:
            self._require_version(trace_id, version_id)
            if to_seq < from_seq:
                return
            marker = {
                "inherit": {
                    "version": parent_version,
                    "from_seq": from_seq,
                    "to_seq": to_seq,
                }
            }
            path = self._trace_dir(trace_id) / f"{version_id}.jsonl"
            with path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(marker, sort_keys=True) + "\n")
            self._next_seq[(trace_id, version_id)] = to_seq + 1
            inherited = self._load_events_locked(trace_id, parent_version)
            self._inherited[(trace_id, version_id)] = [
                ev for ev in inherited if from_seq <= ev["seq"] <= to_seq
            ]
            self._cond.notify_all()

    def append(
        self,
        trace_id: str,
        version_id: str,
        *,
        call_id: str,
        parent_call_id: str | None,
        node: str,
        kind: str,
        stage: LifecycleStage,
        phase: AspectPhase,
        status: str,
        payload: Any = None,
        annotations: list[dict[str, Any]] | None = None,
    ) -> TraceEvent:
        with self._lock:
            version = self._require_version(trace_id, version_id)
            if version["sealed"]:
                raise SealedTrace(f"version {version_id} of {trace_id} is sealed")
            key = (trace_id, version_id)
            seq = self._next_seq.get(key, 0)
            self._next_seq[key] = seq + 1
            event = TraceEvent(
                trace_id=trace_id,
                seq=seq,
                ts_ms=now_ms(),
                call_id=call_id,
                parent_call_id=parent_call_id,
                node=node,
                kind=kind,
                stage=stage.value,
                phase=phase.value,
                status=status,
                payload=snapshot_value(payload),
                annotations=annotations or [],
            )
            line = json.dumps(event.as_dict(), sort_keys=True, ensure_ascii=False)
            path = self._trace_dir(trace_id) / f"{version_id}.jsonl"
            with path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
            self._buffers.setdefault(key, []).append(event.as_dict())
            self._cond.notify_all()
            return event

    def seal(self, trace_id: str, version_id: str) -> None:
        with self._lock:
            version = self._require_version(trace_id, version_id)
            if version["sealed"]:
                return
            version["sealed"] = True
            version["seal_ms"] = now_ms()
            self._write_index(trace_id)
            self._cond.notify_all()

    def is_sealed(self, trace_id: str, version_id: str) -> bool:
        with self._lock:
            return bool(self._require_version(trace_id, version_id)["sealed"])

    # -- reading -----------------------------------------------------------

    def _load_events_locked(self, trace_id: str, version_id: str) -> list[dict[str, Any]]:
        key = (trace_id, version_id)
        if key in self._buffers:
            return list(self._inherited.get(key, [])) + list(self._buffers[key])
        self._require_version(trace_id, version_id)
        path = self._trace_dir(trace_id) / f"{version_id}.jsonl"
        events: list[dict[str, Any]] = []
        if not path.is_file():
            return events
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            record = json.loads(line)
            if "inherit" in record:
                ref = record["inherit"]
                parent_events = self._load_events_locked(trace_id, ref["version"])
                events.extend(
                    ev for ev in parent_events if ref["from_seq"] <= ev["seq"] <= ref["to_seq"]
                )
            else:
                events.append(record)
        return events

    def events(self, trace_id: str, version_id: str) -> list[dict[str, Any]]:
        with self._lock:
            return self._load_events_locked(trace_id, version_id)

    def latest_version(self, trace_id: str) -> str:
        with self._lock:
            versions = self._require_trace(trace_id)["versions"]
            return max(versions, key=lambda v: int(v[1:]))

    def version_tree(self, trace_id: str) -> dict[str, Any]:
        with self._lock:
            index = self._require_trace(trace_id)
            return json.loads(json.dumps(index))

    def list_traces(self) -> list[dict[str, Any]]:
        with self._lock:
            out = []
            for trace_id in sorted(self._index):
                meta = self._index[trace_id]
                out.append(
                    {
                        "trace_id": trace_id,
                        "created_ms": meta["created_ms"],
                        "group_id": meta.get("group_id"),
                        "versions": sorted(meta["versions"], key=lambda v: int(v[1:])),
                    }
                )
            return out

    def graph(self, trace_id: str, version_id: str | None = None) -> ExecutionGraph:
        vid = version_id or self.latest_version(trace_id)
        return build_graph(trace_id, vid, self.events(trace_id, vid))

    def timing(self, trace_id: str, version_id: str | None = None) -> list[dict[str, Any]]:
        """Timing decomposition of a finished run; partial runs have no
        stable durations, so unsealed versions are refused."""
        vid = version_id or self.latest_version(trace_id)
        if not self.is_sealed(trace_id, vid):
            raise UnsealedTrace(f"version {vid} of {trace_id} is still running")
        return [row.as_dict() for row in timing_report(self.graph(trace_id, vid))]

    def find_call(self, trace_id: str, version_id: str, call_id: str) -> CallNode:
        graph = self.graph(trace_id, version_id)
        try:
            return graph.by_call_id[call_id]
        except KeyError:
            raise UnknownCall(f"trace {trace_id} has no call {call_id}")

    def stream(
        self, trace_id: str, version_id: str, from_seq: int = 0, poll_s: float = 0.2
    ) -> Iterator[dict[str, Any]]:
        """Yield events with seq >= from_seq, blocking for new ones until
        the version seals. Safe to re-enter with the last seen seq + 1."""
        cursor = from_seq
        while True:
            with self._lock:
                self._require_version(trace_id, version_id)
                events = self._load_events_locked(trace_id, version_id)
                pending = [ev for ev in events if ev["seq"] >= cursor]
                sealed = self._index[trace_id]["versions"][version_id]["sealed"]
                if not pending and not sealed:
                    self._cond.wait(timeout=poll_s)
                    continue
            for ev in pending:
                cursor = ev["seq"] + 1
                yield ev
            if sealed and not pending:
                return
            if sealed:
                # drain anything appended between snapshot and seal
                with self._lock:
                    events = self._load_events_locked(trace_id, version_id)
                    leftover = [ev for ev in events if ev["seq"] >= cursor]
                for ev in leftover:
                    cursor = ev["seq"] + 1
                    yield ev
                return


@dataclass
class PauseState:
    pause_id: str
    trace_id: str
    call_id: str
    node: str
    stage: str
    created_ms: int
    overrides: dict[str, Any] = field(default_factory=dict)
    released: bool = False


class BreakpointManager:
    """Stage-entry breakpoints for live traces.

    A matching call blocks at the joinpoint until resumed (optionally with
    argument overrides) or until the wait times out, at which point it
    continues unmodified.
    """

    def __init__(self, default_timeout_s: float = 300.0):
        self.default_timeout_s = default_timeout_s
        self._lock = threading.Lock()
        self._cond = threading.Condition(self._lock)
        self._breakpoints: dict[str, dict[str, Any]] = {}
        self._paused: dict[str, PauseState] = {}

    def set_breakpoint(self, node: str, stage: LifecycleStage) -> str:
        bp_id = "bp-" + new_id()
        with self._lock:
            self._breakpoints[bp_id] = {"node": node, "stage": stage.value}
        return bp_id

    def clear_breakpoint(self, bp_id: str) -> bool:
        with self._lock:
            return self._breakpoints.pop(bp_id, None) is not None

    def list_breakpoints(self) -> list[dict[str, Any]]:
        with self._lock:
            return [{"bp_id": k, **v} for k, v in sorted(self._breakpoints.items())]

    def list_paused(self) -> list[dict[str, Any]]:
        with self._lock:
            return [
                {
                    "pause_id": p.pause_id,
                    "trace_id": p.trace_id,
                    "call_id": p.call_id,
                    "node": p.node,
                    "stage": p.stage,
                    "created_ms": p.created_ms,
                }
                for p in self._paused.values()
            ]

    def check(
        self,
        trace_id: str,
        call_id: str,
        node: str,
        stage: LifecycleStage,
        timeout_s: float | None = None,
    ) -> dict[str, Any]:
        """Called at stage entry. Blocks when a breakpoint matches; returns
        argument overrides supplied by resume (empty when none)."""
        with self._lock:
            hit = any(
                bp["node"] == node and bp["stage"] == stage.value
                for bp in self._breakpoints.values()
            )
            if not hit:
                return {}
            pause = PauseState(
                pause_id="p-" + new_id(),
                trace_id=trace_id,
                call_id=call_id,
                node=node,
                stage=stage.value,
                created_ms=now_ms(),
            )
            self._paused[pause.pause_id] = pause
            self._cond.notify_all()
            deadline = now_ms() + int((timeout_s or self.default_timeout_s) * 1000)
            while not pause.released and now_ms() < deadline:
                self._cond.wait(timeout=0.1)
            self._paused.pop(pause.pause_id, None)
            return dict(pause.overrides)

    def resume(self, pause_id: str, overrides: dict[str, Any] | None = None) -> bool:
        with self._lock:
            pause = self._paused.get(pause_id)
            if pause is None:
                return False
            if overrides:
                pause.overrides.update(overrides)
            pause.released = True
            self._cond.notify_all()
            return True

    def resume_call(self, call_id: str, overrides: dict[str, Any] | None = None) -> bool:
        """Release the pause holding a given call, if any."""
        with self._lock:
            for pause in self._paused.values():
                if pause.call_id == call_id and not pause.released:
                    if overrides:
                        pause.overrides.update(overrides)
                    pause.released = True
                    self._cond.notify_all()
                    return True
        return False

    def wait_for_pause(self, trace_id: str, timeout_s: float = 5.0) -> PauseState | None:
        """Test/UI helper: block until some call of the trace pauses."""
        deadline = now_ms() + int(timeout_s * 1000)
        with self._lock:
            while now_ms() < deadline:
                for pause in self._paused.values():
                    if pause.trace_id == trace_id:
                        return pause
                self._cond.wait(timeout=0.1)
        return None

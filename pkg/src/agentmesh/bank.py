"""Trajectory bank: dedup, human review, knowledge export, prompt tuning.

The bank is an append-only JSONL ledger of operations; in-memory state is
a pure fold over that ledger, so a restart reconstructs exactly what the
operations said, and nothing else.

Records enter as semantic projections of trace subtrees. Two runs that
did the same thing collapse into one record with a bumped occurrence
count, keyed by a digest that ignores timestamps and identifiers.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .common import canonical_bytes, md5_hex, new_id, now_ms
from .errors import (
    InvalidRequest,
    InvalidTransition,
    ModelUnavailable,
    NoApprovedTraces,
    NodeNotFound,
    TemplateViolation,
    UnknownRecord,
    UnknownTemplate,
)
from .models import ChatMessage, ModelHub
from .nodes import USER_CALLER, NodeKind, Registry
from .prompts import EXCERPT_COUNT, clip_excerpt, render_optimizer
from .tracer import TraceStore, build_graph

PENDING = "pending"
ANNOTATED = "annotated"
APPROVED = "approved"
REJECTED = "rejected"

# legal moves of the review state machine; approved is terminal
TRANSITIONS = {
    (PENDING, ANNOTATED),
    (ANNOTATED, APPROVED),
    (PENDING, REJECTED),
    (ANNOTATED, REJECTED),
    (REJECTED, PENDING),
}

PRIORITIES = ("P0", "P1", "P2")

TEMPLATE_DIR = Path(__file__).parent / "templates"


def semantic_projection(
    events: list[dict[str, Any]],
    trace_id: str,
    version_id: str,
    *,
    root_call_id: str | None = None,
    origin: str = "root",
) -> dict[str, Any]:
    """Reduce a trace (or subtree) to what happened, order preserved,
    identity and timing stripped."""
    graph = build_graph(trace_id, version_id, events)
    if root_call_id is None:
        if not graph.roots:
            raise UnknownRecord(f"trace {trace_id} has no calls")
        root = graph.roots[0]
    else:
        root = graph.by_call_id.get(root_call_id)
        if root is None:
            raise UnknownRecord(f"trace {trace_id} has no call {root_call_id}")

    inputs: dict[str, Any] = {}
    outputs: dict[str, Any] = {}
    for ev in events:
        if ev["stage"] == "pre_process" and ev["phase"] == "before":
            inputs.setdefault(ev["call_id"], (ev.get("payload") or {}).get("arguments"))
        if ev["stage"] == "format_output" and ev["phase"] == "after":
            outputs[ev["call_id"]] = (ev.get("payload") or {}).get("output")

    calls = []
    stack = [root]
    while stack:
        node = stack.pop()
        calls.append(
            {
                "node": node.name,
                "kind": node.kind,
                "input": inputs.get(node.call_id),
                "output": outputs.get(node.call_id),
                "status": node.status,
            }
        )
        stack.extend(reversed(node.children))

    if root.parent_call_id is None:
        root_caller = USER_CALLER
    else:
        root_caller = graph.by_call_id[root.parent_call_id].name
    return {"calls": calls, "root_caller": root_caller, "origin": origin}


def projection_digest(projection: dict[str, Any]) -> str:
    return md5_hex(canonical_bytes(projection))


def compute_priority(projection: dict[str, Any]) -> str:
    """P0 is the clean, user-initiated, agent-bearing material reviewers
    should see first; oddities rank behind it."""
    if not any(c["kind"] == "agent" for c in projection["calls"]):
        return "P2"
    if projection["origin"] == "regenerated" or projection["root_caller"] != USER_CALLER:
        return "P1"
    return "P0"


@dataclass
class Template:
    name: str
    fields: list[dict[str, Any]]

    @classmethod
    def load(cls, path: Path) -> "Template":
        raw = json.loads(path.read_text(encoding="utf-8"))
        return cls(name=raw["name"], fields=raw["fields"])

    def validate(self, annotation: Any) -> None:
        if not isinstance(annotation, dict):
            raise TemplateViolation("annotation must be an object")
        known = {f["name"] for f in self.fields}
        extra = set(annotation) - known
        if extra:
            raise TemplateViolation(f"unknown annotation fields: {sorted(extra)}")
        for field_def in self.fields:
            name = field_def["name"]
            required = field_def.get("required", False)
            if name not in annotation or annotation[name] in (None, ""):
                if required:
                    raise TemplateViolation(f"missing required field '{name}'")
                continue
            value = annotation[name]
            ftype = field_def.get("type", "text")
            if ftype == "text":
                if not isinstance(value, str) or not value.strip():
                    raise TemplateViolation(f"field '{name}' must be non-empty text")
            elif ftype == "label":
                if not isinstance(value, list) or not all(
                    isinstance(v, str) and v for v in value
                ):
                    raise TemplateViolation(
                        f"field '{name}' must be a list of labels"
                    )


class Bank:
    def __init__(
        self,
        data_dir: str | Path,
        registry: Registry | None = None,
        store: TraceStore | None = None,
    ):
        self.registry = registry
        self.store = store
        self._dir = Path(data_dir) / "bank"
        self._dir.mkdir(parents=True, exist_ok=True)
        self._ledger = self._dir / "ledger.jsonl"
        self._lock = threading.RLock()
        self._records: dict[str, dict[str, Any]] = {}
        self._by_digest: dict[str, str] = {}
        self._prompts: dict[str, dict[str, Any]] = {}
        self._templates: dict[str, Template] = {}
        for path in sorted(TEMPLATE_DIR.glob("*.json")):
            tpl = Template.load(path)
            self._templates[tpl.name] = tpl
        self._replay()

    # -- ledger -----------------------------------------------------------

    def _append(self, op: dict[str, Any]) -> None:
        with self._ledger.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(op, sort_keys=True, ensure_ascii=False) + "\n")

    def _replay(self) -> None:
        if not self._ledger.is_file():
            return
        for line in self._ledger.read_text(encoding="utf-8").splitlines():
            if line.strip():
                self._fold(json.loads(line))
        # restore the active prompt of each agent onto the live registry
        if self.registry is not None:
            for agent, chain in self._prompts.items():
                active = chain.get("active")
                if active and active != "v1" and agent in self.registry:
                    text = chain["versions"][active]["text"]
                    self.registry.update_config(agent, "system_prompt", text)

    def _fold(self, op: dict[str, Any]) -> None:
        kind = op["op"]
        if kind == "deposit":
            record = op["record"]
            self._records[record["record_id"]] = record
            self._by_digest[record["digest"]] = record["record_id"]
        elif kind == "occurrence":
            record = self._records[op["record_id"]]
            record["occurrence_count"] += 1
            record["updated_ms"] = op["ms"]
        elif kind == "annotate":
            record = self._records[op["record_id"]]
            record["annotation"] = op["annotation"]
            if op.get("template"):
                record["template"] = op["template"]
            record["state"] = ANNOTATED
            record["updated_ms"] = op["ms"]
            record["audit"].append(
                {"op": "annotate", "ms": op["ms"], "note": op.get("note")}
            )
        elif kind == "transition":
            record = self._records[op["record_id"]]
            verdict = {APPROVED: "approve", REJECTED: "reject", PENDING: "reopen"}[op["to"]]
            record["audit"].append(
                {
                    "op": "transition",
                    "verdict": verdict,
                    "from": record["state"],
                    "to": op["to"],
                    "ms": op["ms"],
                    "note": op.get("note"),
                }
            )
            record["state"] = op["to"]
            record["updated_ms"] = op["ms"]
            if op["to"] == APPROVED:
                record["approved_ms"] = op["ms"]
            elif op["to"] == PENDING:
                record["annotation"] = None
                record["approved_ms"] = None
        elif kind == "prompt_version":
            chain = self._prompts.setdefault(
                op["agent"], {"agent": op["agent"], "active": None, "versions": {}}
            )
            chain["versions"][op["version"]] = {
                "version": op["version"],
                "text": op["text"],
                "created_ms": op["ms"],
                "applied": bool(op.get("applied", False)),
                "source": op.get("source", {}),
            }
            if op.get("applied"):
                chain["active"] = op["version"]
        elif kind == "prompt_apply":
            chain = self._prompts[op["agent"]]
            for version in chain["versions"].values():
                version["applied"] = version["version"] == op["version"]
            chain["active"] = op["version"]

    # -- deposits -----------------------------------------------------------

    def deposit_trace(
        self,
        trace_id: str,
        version_id: str | None = None,
        *,
        call_id: str | None = None,
        template: str = "qa",
    ) -> dict[str, Any]:
        if self.store is None:
            raise UnknownRecord("bank has no trace store attached")
        vid = version_id or self.store.latest_version(trace_id)
        events = self.store.events(trace_id, vid)
        meta = self.store.version_tree(trace_id)["versions"][vid].get("meta", {})
        origin = meta.get("origin", "root")
        projection = semantic_projection(
            events, trace_id, vid, root_call_id=call_id, origin=origin
        )
        return self.deposit_projection(
            projection, trace_id=trace_id, version_id=vid, template=template
        )

    def deposit_projection(
        self,
        projection: dict[str, Any],
        *,
        trace_id: str = "",
        version_id: str = "",
        template: str = "qa",
    ) -> dict[str, Any]:
        if template not in self._templates:
            raise UnknownTemplate(f"no annotation template named '{template}'")
        digest = projection_digest(projection)
        ms = now_ms()
        with self._lock:
            existing_id = self._by_digest.get(digest)
            if existing_id is not None:
                op = {"op": "occurrence", "record_id": existing_id, "ms": ms}
                self._append(op)
                self._fold(op)
                return dict(self._records[existing_id])
            record = {
                "record_id": "r-" + new_id(),
                "digest": digest,
                "trace_id": trace_id,
                "version_id": version_id,
                "priority": compute_priority(projection),
                "state": PENDING,
                "occurrence_count": 1,
                "projection": projection,
                "annotation": None,
                "template": template,
                "created_ms": ms,
                "updated_ms": ms,
                "approved_ms": None,
                "audit": [{"op": "deposit", "ms": ms, "note": None}],
            }
            op = {"op": "deposit", "record": record, "ms": ms}
            self._append(op)
            self._fold(op)
            return dict(self._records[record["record_id"]])

    # -- review -----------------------------------------------------------

    def _require(self, record_id: str) -> dict[str, Any]:
        record = self._records.get(record_id)
        if record is None:
            raise UnknownRecord(f"no bank record {record_id}")
        return record

    def annotate(
        self,
        record_id: str,
        annotation: dict[str, Any],
        template_id: str | None = None,
        note: str | None = None,
    ) -> dict[str, Any]:
        with self._lock:
            record = self._require(record_id)
            if record["state"] not in (PENDING, ANNOTATED):
                raise InvalidTransition(
                    f"cannot annotate a record in state '{record['state']}'"
                )
            name = template_id or record["template"]
            tpl = self._templates.get(name)
            if tpl is None:
                raise UnknownTemplate(f"no annotation template named '{name}'")
            tpl.validate(annotation)
            op = {
                "op": "annotate",
                "record_id": record_id,
                "annotation": annotation,
                "template": name,
                "note": note,
                "ms": now_ms(),
            }
            self._append(op)
            self._fold(op)
            return dict(self._records[record_id])

    def transition(
        self, record_id: str, to: str, note: str | None = None
    ) -> dict[str, Any]:
        with self._lock:
            record = self._require(record_id)
            move = (record["state"], to)
            if move not in TRANSITIONS:
                raise InvalidTransition(
                    f"cannot move record from '{record['state']}' to '{to}'"
                )
            op = {"op": "transition", "record_id": record_id, "to": to, "note": note, "ms": now_ms()}
            self._append(op)
            self._fold(op)
            return dict(self._records[record_id])

    def audit(
        self, record_id: str, verdict: str, note: str | None = None
    ) -> dict[str, Any]:
        """Reviewer verdict: approve moves Annotated forward, reject parks
        Pending or Annotated material."""
        v = str(verdict).lower()
        if v == "approve":
            return self.transition(record_id, APPROVED, note)
        if v == "reject":
            return self.transition(record_id, REJECTED, note)
        raise InvalidRequest(f"verdict must be 'approve' or 'reject', not {verdict!r}")

    def approve(self, record_id: str, note: str | None = None) -> dict[str, Any]:
        return self.transition(record_id, APPROVED, note)

    def reject(self, record_id: str, note: str | None = None) -> dict[str, Any]:
        return self.transition(record_id, REJECTED, note)

    def reopen(self, record_id: str, note: str | None = None) -> dict[str, Any]:
        """Rejected records come back as pending with annotation cleared,
        so a second reviewer starts from the raw projection."""
        return self.transition(record_id, PENDING, note)

    def audit_log(self, record_id: str) -> list[dict[str, Any]]:
        with self._lock:
            return list(self._require(record_id)["audit"])

    def get(self, record_id: str) -> dict[str, Any]:
        with self._lock:
            return dict(self._require(record_id))

    def list_records(
        self, state: str | None = None, priority: str | None = None
    ) -> list[dict[str, Any]]:
        with self._lock:
            records = [
                dict(r)
                for r in self._records.values()
                if (state is None or r["state"] == state)
                and (priority is None or r["priority"] == priority)
            ]
        records.sort(key=lambda r: (r["priority"], r["created_ms"], r["record_id"]))
        return records

    # -- knowledge ------------------------------------------------------------

    def _approved(self) -> list[dict[str, Any]]:
        return [r for r in self.list_records(state=APPROVED)]

    def export_knowledge(
        self,
        priority: str | None = None,
        template: str | None = None,
        since_ms: int | None = None,
    ) -> dict[str, Any]:
        """Samples from approved records only, annotation fields projected
        through the record's template. Pure function of bank state:
        exporting twice yields identical bytes. An empty bank exports an
        empty list."""
        with self._lock:
            approved = self._approved()
            samples = []
            for record in approved:
                if priority is not None and record["priority"] != priority:
                    continue
                if template is not None and record["template"] != template:
                    continue
                if since_ms is not None and record["created_ms"] < since_ms:
                    continue
                tpl = self._templates.get(record["template"])
                ann = record["annotation"] or {}
                if tpl is not None:
                    payload = {
                        f["name"]: ann.get(f["name"]) for f in tpl.fields if f["name"] in ann
                    }
                else:
                    payload = dict(ann)
                samples.append(
                    {
                        "sample_id": "s-" + record["record_id"],
                        "record_id": record["record_id"],
                        "payload": payload,
                        "template": record["template"],
                        "priority": record["priority"],
                        "trace_id": record["trace_id"],
                        "digest": record["digest"],
                        "deposited_at_ms": record["created_ms"],
                        "exported_at_ms": record["approved_ms"],
                    }
                )
            samples.sort(key=lambda s: (s["deposited_at_ms"], s["record_id"]))
            return {"count": len(samples), "samples": samples}

    def search_knowledge(self, query: str, limit: int = 3) -> list[dict[str, Any]]:
        needle = query.strip().lower()
        if not needle:
            return []
        matches = []
        for record in self._approved():
            ann = record["annotation"] or {}
            haystack = f"{ann.get('question', '')}\n{ann.get('answer', '')}".lower()
            if needle in haystack:
                matches.append(
                    {
                        "question": ann.get("question"),
                        "answer": ann.get("answer"),
                        "tags": ann.get("tags", []),
                    }
                )
        return matches[: max(limit, 0)]

    # -- prompt tuning ----------------------------------------------------------

    def _require_agent(self, agent_name: str) -> None:
        if self.registry is None or agent_name not in self.registry:
            raise NodeNotFound(f"no node named '{agent_name}'")
        spec = self.registry.resolve(agent_name)
        if spec.kind is not NodeKind.AGENT:
            raise NodeNotFound(f"'{agent_name}' is not an agent")

    def _ensure_chain(self, agent_name: str) -> dict[str, Any]:
        chain = self._prompts.get(agent_name)
        if chain is not None:
            return chain
        spec = self.registry.resolve(agent_name)
        baseline = spec.config.get("system_prompt") or spec.description
        op = {
            "op": "prompt_version",
            "agent": agent_name,
            "version": "v1",
            "text": baseline,
            "applied": True,
            "source": {"kind": "baseline"},
            "ms": now_ms(),
        }
        self._append(op)
        self._fold(op)
        return self._prompts[agent_name]

    def prompt_chain(self, agent_name: str) -> dict[str, Any]:
        with self._lock:
            self._require_agent(agent_name)
            chain = self._ensure_chain(agent_name)
            versions = sorted(
                chain["versions"].values(), key=lambda v: int(v["version"][1:])
            )
            return {
                "agent": agent_name,
                "active": chain["active"],
                "versions": [dict(v) for v in versions],
            }

    def optimize_prompt(
        self, agent_name: str, hub: ModelHub, binding: str | None = None
    ) -> dict[str, Any]:
        """Draft the next prompt version from approved knowledge; nothing
        is applied until apply_prompt says so. With no binding named, the
        agent's own model binding drives the rewrite."""
        with self._lock:
            self._require_agent(agent_name)
            if binding is None:
                binding = self._default_binding(agent_name)
            chain = self._ensure_chain(agent_name)
            approved = self._approved()
            if not approved:
                raise NoApprovedTraces("optimization needs approved records")
            excerpts = []
            for record in approved[:EXCERPT_COUNT]:
                ann = record["annotation"] or {}
                excerpts.append(
                    clip_excerpt(f"Q: {ann.get('question')}\nA: {ann.get('answer')}")
                )
            active = chain["active"] or "v1"
            current = chain["versions"][active]["text"]
            meta_prompt = render_optimizer(agent_name, current, excerpts)
            completion = hub.complete(binding, [ChatMessage("user", meta_prompt)])
            version = f"v{len(chain['versions']) + 1}"
            op = {
                "op": "prompt_version",
                "agent": agent_name,
                "version": version,
                "text": completion.strip(),
                "applied": False,
                "source": {
                    "kind": "optimized",
                    "binding": binding,
                    "excerpt_count": len(excerpts),
                },
                "ms": now_ms(),
            }
            self._append(op)
            self._fold(op)
            return dict(chain["versions"][version])

    def _default_binding(self, agent_name: str) -> str:
        spec = self.registry.resolve(agent_name)
        model = spec.model_node()
        if model and model in self.registry:
            binding = self.registry.resolve(model).config.get("binding")
            if isinstance(binding, str) and binding:
                return binding
        raise ModelUnavailable(
            f"agent '{agent_name}' has no model binding to optimize with"
        )

    def apply_prompt(self, agent_name: str, version: str) -> dict[str, Any]:
        with self._lock:
            self._require_agent(agent_name)
            chain = self._ensure_chain(agent_name)
            if version not in chain["versions"]:
                raise UnknownRecord(
                    f"agent '{agent_name}' has no prompt version '{version}'"
                )
            op = {"op": "prompt_apply", "agent": agent_name, "version": version, "ms": now_ms()}
            self._append(op)
            self._fold(op)
            text = chain["versions"][version]["text"]
            self.registry.update_config(agent_name, "system_prompt", text)
            return {"agent": agent_name, "active": version, "text": text}

"""Runtime: the lifecycle engine, builtin tools, and trajectory control.

This is where a registered mesh actually runs. Every call, root or
nested, passes through the same five-stage pipeline with aspect
joinpoints and trace events; regeneration re-drives the same pipeline
against a recorded version, replaying finished prefix work by reference.
"""

from __future__ import annotations

import copy
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .bank import Bank
from .common import json_roundtrip, new_id, now_ms
from .errors import (
    AgentMeshError,
    ModelUnavailable,
    NoEntrypoint,
    OverrideInvalid,
    UnknownCall,
    UnsealedTrace,
)
from .lifecycle import (
    Aspect,
    AspectPhase,
    AspectRegistry,
    CallRequest,
    CallResponse,
    CallStatus,
    LifecycleStage,
    StageError,
)
from .models import Binding, ChatMessage, ModelHub, build_binding
from .nodes import USER_CALLER, NodeKind, NodeSpec, Registry
from .planner import (
    DispatchResult,
    authorize,
    permission_failure_text,
    run_react,
)
from .scopes import ABSENT, ScopeStore
from .tracer import (
    ERROR,
    OK,
    RUNNING,
    BreakpointManager,
    ExecutionGraph,
    TraceStore,
    build_graph,
)

# -- builtin tool handlers ----------------------------------------------------


@dataclass
class ToolContext:
    request: CallRequest
    spec: NodeSpec
    runtime: "Runtime"


def handler_echo(arguments: dict[str, Any], ctx: ToolContext) -> Any:
    return dict(arguments)


def handler_fixed(arguments: dict[str, Any], ctx: ToolContext) -> Any:
    return ctx.spec.config.get("result")


def handler_sleep(arguments: dict[str, Any], ctx: ToolContext) -> Any:
    seconds = float(arguments.get("seconds", ctx.spec.config.get("seconds", 0.01)))
    seconds = min(max(seconds, 0.0), 10.0)  # guard against runaway configs
    time.sleep(seconds)
    return {"slept_s": seconds}


def _tool_root(ctx: ToolContext) -> Path:
    configured = ctx.spec.config.get("root")
    root = Path(configured) if configured else ctx.runtime.files_dir
    root.mkdir(parents=True, exist_ok=True)
    return root.resolve()


def handler_read_file(arguments: dict[str, Any], ctx: ToolContext) -> Any:
    rel = arguments.get("path")
    if not isinstance(rel, str) or not rel:
        raise ValueError("read_file needs a 'path' argument")
    root = _tool_root(ctx)
    target = (root / rel).resolve()
    if root != target and root not in target.parents:
        raise ValueError("path escapes the tool root")
    return {"path": rel, "content": target.read_text(encoding="utf-8")}


def handler_list_files(arguments: dict[str, Any], ctx: ToolContext) -> Any:
    root = _tool_root(ctx)
    return {"files": sorted(p.name for p in root.iterdir() if p.is_file())}


def handler_knowledge_lookup(arguments: dict[str, Any], ctx: ToolContext) -> Any:
    query = str(arguments.get("query", ""))
    limit = int(arguments.get("limit", 3))
    bank = ctx.runtime.bank
    matches = bank.search_knowledge(query, limit=limit) if bank else []
    return {"query": query, "matches": matches, "count": len(matches)}


TOOL_HANDLERS = {
    "echo": handler_echo,
    "fixed": handler_fixed,
    "sleep": handler_sleep,
    "read_file": handler_read_file,
    "list_files": handler_list_files,
    "knowledge_lookup": handler_knowledge_lookup,
}


# -- replay ------------------------------------------------------------------


@dataclass
class Directive:
    mode: str  # "live" | "replay"
    call_id: str | None = None
    argument_overrides: dict[str, Any] | None = None
    extra_overrides: dict[str, Any] = field(default_factory=dict)
    recorded_status: str | None = None
    recorded_output: Any = None


LIVE_FRESH = Directive(mode="live")

OVERRIDE_KEYS = {"arguments", "system_prompt", "model_binding"}


class ReplayController:
    """Guides a regeneration run against its parent version.

    Matching is positional: calls start in the same order as the parent
    until the target, because everything before the target re-executes
    the same recorded plan. Finished calls replay from the log, in-flight
    ancestors re-run with their already-inherited joinpoints muted, the
    target runs live with overrides, and everything after is fresh.
    """

    def __init__(
        self,
        events: list[dict[str, Any]],
        graph: ExecutionGraph,
        target_call_id: str,
        overrides: dict[str, Any],
    ):
        self._lock = threading.Lock()
        self.overrides = overrides
        target = graph.by_call_id[target_call_id]
        self.target_begin = target.first_seq
        self._order: list[dict[str, Any]] = []
        self._done = False
        self._cursor = 0

        by_call: dict[str, list[dict[str, Any]]] = {}
        for ev in events:
            by_call.setdefault(ev["call_id"], []).append(ev)

        def subtree_size(node) -> int:
            return 1 + sum(subtree_size(c) for c in node.children)

        self.suppressed: dict[str, set[tuple[str, str]]] = {}
        for node in graph.walk():
            evs = by_call.get(node.call_id, [])
            last_seq = max(ev["seq"] for ev in evs)
            entry: dict[str, Any] = {
                "call_id": node.call_id,
                "name": node.name,
                "first_seq": node.first_seq,
                "last_seq": last_seq,
                "subtree": subtree_size(node),
            }
            if last_seq < self.target_begin:
                final = evs[-1]
                entry["recorded_status"] = final["status"]
                entry["recorded_output"] = (final.get("payload") or {}).get("output")
            elif node.first_seq < self.target_begin:
                self.suppressed[node.call_id] = {
                    (ev["stage"], ev["phase"])
                    for ev in evs
                    if ev["seq"] < self.target_begin
                }
            self._order.append(entry)

        root = graph.roots[0]
        root_events = by_call[root.call_id]
        first = min(root_events, key=lambda ev: ev["seq"])
        self.root_name = root.name
        self.root_arguments = copy.deepcopy(
            (first.get("payload") or {}).get("arguments") or {}
        )

    def should_emit(self, call_id: str, stage: str, phase: str) -> bool:
        muted = self.suppressed.get(call_id)
        return muted is None or (stage, phase) not in muted

    def on_call_start(self, callee: str) -> Directive:
        with self._lock:
            if self._done or self._cursor >= len(self._order):
                return LIVE_FRESH
            entry = self._order[self._cursor]
            if entry["name"] != callee:
                # plan diverged before the target; stop guiding, run live
                self._done = True
                return LIVE_FRESH
            if entry["last_seq"] < self.target_begin:
                self._cursor += entry["subtree"]
                return Directive(
                    mode="replay",
                    recorded_status=entry["recorded_status"],
                    recorded_output=copy.deepcopy(entry["recorded_output"]),
                )
            self._cursor += 1
            if entry["first_seq"] == self.target_begin:
                self._done = True
                extra = {
                    k: v for k, v in self.overrides.items() if k != "arguments"
                }
                return Directive(
                    mode="live",
                    call_id=entry["call_id"],
                    argument_overrides=self.overrides.get("arguments"),
                    extra_overrides=extra,
                )
            if entry["first_seq"] < self.target_begin:
                return Directive(mode="live", call_id=entry["call_id"])
            self._done = True
            return LIVE_FRESH


class TraceSession:
    """Per-run handle binding the engine to one (trace, version) log."""

    def __init__(
        self,
        store: TraceStore,
        trace_id: str,
        version_id: str,
        controller: ReplayController | None = None,
    ):
        self.store = store
        self.trace_id = trace_id
        self.version_id = version_id
        self.controller = controller

    def directive_for(self, callee: str) -> Directive:
        if self.controller is None:
            return LIVE_FRESH
        return self.controller.on_call_start(callee)

    def emit(
        self,
        request: CallRequest,
        spec: NodeSpec,
        stage: LifecycleStage,
        phase: AspectPhase,
        status: str,
        payload: Any,
        annotations: list[dict[str, Any]],
    ) -> None:
        if self.controller is not None and not self.controller.should_emit(
            request.call_id, stage.value, phase.value
        ):
            return
        self.store.append(
            self.trace_id,
            self.version_id,
            call_id=request.call_id,
            parent_call_id=request.parent_call_id,
            node=spec.name,
            kind=spec.kind.value,
            stage=stage,
            phase=phase,
            status=status,
            payload=payload,
            annotations=annotations,
        )


# -- runtime ------------------------------------------------------------------


@dataclass
class RuntimeSettings:
    max_call_depth: int = 32
    max_react_rounds: int = 16
    fail_streak_limit: int = 3
    parse_retry_limit: int = 3
    breakpoint_timeout_s: float = 300.0

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "RuntimeSettings":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in raw.items() if k in known})


@dataclass
class ChatResult:
    trace_id: str
    version_id: str
    status: str
    output: Any
    error_detail: str | None
    duration_ms: int
    timing: dict[str, float] = field(default_factory=dict)

    @property
    def answer(self) -> Any:
        if isinstance(self.output, dict):
            return self.output.get("answer", self.output)
        return self.output

    def as_dict(self) -> dict[str, Any]:
        return {
            "trace_id": self.trace_id,
            "version_id": self.version_id,
            "status": self.status,
            "answer": self.answer,
            "output": self.output,
            "error_detail": self.error_detail,
            "duration_ms": self.duration_ms,
            "timing": self.timing,
        }


class Runtime:
    """Owns the registry, stores, model hub, and the call engine."""

    def __init__(
        self,
        data_dir: str | Path,
        registry: Registry | None = None,
        settings: RuntimeSettings | None = None,
    ):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.files_dir = self.data_dir / "files"
        self.registry = registry or Registry()
        self.settings = settings or RuntimeSettings()
        self.scopes = ScopeStore()
        self.hub = ModelHub()
        self.aspects = AspectRegistry()
        self.store = TraceStore(self.data_dir)
        self.breakpoints = BreakpointManager(self.settings.breakpoint_timeout_s)
        self.bank = Bank(self.data_dir, registry=self.registry, store=self.store)
        self._handlers = dict(TOOL_HANDLERS)

    # -- wiring -----------------------------------------------------------

    def add_binding(self, name: str, binding: Binding) -> None:
        self.hub.add(name, binding)

    def add_binding_config(self, name: str, config: dict[str, Any]) -> None:
        self.hub.add(name, build_binding(name, config))

    def register_tool_handler(self, name: str, fn) -> None:
        self._handlers[name] = fn

    def add_aspect(self, stage, phase, selector, handler) -> str:
        return self.aspects.register(
            Aspect(stage=stage, phase=phase, selector=selector, handler=handler)
        )

    # -- entrypoints --------------------------------------------------------

    def chat(
        self,
        query: str,
        *,
        agent: str | None = None,
        group_id: str | None = None,
        arguments: dict[str, Any] | None = None,
    ) -> ChatResult:
        trace_id, version_id = self._open_chat(query, agent=agent, group_id=group_id)
        entry = agent or self.registry.entrypoint
        args: dict[str, Any] = {"query": query}
        if arguments:
            args.update(arguments)
        return self._run(trace_id, version_id, entry, args, group_id, None)

    def start_chat(
        self,
        query: str,
        *,
        agent: str | None = None,
        group_id: str | None = None,
    ) -> tuple[str, str, threading.Thread]:
        """Kick off a chat and return immediately; stream the trace to
        follow it."""
        trace_id, version_id = self._open_chat(query, agent=agent, group_id=group_id)
        entry = agent or self.registry.entrypoint
        thread = threading.Thread(
            target=self._run,
            args=(trace_id, version_id, entry, {"query": query}, group_id, None),
            daemon=True,
        )
        thread.start()
        return trace_id, version_id, thread

    def _open_chat(
        self, query: str, *, agent: str | None, group_id: str | None
    ) -> tuple[str, str]:
        entry = agent or self.registry.entrypoint
        if entry is None:
            raise NoEntrypoint("no entrypoint configured and no agent given")
        self.registry.resolve(entry)
        return self.store.begin_trace(
            group_id=group_id, meta={"query": query, "entry": entry}
        )

    def regenerate(
        self,
        trace_id: str,
        target_call_id: str,
        *,
        version_id: str | None = None,
        overrides: dict[str, Any] | None = None,
    ) -> ChatResult:
        new_version, controller, root_name, root_args, group_id = self._prepare_regen(
            trace_id, target_call_id, version_id, overrides
        )
        return self._run(
            trace_id, new_version, root_name, root_args, group_id, controller
        )

    def start_regenerate(
        self,
        trace_id: str,
        target_call_id: str,
        *,
        version_id: str | None = None,
        overrides: dict[str, Any] | None = None,
    ) -> tuple[str, str, threading.Thread]:
        new_version, controller, root_name, root_args, group_id = self._prepare_regen(
            trace_id, target_call_id, version_id, overrides
        )
        thread = threading.Thread(
            target=self._run,
            args=(trace_id, new_version, root_name, root_args, group_id, controller),
            daemon=True,
        )
        thread.start()
        return trace_id, new_version, thread

    def _prepare_regen(
        self,
        trace_id: str,
        target_call_id: str,
        version_id: str | None,
        overrides: dict[str, Any] | None,
    ):
        overrides = overrides or {}
        base_version = version_id or self.store.latest_version(trace_id)
        if not self.store.is_sealed(trace_id, base_version):
            raise UnsealedTrace(
                f"version {base_version} of {trace_id} is still running"
            )
        events = self.store.events(trace_id, base_version)
        graph = build_graph(trace_id, base_version, events)
        target = graph.by_call_id.get(target_call_id)
        if target is None:
            raise UnknownCall(f"trace {trace_id} has no call {target_call_id}")
        self._validate_overrides(target, overrides)
        controller = ReplayController(events, graph, target_call_id, overrides)
        new_version = self.store.new_version(
            trace_id,
            base_version,
            meta={
                "origin": "regenerated",
                "target_call_id": target_call_id,
                "override_keys": sorted(overrides),
            },
        )
        self.store.record_inherit(
            trace_id, new_version, base_version, 0, controller.target_begin - 1
        )
        group_id = self.store.version_tree(trace_id).get("group_id")
        return (
            new_version,
            controller,
            controller.root_name,
            controller.root_arguments,
            group_id,
        )

    def _validate_overrides(self, target, overrides: dict[str, Any]) -> None:
        unknown = set(overrides) - OVERRIDE_KEYS
        if unknown:
            raise OverrideInvalid(f"unknown override keys: {sorted(unknown)}")
        if "arguments" in overrides:
            if not isinstance(overrides["arguments"], dict):
                raise OverrideInvalid("arguments override must be an object")
            try:
                json_roundtrip(overrides["arguments"])
            except Exception:
                raise OverrideInvalid("arguments override must be JSON data")
        if "system_prompt" in overrides:
            if target.kind != NodeKind.AGENT.value:
                raise OverrideInvalid(
                    f"system_prompt override only applies to agents, "
                    f"target {target.name} is a {target.kind}"
                )
            if not isinstance(overrides["system_prompt"], str):
                raise OverrideInvalid("system_prompt override must be a string")
        if "model_binding" in overrides:
            name = overrides["model_binding"]
            if not isinstance(name, str):
                raise OverrideInvalid("model_binding override must be a string")
            if target.kind == NodeKind.LLM.value:
                try:
                    self.hub.get(name)
                except AgentMeshError:
                    raise OverrideInvalid(f"no model binding named '{name}'")
            elif target.kind == NodeKind.AGENT.value:
                if name not in self.registry or (
                    self.registry.resolve(name).kind is not NodeKind.LLM
                ):
                    raise OverrideInvalid(
                        f"'{name}' is not a registered llm node"
                    )
            else:
                raise OverrideInvalid(
                    f"model_binding override does not apply to {target.kind} nodes"
                )

    # -- the engine ---------------------------------------------------------

    def _run(
        self,
        trace_id: str,
        version_id: str,
        entry: str,
        arguments: dict[str, Any],
        group_id: str | None,
        controller: ReplayController | None,
    ) -> ChatResult:
        session = TraceSession(self.store, trace_id, version_id, controller)
        request = CallRequest(
            request_id=trace_id,
            call_id="c-" + new_id(),
            caller=USER_CALLER,
            callee=entry,
            arguments=dict(arguments),
            group_id=group_id,
            scopes=self.scopes,
        )
        begin = now_ms()
        try:
            response = self.call_node(session, request)
        finally:
            self.store.seal(trace_id, version_id)
            self.scopes.drop_request(trace_id)
        return ChatResult(
            trace_id=trace_id,
            version_id=version_id,
            status=response.status.value,
            output=response.output,
            error_detail=response.error_detail,
            duration_ms=now_ms() - begin,
            timing=dict(response.timing),
        )

    def call_node(self, session: TraceSession, request: CallRequest) -> CallResponse:
        spec = self.registry.resolve(request.callee)
        if request.caller != USER_CALLER:
            caller_spec = self.registry.resolve(request.caller)
            if not authorize(self.registry, caller_spec, request.callee):
                return CallResponse(
                    CallStatus.ERROR,
                    error_detail=permission_failure_text(
                        request.caller, request.callee
                    ),
                )
        if len(request.call_chain) > self.settings.max_call_depth:
            return CallResponse(
                CallStatus.ERROR,
                error_detail=(
                    f"max call depth exceeded ({self.settings.max_call_depth})"
                ),
            )

        directive = session.directive_for(request.callee)
        if directive.mode == "replay":
            status = (
                CallStatus.OK if directive.recorded_status == OK else CallStatus.ERROR
            )
            detail = None
            if status is CallStatus.ERROR and isinstance(
                directive.recorded_output, dict
            ):
                detail = directive.recorded_output.get("error")
            return CallResponse(
                status, output=directive.recorded_output, error_detail=detail
            )
        if directive.call_id:
            request.call_id = directive.call_id
        if directive.argument_overrides:
            request.arguments.update(copy.deepcopy(directive.argument_overrides))
        if directive.extra_overrides:
            request.overrides.update(directive.extra_overrides)

        return self._lifecycle(session, request, spec)

    def _lifecycle(
        self, session: TraceSession, request: CallRequest, spec: NodeSpec
    ) -> CallResponse:
        failed: StageError | None = None
        output: Any = None
        stage_ms: dict[str, float] = {}

        t0 = time.perf_counter()
        self._stage_begin(session, request, spec, LifecycleStage.PRE_PROCESS)
        try:
            self._pre_process(request, spec)
        except Exception as exc:
            failed = self._wrap(LifecycleStage.PRE_PROCESS, exc)
        self._stage_end(
            session,
            request,
            spec,
            LifecycleStage.PRE_PROCESS,
            failed,
            {"arguments": request.arguments}
            if failed is None
            else {"error": failed.detail},
        )
        stage_ms[LifecycleStage.PRE_PROCESS.value] = (time.perf_counter() - t0) * 1000

        if failed is None:
            t0 = time.perf_counter()
            self._stage_begin(session, request, spec, LifecycleStage.PRE_SAVE_DATA)
            try:
                self._pre_save_data(request)
            except Exception as exc:
                failed = self._wrap(LifecycleStage.PRE_SAVE_DATA, exc)
            self._stage_end(
                session,
                request,
                spec,
                LifecycleStage.PRE_SAVE_DATA,
                failed,
                {"arguments": request.arguments}
                if failed is None
                else {"error": failed.detail},
            )
            stage_ms[LifecycleStage.PRE_SAVE_DATA.value] = (
                time.perf_counter() - t0
            ) * 1000

        if failed is None:
            t0 = time.perf_counter()
            self._stage_begin(session, request, spec, LifecycleStage.EXECUTE)
            try:
                output = self._execute(session, request, spec)
            except Exception as exc:
                failed = self._wrap(LifecycleStage.EXECUTE, exc)
            self._stage_end(
                session,
                request,
                spec,
                LifecycleStage.EXECUTE,
                failed,
                {"output": output} if failed is None else {"error": failed.detail},
            )
            stage_ms[LifecycleStage.EXECUTE.value] = (time.perf_counter() - t0) * 1000

        # a failed execute skips post-processing entirely
        if failed is None:
            t0 = time.perf_counter()
            self._stage_begin(session, request, spec, LifecycleStage.POST_PROCESS)
            try:
                output = self._post_process(request, spec, output)
            except Exception as exc:
                failed = self._wrap(LifecycleStage.POST_PROCESS, exc)
            self._stage_end(
                session,
                request,
                spec,
                LifecycleStage.POST_PROCESS,
                failed,
                {"output": output} if failed is None else {"error": failed.detail},
            )
            stage_ms[LifecycleStage.POST_PROCESS.value] = (
                time.perf_counter() - t0
            ) * 1000

        # format_output always runs: on failure it shapes the error envelope
        t0 = time.perf_counter()
        self._stage_begin(session, request, spec, LifecycleStage.FORMAT_OUTPUT)
        final: Any
        if failed is None:
            try:
                final = self._format_output(spec, output)
            except Exception as exc:
                failed = self._wrap(LifecycleStage.FORMAT_OUTPUT, exc)
        if failed is not None:
            final = {"error": failed.detail}
            final.update(json_roundtrip(failed.extra))
        self._stage_end(
            session, request, spec, LifecycleStage.FORMAT_OUTPUT, failed, {"output": final}
        )
        stage_ms[LifecycleStage.FORMAT_OUTPUT.value] = (time.perf_counter() - t0) * 1000

        return CallResponse(
            status=CallStatus.ERROR if failed else CallStatus.OK,
            output=final,
            error_detail=failed.detail if failed else None,
            timing=stage_ms,
        )

    @staticmethod
    def _wrap(stage: LifecycleStage, exc: Exception) -> StageError:
        if isinstance(exc, StageError):
            return exc
        return StageError(stage, str(exc) or exc.__class__.__name__)

    def _stage_begin(
        self,
        session: TraceSession,
        request: CallRequest,
        spec: NodeSpec,
        stage: LifecycleStage,
    ) -> None:
        merged = self.breakpoints.check(
            session.trace_id,
            request.call_id,
            spec.name,
            stage,
            self.settings.breakpoint_timeout_s,
        )
        if merged:
            request.arguments.update(merged)
        annotations = self.aspects.fire(
            spec.name, spec.kind, stage, AspectPhase.BEFORE, request, None
        )
        session.emit(
            request,
            spec,
            stage,
            AspectPhase.BEFORE,
            RUNNING,
            {"arguments": request.arguments},
            annotations,
        )

    def _stage_end(
        self,
        session: TraceSession,
        request: CallRequest,
        spec: NodeSpec,
        stage: LifecycleStage,
        failed: StageError | None,
        payload: Any,
    ) -> None:
        status = ERROR if failed is not None else OK
        interim = CallResponse(
            CallStatus.ERROR if failed else CallStatus.OK,
            output=payload,
            error_detail=failed.detail if failed else None,
        )
        annotations = self.aspects.fire(
            spec.name, spec.kind, stage, AspectPhase.AFTER, request, interim
        )
        session.emit(request, spec, stage, AspectPhase.AFTER, status, payload, annotations)

    # -- stages ---------------------------------------------------------------

    def _pre_process(self, request: CallRequest, spec: NodeSpec) -> None:
        if not isinstance(request.arguments, dict):
            raise StageError(LifecycleStage.PRE_PROCESS, "arguments must be an object")
        for key, value in spec.config.get("argument_defaults", {}).items():
            request.arguments.setdefault(key, value)
        if spec.kind is NodeKind.AGENT and "query" not in request.arguments:
            raise StageError(
                LifecycleStage.PRE_PROCESS, "agent call needs a 'query' argument"
            )
        if spec.kind is NodeKind.LLM:
            if "messages" not in request.arguments:
                prompt = request.arguments.get("prompt")
                if not isinstance(prompt, str):
                    raise StageError(
                        LifecycleStage.PRE_PROCESS,
                        "llm call needs 'messages' or 'prompt'",
                    )
                request.arguments["messages"] = [{"role": "user", "content": prompt}]
            msgs = request.arguments["messages"]
            if not isinstance(msgs, list) or not all(
                isinstance(m, dict) and "role" in m and "content" in m for m in msgs
            ):
                raise StageError(
                    LifecycleStage.PRE_PROCESS,
                    "messages must be a list of {role, content} objects",
                )

    def _pre_save_data(self, request: CallRequest) -> None:
        count = request.get_shared_data("call_count")
        base = 0 if count is ABSENT else int(count)
        request.set_shared_data("call_count", base + 1)

    def _execute(
        self, session: TraceSession, request: CallRequest, spec: NodeSpec
    ) -> Any:
        if spec.kind is NodeKind.TOOL:
            handler_name = spec.config.get("handler")
            handler = self._handlers.get(handler_name)
            if handler is None:
                raise StageError(
                    LifecycleStage.EXECUTE, f"unknown tool handler {handler_name!r}"
                )
            ctx = ToolContext(request=request, spec=spec, runtime=self)
            return handler(request.arguments, ctx)

        if spec.kind is NodeKind.LLM:
            binding = request.overrides.get("model_binding") or spec.config.get(
                "binding"
            )
            if not binding:
                raise StageError(
                    LifecycleStage.EXECUTE,
                    f"llm node '{spec.name}' has no binding configured",
                )
            messages = [
                ChatMessage(m["role"], str(m["content"]))
                for m in request.arguments["messages"]
            ]
            return {"completion": self.hub.complete(binding, messages)}

        if spec.kind is NodeKind.FLOW:
            return self._run_flow(session, request, spec)

        # agent
        mode = spec.config.get("planning_mode", "react")
        if mode == "fixed_flow":
            return self._run_flow(session, request, spec)
        return self._run_agent(session, request, spec)

    def _run_flow(
        self, session: TraceSession, request: CallRequest, spec: NodeSpec
    ) -> Any:
        steps = spec.config.get("steps")
        if not isinstance(steps, list) or not steps:
            raise StageError(
                LifecycleStage.EXECUTE, f"'{spec.name}' has no steps configured"
            )
        output: Any = None
        for i, step in enumerate(steps):
            callee = step.get("callee")
            if not isinstance(callee, str):
                raise StageError(
                    LifecycleStage.EXECUTE, f"step {i} of '{spec.name}' has no callee"
                )
            args = step.get("arguments", request.arguments)
            child = request.child(callee, args)
            response = self.call_node(session, child)
            if not response.ok:
                raise StageError(
                    LifecycleStage.EXECUTE,
                    f"step {i} ({callee}) failed: {response.error_detail}",
                )
            output = response.output
        return output

    def _run_agent(
        self, session: TraceSession, request: CallRequest, spec: NodeSpec
    ) -> Any:
        model_node = request.overrides.get("model_binding") or spec.model_node()
        if not model_node:
            raise StageError(
                LifecycleStage.EXECUTE,
                f"agent '{spec.name}' has no model binding configured",
            )

        def complete(messages: list[ChatMessage]) -> str:
            child = request.child(
                model_node, {"messages": [m.as_dict() for m in messages]}
            )
            response = self.call_node(session, child)
            if not response.ok:
                raise ModelUnavailable(
                    f"model call failed: {response.error_detail}"
                )
            return response.output["completion"]

        def dispatch(callee: str, arguments: dict[str, Any]) -> DispatchResult:
            child = request.child(callee, arguments)
            try:
                response = self.call_node(session, child)
            except AgentMeshError as exc:
                return DispatchResult(ok=False, error_detail=str(exc))
            if response.ok:
                return DispatchResult(ok=True, output=response.output)
            return DispatchResult(ok=False, error_detail=response.error_detail)

        cfg = spec.config
        outcome = run_react(
            self.registry,
            spec,
            str(request.arguments["query"]),
            dispatch,
            complete,
            max_rounds=int(cfg.get("max_react_rounds", self.settings.max_react_rounds)),
            fail_streak_limit=int(
                cfg.get("fail_streak_limit", self.settings.fail_streak_limit)
            ),
            retry_limit=int(cfg.get("retry_limit", self.settings.parse_retry_limit)),
            system_prompt=request.overrides.get("system_prompt"),
        )
        if not outcome.ok:
            # the loop failed; hand the transcript to the caller with the error
            raise StageError(
                LifecycleStage.EXECUTE,
                outcome.error_detail or "reasoning loop failed",
                extra={"rounds": outcome.rounds, "memory": outcome.memory.as_dict()},
            )
        return {
            "answer": outcome.answer,
            "rounds": outcome.rounds,
            "memory": outcome.memory.as_dict(),
        }

    def _post_process(self, request: CallRequest, spec: NodeSpec, output: Any) -> Any:
        request.set_shared_data("last_output_node", spec.name)
        return output

    def _format_output(self, spec: NodeSpec, output: Any) -> Any:
        if spec.kind is NodeKind.AGENT and isinstance(output, dict) and "answer" in output:
            return {"answer": output["answer"]}
        if isinstance(output, dict):
            return json_roundtrip(output)
        return {"result": json_roundtrip(output)}

    # -- inspection -----------------------------------------------------------

    def answer_of(self, trace_id: str, version_id: str | None = None) -> Any:
        vid = version_id or self.store.latest_version(trace_id)
        events = self.store.events(trace_id, vid)
        graph = build_graph(trace_id, vid, events)
        if not graph.roots:
            return None
        root_id = graph.roots[0].call_id
        for ev in reversed(events):
            if (
                ev["call_id"] == root_id
                and ev["stage"] == LifecycleStage.FORMAT_OUTPUT.value
                and ev["phase"] == AspectPhase.AFTER.value
            ):
                return (ev.get("payload") or {}).get("output")
        return None

    def topology_report(self) -> dict[str, Any]:
        nodes = [
            {
                "name": spec.name,
                "kind": spec.kind.value,
                "description": spec.description,
                "permitted_callees": list(spec.permitted_callees),
                "model": spec.model_node(),
            }
            for spec in self.registry
        ]
        issues = [issue.as_dict() for issue in self.registry.validate_topology()]
        return {
            "entrypoint": self.registry.entrypoint,
            "nodes": nodes,
            "permission_edges": self.registry.permission_edges(),
            "binding_edges": self.registry.binding_edges(),
            "issues": issues,
        }

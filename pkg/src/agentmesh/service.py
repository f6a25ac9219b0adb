"""HTTP surface: JSON envelope API, SSE trace streaming, static UI.

Every JSON response wears the same envelope: {"ok", "data", "error"}.
Domain errors map to stable HTTP statuses by their error code; anything
unexpected is a 500 with code "internal_error".

The server binds loopback unless explicitly told otherwise.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from fastapi import Body, FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles

from .errors import AgentMeshError, InvalidRequest, NodeNotFound, UnknownCall
from .lifecycle import LifecycleStage
from .runtime import Runtime
from .tracer import export_dot, normalize_graph, structure_checksum

ERROR_STATUS = {
    "unknown_trace": 404,
    "unknown_call": 404,
    "node_not_found": 404,
    "unknown_record": 404,
    "unknown_template": 404,
    "invalid_transition": 409,
    "override_invalid": 409,
    "unsealed_trace": 409,
    "sealed_trace": 409,
    "no_approved_traces": 409,
    "template_violation": 422,
    "no_entrypoint": 503,
    "model_unavailable": 503,
}


def ok(data: Any) -> dict[str, Any]:
    return {"ok": True, "data": data, "error": None}


def fail(code: str, message: str, status: int, **extra: Any) -> JSONResponse:
    error = {"code": code, "message": message}
    error.update(extra)
    return JSONResponse(
        status_code=status,
        content={"ok": False, "data": None, "error": error},
    )


def create_app(runtime: Runtime, frontend_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="agentmesh", docs_url=None, redoc_url=None)

    @app.exception_handler(AgentMeshError)
    def domain_error(_request: Request, exc: AgentMeshError) -> JSONResponse:
        return fail(exc.code, str(exc), ERROR_STATUS.get(exc.code, 400))

    @app.exception_handler(Exception)
    def unexpected_error(_request: Request, exc: Exception) -> JSONResponse:
        return fail("internal_error", f"{exc.__class__.__name__}: {exc}", 500)

    # -- health / topology -------------------------------------------------

    @app.get("/health")
    def health() -> dict[str, Any]:
        return ok({"service": "agentmesh", "nodes": len(runtime.registry.names())})

    @app.get("/mas/topology")
    def topology() -> dict[str, Any]:
        return ok(runtime.topology_report())

    # -- chat ----------------------------------------------------------------

    @app.post("/chat")
    def chat(payload: dict[str, Any] = Body(...)) -> Any:
        query = payload.get("query")
        if not isinstance(query, str) or not query.strip():
            raise InvalidRequest("chat needs a non-empty 'query'")
        result = runtime.chat(
            query,
            agent=payload.get("agent"),
            group_id=payload.get("group_id"),
            arguments=payload.get("arguments"),
        )
        if result.status != "ok":
            # the trace of the failed run still exists and is referenced
            return fail(
                "runtime_error",
                result.error_detail or "run failed",
                500,
                trace_id=result.trace_id,
                version_id=result.version_id,
            )
        return ok(result.as_dict())

    @app.post("/chat/start")
    def chat_start(payload: dict[str, Any] = Body(...)) -> dict[str, Any]:
        query = payload.get("query")
        if not isinstance(query, str) or not query.strip():
            raise InvalidRequest("chat needs a non-empty 'query'")
        trace_id, version_id, _thread = runtime.start_chat(
            query, agent=payload.get("agent"), group_id=payload.get("group_id")
        )
        return ok({"trace_id": trace_id, "version_id": version_id})

    # -- traces ----------------------------------------------------------------

    @app.get("/traces")
    def traces() -> dict[str, Any]:
        return ok({"traces": runtime.store.list_traces()})

    @app.get("/traces/{trace_id}")
    def trace_detail(trace_id: str) -> dict[str, Any]:
        return ok(runtime.store.version_tree(trace_id))

    @app.get("/traces/{trace_id}/events")
    def trace_events(
        trace_id: str, version: str | None = None, from_seq: int = 0
    ) -> StreamingResponse:
        """SSE: replay from from_seq, then live events, then one `sealed`."""
        vid = version or runtime.store.latest_version(trace_id)
        runtime.store.version_tree(trace_id)  # 404 before the stream opens

        def frames():
            for ev in runtime.store.stream(trace_id, vid, from_seq=from_seq):
                body = json.dumps(ev, ensure_ascii=False)
                yield f"event: trace\nid: {ev['seq']}\ndata: {body}\n\n"
            done = json.dumps({"trace_id": trace_id, "version_id": vid})
            yield f"event: sealed\ndata: {done}\n\n"

        return StreamingResponse(frames(), media_type="text/event-stream")

    @app.get("/traces/{trace_id}/eventlog")
    def trace_eventlog(
        trace_id: str, version: str | None = None, from_seq: int = 0
    ) -> dict[str, Any]:
        vid = version or runtime.store.latest_version(trace_id)
        events = [
            ev for ev in runtime.store.events(trace_id, vid) if ev["seq"] >= from_seq
        ]
        return ok(
            {
                "trace_id": trace_id,
                "version_id": vid,
                "sealed": runtime.store.is_sealed(trace_id, vid),
                "events": events,
            }
        )

    @app.get("/traces/{trace_id}/graph")
    def trace_graph(trace_id: str, version: str | None = None) -> dict[str, Any]:
        graph = runtime.store.graph(trace_id, version)
        return ok(
            {
                "trace_id": trace_id,
                "version_id": graph.version_id,
                "sealed": runtime.store.is_sealed(trace_id, graph.version_id),
                "roots": [r.as_dict() for r in graph.roots],
                "normalized": normalize_graph(graph),
                "checksum": structure_checksum(graph),
            }
        )

    @app.get("/traces/{trace_id}/timing")
    def trace_timing(trace_id: str, version: str | None = None) -> dict[str, Any]:
        vid = version or runtime.store.latest_version(trace_id)
        return ok(
            {
                "trace_id": trace_id,
                "version_id": vid,
                "calls": runtime.store.timing(trace_id, vid),
            }
        )

    @app.get("/traces/{trace_id}/dot")
    def trace_dot(trace_id: str, version: str | None = None) -> dict[str, Any]:
        graph = runtime.store.graph(trace_id, version)
        return ok({"version_id": graph.version_id, "dot": export_dot(graph)})

    @app.post("/traces/{trace_id}/nodes/{call_id}/regenerate")
    def regenerate(
        trace_id: str, call_id: str, payload: dict[str, Any] = Body(default=None)
    ) -> dict[str, Any]:
        payload = payload or {}
        kwargs = {
            "version_id": payload.get("version"),
            "overrides": payload.get("overrides"),
        }
        if payload.get("wait", True):
            result = runtime.regenerate(trace_id, call_id, **kwargs)
            data = result.as_dict()
            data["new_version_id"] = result.version_id
            return ok(data)
        tid, new_version, _thread = runtime.start_regenerate(trace_id, call_id, **kwargs)
        return ok({"trace_id": tid, "new_version_id": new_version})

    # -- breakpoints ------------------------------------------------------------

    @app.get("/runtime/breakpoints")
    def breakpoints() -> dict[str, Any]:
        return ok(
            {
                "breakpoints": runtime.breakpoints.list_breakpoints(),
                "paused": runtime.breakpoints.list_paused(),
            }
        )

    @app.post("/runtime/breakpoints")
    def add_breakpoint(payload: dict[str, Any] = Body(...)) -> dict[str, Any]:
        node = payload.get("node")
        stage_name = payload.get("stage", LifecycleStage.EXECUTE.value)
        if not isinstance(node, str) or node not in runtime.registry:
            raise NodeNotFound(f"no node named {node!r}")
        try:
            stage = LifecycleStage(stage_name)
        except ValueError:
            raise InvalidRequest(f"unknown stage {stage_name!r}")
        bp_id = runtime.breakpoints.set_breakpoint(node, stage)
        return ok({"bp_id": bp_id, "node": node, "stage": stage.value})

    @app.delete("/runtime/breakpoints/{bp_id}")
    def remove_breakpoint(bp_id: str) -> dict[str, Any]:
        return ok({"removed": runtime.breakpoints.clear_breakpoint(bp_id)})

    @app.post("/runtime/resume")
    def resume(payload: dict[str, Any] = Body(...)) -> dict[str, Any]:
        call_id = payload.get("call_id")
        if not isinstance(call_id, str) or not call_id:
            raise InvalidRequest("resume needs a 'call_id'")
        if not runtime.breakpoints.resume_call(call_id, payload.get("overrides")):
            raise UnknownCall(f"no paused call {call_id!r}")
        return ok({"resumed": True, "call_id": call_id})

    # -- bank --------------------------------------------------------------------

    @app.get("/bank/records")
    def bank_records(
        state: str | None = None, priority: str | None = None
    ) -> dict[str, Any]:
        return ok({"records": runtime.bank.list_records(state=state, priority=priority)})

    @app.post("/bank/records")
    def bank_deposit(payload: dict[str, Any] = Body(...)) -> dict[str, Any]:
        trace_id = payload.get("trace_id")
        if not isinstance(trace_id, str) or not trace_id:
            raise InvalidRequest("deposit needs 'trace_id'")
        record = runtime.bank.deposit_trace(
            trace_id,
            payload.get("version_id"),
            call_id=payload.get("call_id"),
            template=payload.get("template", "qa"),
        )
        return ok(record)

    @app.get("/bank/records/{record_id}")
    def bank_record(record_id: str) -> dict[str, Any]:
        return ok(runtime.bank.get(record_id))

    @app.post("/bank/records/{record_id}/annotate")
    def bank_annotate(record_id: str, payload: dict[str, Any] = Body(...)) -> dict[str, Any]:
        return ok(
            runtime.bank.annotate(
                record_id,
                payload.get("payload"),
                template_id=payload.get("template_id"),
                note=payload.get("note"),
            )
        )

    @app.post("/bank/records/{record_id}/audit")
    def bank_audit(record_id: str, payload: dict[str, Any] = Body(...)) -> dict[str, Any]:
        verdict = payload.get("verdict")
        if not isinstance(verdict, str) or not verdict:
            raise InvalidRequest("audit needs a 'verdict' of approve or reject")
        return ok(runtime.bank.audit(record_id, verdict, note=payload.get("note")))

    @app.post("/bank/records/{record_id}/reopen")
    def bank_reopen(
        record_id: str, payload: dict[str, Any] = Body(default=None)
    ) -> dict[str, Any]:
        return ok(runtime.bank.reopen(record_id, (payload or {}).get("note")))

    @app.get("/bank/export")
    def bank_export(
        priority: str | None = None,
        template: str | None = None,
        since: int | None = None,
    ) -> dict[str, Any]:
        return ok(
            runtime.bank.export_knowledge(
                priority=priority, template=template, since_ms=since
            )
        )

    # -- prompts --------------------------------------------------------------

    @app.get("/agents/{agent}/prompts")
    def prompt_chain(agent: str) -> dict[str, Any]:
        return ok(runtime.bank.prompt_chain(agent))

    @app.post("/agents/{agent}/optimize-prompt")
    def prompt_optimize(
        agent: str, payload: dict[str, Any] = Body(default=None)
    ) -> dict[str, Any]:
        binding = (payload or {}).get("binding")
        return ok(runtime.bank.optimize_prompt(agent, runtime.hub, binding))

    @app.post("/agents/{agent}/apply-prompt")
    def prompt_apply(agent: str, payload: dict[str, Any] = Body(...)) -> dict[str, Any]:
        version = payload.get("version")
        if not isinstance(version, str) or not version:
            raise InvalidRequest("apply needs a 'version'")
        return ok(runtime.bank.apply_prompt(agent, version))

    # -- scope debug --------------------------------------------------------------

    @app.get("/requests/{request_id}/scopes")
    def scopes(request_id: str, group_id: str | None = None) -> dict[str, Any]:
        return ok(runtime.scopes.debug_view(request_id, group_id=group_id))

    # -- static frontend (mounted last so API routes win) ---------------------------

    dist = Path(frontend_dir) if frontend_dir else _default_frontend()
    if dist is not None and dist.is_dir():
        app.mount("/", StaticFiles(directory=dist, html=True), name="ui")
    else:

        @app.get("/")
        def index() -> dict[str, Any]:
            return ok({"service": "agentmesh", "ui": "not built"})

    return app


def _default_frontend() -> Path | None:
    here = Path(__file__).resolve()
    for base in [here.parents[2], *here.parents]:
        candidate = base / "frontend" / "dist"
        if candidate.is_dir():
            return candidate
    return None


def serve(
    runtime: Runtime,
    host: str = "127.0.0.1",
    port: int = 8080,
    frontend_dir: str | Path | None = None,
) -> None:
    import uvicorn

    app = create_app(runtime, frontend_dir=frontend_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")

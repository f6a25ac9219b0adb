import hashlib
import json
import threading
import time

import pytest

from agentmesh.common import SNAPSHOT_LIMIT_BYTES
from agentmesh.errors import SealedTrace, UnknownCall, UnknownTrace, UnsealedTrace
from agentmesh.lifecycle import AspectPhase, LifecycleStage
from agentmesh.tracer import (
    BreakpointManager,
    TraceStore,
    build_graph,
    export_dot,
    normalize_graph,
    structure_checksum,
    timing_report,
)

STAGES = [s for s in LifecycleStage]


def emit_call(store, trace_id, version_id, call_id, node, kind, parent=None, status="ok"):
    """Write the full ten-event lifecycle for one call."""
    for stage in STAGES:
        for phase in (AspectPhase.BEFORE, AspectPhase.AFTER):
            final = stage is LifecycleStage.FORMAT_OUTPUT and phase is AspectPhase.AFTER
            store.append(
                trace_id,
                version_id,
                call_id=call_id,
                parent_call_id=parent,
                node=node,
                kind=kind,
                stage=stage,
                phase=phase,
                status=status if final else ("running" if phase is AspectPhase.BEFORE else "ok"),
                payload={"stage": stage.value},
            )


@pytest.fixture
def store(tmp_path):
    return TraceStore(tmp_path / "traces")


def test_seq_is_dense_per_version(store):
    tid, vid = store.begin_trace()
    emit_call(store, tid, vid, "c1", "a", "agent")
    emit_call(store, tid, vid, "c2", "t", "tool", parent="c1")
    events = store.events(tid, vid)
    assert [e["seq"] for e in events] == list(range(20))


def test_append_after_seal_refused(store):
    tid, vid = store.begin_trace()
    emit_call(store, tid, vid, "c1", "a", "agent")
    store.seal(tid, vid)
    assert store.is_sealed(tid, vid)
    with pytest.raises(SealedTrace):
        store.append(
            tid, vid, call_id="c9", parent_call_id=None, node="x", kind="tool",
            stage=LifecycleStage.PRE_PROCESS, phase=AspectPhase.BEFORE, status="running",
        )


def test_unknown_trace_and_version(store):
    with pytest.raises(UnknownTrace):
        store.events("t-ghost", "v1")
    tid, _ = store.begin_trace()
    with pytest.raises(UnknownTrace):
        store.events(tid, "v99")


def test_log_survives_reload(tmp_path):
    store = TraceStore(tmp_path / "traces")
    tid, vid = store.begin_trace()
    emit_call(store, tid, vid, "c1", "a", "agent")
    store.seal(tid, vid)

    reloaded = TraceStore(tmp_path / "traces")
    assert reloaded.is_sealed(tid, vid)
    assert reloaded.events(tid, vid) == store.events(tid, vid)
    assert [t["trace_id"] for t in reloaded.list_traces()] == [tid]


def test_snapshot_truncates_large_payloads(store):
    tid, vid = store.begin_trace()
    big = "z" * (SNAPSHOT_LIMIT_BYTES + 100)
    store.append(
        tid, vid, call_id="c1", parent_call_id=None, node="a", kind="agent",
        stage=LifecycleStage.PRE_PROCESS, phase=AspectPhase.BEFORE, status="running",
        payload={"blob": big},
    )
    payload = store.events(tid, vid)[0]["payload"]
    assert payload["__truncated__"] is True
    assert payload["byte_length"] > SNAPSHOT_LIMIT_BYTES
    assert len(payload["preview"]) <= 512
    raw = json.dumps({"blob": big}, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode()
    assert payload["content_md5"] == hashlib.md5(raw).hexdigest()


def test_version_lineage_and_inherit(store):
    tid, v1 = store.begin_trace()
    emit_call(store, tid, v1, "c1", "a", "agent")
    store.seal(tid, v1)
    v2 = store.new_version(tid, v1, meta={"origin": "regenerated"})
    assert v2 == "v2"
    store.record_inherit(tid, v2, v1, from_seq=0, to_seq=4)
    store.append(
        tid, v2, call_id="c1", parent_call_id=None, node="a", kind="agent",
        stage=LifecycleStage.EXECUTE, phase=AspectPhase.AFTER, status="ok",
    )
    events = store.events(tid, v2)
    assert [e["seq"] for e in events] == [0, 1, 2, 3, 4, 5]
    # inherited events are shared by reference with the parent log
    assert events[:5] == store.events(tid, v1)[:5]
    raw = (store.root / tid / "v2.jsonl").read_text().splitlines()
    assert json.loads(raw[0]) == {"inherit": {"version": "v1", "from_seq": 0, "to_seq": 4}}
    tree = store.version_tree(tid)
    assert tree["versions"]["v2"]["parent"] == "v1"
    assert tree["versions"]["v2"]["meta"]["origin"] == "regenerated"
    assert tree["versions"]["v1"]["meta"]["origin"] == "root"


def test_inherited_events_resolve_after_reload(tmp_path):
    store = TraceStore(tmp_path / "traces")
    tid, v1 = store.begin_trace()
    emit_call(store, tid, v1, "c1", "a", "agent")
    store.seal(tid, v1)
    v2 = store.new_version(tid, v1)
    store.record_inherit(tid, v2, v1, from_seq=0, to_seq=9)
    store.seal(tid, v2)

    reloaded = TraceStore(tmp_path / "traces")
    assert reloaded.events(tid, v2) == store.events(tid, v2)
    assert len(reloaded.events(tid, v2)) == 10


def test_latest_version_orders_numerically(store):
    tid, _ = store.begin_trace()
    for _ in range(10):
        store.new_version(tid, "v1")
    assert store.latest_version(tid) == "v11"  # not 'v9' by string order


# -- graph assembly ----------------------------------------------------------------


def test_graph_shape_and_status(store):
    tid, vid = store.begin_trace()
    emit_call(store, tid, vid, "c1", "root", "agent")
    emit_call(store, tid, vid, "c2", "worker", "tool", parent="c1")
    emit_call(store, tid, vid, "c3", "oops", "tool", parent="c1", status="error")
    graph = store.graph(tid, vid)
    assert [r.name for r in graph.roots] == ["root"]
    root = graph.roots[0]
    assert [c.name for c in root.children] == ["worker", "oops"]
    assert root.status == "ok"
    assert graph.by_call_id["c3"].status == "error"
    assert root.duration_ms is not None


def test_running_call_has_open_end(store):
    tid, vid = store.begin_trace()
    store.append(
        tid, vid, call_id="c1", parent_call_id=None, node="a", kind="agent",
        stage=LifecycleStage.EXECUTE, phase=AspectPhase.BEFORE, status="running",
    )
    node = store.graph(tid, vid).roots[0]
    assert node.status == "running"
    assert node.end_ms is None and node.duration_ms is None


def test_find_call(store):
    tid, vid = store.begin_trace()
    emit_call(store, tid, vid, "c1", "a", "agent")
    assert store.find_call(tid, vid, "c1").name == "a"
    with pytest.raises(UnknownCall):
        store.find_call(tid, vid, "c-missing")


def synthetic_graph(timings):
    """Graph from (call_id, parent, name, kind, begin, end) rows."""
    events = []
    seq = 0
    for call_id, parent, name, kind, begin, end in timings:
        events.append(
            {"call_id": call_id, "parent_call_id": parent, "node": name, "kind": kind,
             "seq": seq, "ts_ms": begin, "stage": "pre_process", "phase": "before",
             "status": "running", "payload": None}
        )
        seq += 1
    for call_id, parent, name, kind, begin, end in timings:
        events.append(
            {"call_id": call_id, "parent_call_id": parent, "node": name, "kind": kind,
             "seq": seq, "ts_ms": end, "stage": "format_output", "phase": "after",
             "status": "ok", "payload": None}
        )
        seq += 1
    events.sort(key=lambda e: (e["ts_ms"], e["seq"]))
    for i, ev in enumerate(events):
        ev["seq"] = i
    return build_graph("t", "v1", events)


def test_timing_report_buckets_direct_children_by_kind():
    graph = synthetic_graph(
        [
            ("c1", None, "root", "agent", 0, 100),
            ("c2", "c1", "model", "llm", 5, 45),
            ("c3", "c1", "hammer", "tool", 50, 70),
            ("c4", "c1", "helper", "agent", 70, 95),
            ("c5", "c4", "inner_model", "llm", 72, 90),
        ]
    )
    rows = {r.name: r for r in timing_report(graph)}
    root = rows["root"]
    assert (root.total_ms, root.llm_ms, root.tool_ms, root.agent_ms) == (100, 40, 20, 25)
    assert root.self_ms == 100 - 40 - 20 - 25
    # the nested llm call buckets under its own parent, not the root
    assert rows["helper"].llm_ms == 18


def test_timing_self_clamped_at_zero():
    # children report longer than the parent window; self time must not go negative
    graph = synthetic_graph(
        [
            ("c1", None, "root", "agent", 0, 10),
            ("c2", "c1", "model", "llm", 0, 25),
        ]
    )
    root = [r for r in timing_report(graph) if r.name == "root"][0]
    assert root.self_ms == 0


def test_flow_children_count_as_agent_time():
    graph = synthetic_graph(
        [
            ("c1", None, "root", "agent", 0, 50),
            ("c2", "c1", "pipeline", "flow", 0, 30),
        ]
    )
    root = [r for r in timing_report(graph) if r.name == "root"][0]
    assert root.agent_ms == 30 and root.llm_ms == 0 and root.tool_ms == 0


def test_store_timing_requires_sealed(store):
    tid, vid = store.begin_trace()
    emit_call(store, tid, vid, "c1", "a", "agent")
    with pytest.raises(UnsealedTrace):
        store.timing(tid, vid)
    store.seal(tid, vid)
    rows = store.timing(tid, vid)
    assert rows and rows[0]["name"] == "a"


# -- normalization, checksum, dot -------------------------------------------------


def test_normalize_strips_identity_and_time(store):
    tid, vid = store.begin_trace()
    emit_call(store, tid, vid, "c-abc", "a", "agent")
    emit_call(store, tid, vid, "c-def", "t", "tool", parent="c-abc")
    time.sleep(0.002)
    tid2, vid2 = store.begin_trace()
    emit_call(store, tid2, vid2, "c-zzz", "a", "agent")
    emit_call(store, tid2, vid2, "c-qqq", "t", "tool", parent="c-zzz")
    n1 = normalize_graph(store.graph(tid, vid))
    n2 = normalize_graph(store.graph(tid2, vid2))
    assert n1 == n2
    assert structure_checksum(store.graph(tid, vid)) == structure_checksum(store.graph(tid2, vid2))
    assert n1["nodes"][0] == {"i": 0, "parent": None, "name": "a", "kind": "agent", "status": "ok"}
    assert n1["nodes"][1]["parent"] == 0


def test_checksum_sensitive_to_structure(store):
    tid, vid = store.begin_trace()
    emit_call(store, tid, vid, "c1", "a", "agent")
    base = structure_checksum(store.graph(tid, vid))
    emit_call(store, tid, vid, "c2", "t", "tool", parent="c1")
    assert structure_checksum(store.graph(tid, vid)) != base


def test_dot_export_shape(store):
    tid, vid = store.begin_trace()
    emit_call(store, tid, vid, "c1", "a", "agent")
    emit_call(store, tid, vid, "c2", "t", "tool", parent="c1")
    dot = export_dot(store.graph(tid, vid))
    lines = dot.splitlines()
    assert lines[0] == "// execution trace"
    assert lines[1] == "digraph trace {"
    assert '"a_c1" [label="a [agent] ok ' in dot
    assert '"a_c1" -> "t_c2";' in dot
    assert dot.endswith("}")


def test_dot_empty_graph():
    graph = build_graph("t", "v1", [])
    assert export_dot(graph) == "// execution trace\ndigraph trace {}"


def test_dot_deterministic_across_equivalent_runs(store):
    def make():
        tid, vid = store.begin_trace()
        emit_call(store, tid, vid, f"c-{tid}-1", "a", "agent")
        emit_call(store, tid, vid, f"c-{tid}-2", "t", "tool", parent=f"c-{tid}-1")
        return export_dot(store.graph(tid, vid))

    d1, d2 = make(), make()
    # strip volatile duration figures; ids and topology must match exactly
    import re

    scrub = lambda s: re.sub(r"\d+ms", "Xms", s)
    assert scrub(d1) == scrub(d2)


# -- streaming ---------------------------------------------------------------------


def test_stream_yields_live_then_ends_on_seal(store):
    tid, vid = store.begin_trace()
    got = []

    def consume():
        for ev in store.stream(tid, vid, from_seq=0, poll_s=0.02):
            got.append(ev["seq"])

    t = threading.Thread(target=consume)
    t.start()
    emit_call(store, tid, vid, "c1", "a", "agent")
    time.sleep(0.1)
    store.seal(tid, vid)
    t.join(timeout=5)
    assert not t.is_alive()
    assert got == list(range(10))


def test_stream_resumes_from_seq(store):
    tid, vid = store.begin_trace()
    emit_call(store, tid, vid, "c1", "a", "agent")
    store.seal(tid, vid)
    seqs = [ev["seq"] for ev in store.stream(tid, vid, from_seq=4)]
    assert seqs == list(range(4, 10))


# -- breakpoints -------------------------------------------------------------------


def test_breakpoint_pause_and_resume_with_overrides():
    mgr = BreakpointManager(default_timeout_s=5)
    mgr.set_breakpoint("worker", LifecycleStage.EXECUTE)
    result = {}

    def runner():
        result["overrides"] = mgr.check("t1", "c1", "worker", LifecycleStage.EXECUTE)

    t = threading.Thread(target=runner)
    t.start()
    pause = mgr.wait_for_pause("t1", timeout_s=5)
    assert pause is not None and pause.node == "worker"
    assert mgr.resume(pause.pause_id, {"x": 2})
    t.join(timeout=5)
    assert result["overrides"] == {"x": 2}
    assert mgr.list_paused() == []


def test_breakpoint_resume_by_call_id():
    mgr = BreakpointManager(default_timeout_s=5)
    mgr.set_breakpoint("worker", LifecycleStage.EXECUTE)
    done = threading.Event()

    def runner():
        mgr.check("t1", "c-42", "worker", LifecycleStage.EXECUTE)
        done.set()

    threading.Thread(target=runner).start()
    assert mgr.wait_for_pause("t1", timeout_s=5)
    assert not mgr.resume_call("c-other")
    assert mgr.resume_call("c-42")
    assert done.wait(timeout=5)


def test_breakpoint_timeout_auto_continues():
    mgr = BreakpointManager(default_timeout_s=5)
    mgr.set_breakpoint("worker", LifecycleStage.EXECUTE)
    t0 = time.perf_counter()
    overrides = mgr.check("t1", "c1", "worker", LifecycleStage.EXECUTE, timeout_s=0.3)
    assert overrides == {}
    assert 0.25 <= time.perf_counter() - t0 < 3


def test_non_matching_stage_does_not_pause():
    mgr = BreakpointManager()
    mgr.set_breakpoint("worker", LifecycleStage.EXECUTE)
    t0 = time.perf_counter()
    assert mgr.check("t1", "c1", "worker", LifecycleStage.PRE_PROCESS) == {}
    assert mgr.check("t1", "c1", "other", LifecycleStage.EXECUTE) == {}
    assert time.perf_counter() - t0 < 0.5


def test_clear_breakpoint():
    mgr = BreakpointManager()
    bp = mgr.set_breakpoint("worker", LifecycleStage.EXECUTE)
    assert mgr.list_breakpoints()[0]["bp_id"] == bp
    assert mgr.clear_breakpoint(bp)
    assert not mgr.clear_breakpoint(bp)
    assert mgr.check("t1", "c1", "worker", LifecycleStage.EXECUTE) == {}

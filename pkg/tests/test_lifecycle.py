import pytest

from agentmesh.errors import InvalidSelector
from agentmesh.lifecycle import (
    Aspect,
    AspectPhase,
    AspectRegistry,
    CallRequest,
    CallResponse,
    CallStatus,
    LifecycleStage,
    StageError,
    scoped_get,
    scoped_set,
)
from agentmesh.nodes import NodeKind
from agentmesh.scopes import ABSENT, ScopeLevel, ScopeStore


def make_request(**kw):
    defaults = dict(
        request_id="req-1",
        call_id="c-1",
        caller="__user__",
        callee="master",
        arguments={"query": "hi"},
        scopes=ScopeStore(),
    )
    defaults.update(kw)
    return CallRequest(**defaults)


def test_root_call_chain_defaults_to_caller():
    req = make_request()
    assert req.call_chain == ("__user__",)
    assert req.call_chain[-1] == req.caller


def test_child_extends_chain_and_identity():
    root = make_request(group_id="g")
    child = root.child("worker", {"x": 1})
    assert child.call_chain == ("__user__", "master")
    assert child.call_chain[-1] == child.caller == "master"
    assert child.callee == "worker"
    assert child.request_id == root.request_id
    assert child.group_id == "g"
    assert child.parent_call_id == root.call_id
    assert child.call_id != root.call_id
    grand = child.child("leaf", {})
    assert grand.call_chain == ("__user__", "master", "worker")


def test_child_arguments_are_isolated():
    root = make_request(arguments={"query": "hi", "secret": 1})
    child = root.child("worker", {"q": 2})
    assert child.arguments == {"q": 2}
    child.set_argument("q", 3)
    assert root.arguments == {"query": "hi", "secret": 1}


def test_scope_accessors_route_to_tiers():
    store = ScopeStore()
    req = make_request(scopes=store, group_id="g")
    req.set_global_data("a", 1)
    req.set_group_data("b", 2)
    req.set_shared_data("c", 3)
    assert req.get_global_data("a") == 1
    assert req.get_group_data("b") == 2
    assert req.get_shared_data("c") == 3
    # another request in the same group sees group+application, not request
    other = make_request(request_id="req-2", scopes=store, group_id="g")
    assert other.get_global_data("a") == 1
    assert other.get_group_data("b") == 2
    assert other.get_shared_data("c") is ABSENT


def test_scoped_set_node_level_is_the_argument_map():
    req = make_request()
    scoped_set(req, ScopeLevel.NODE, "k", 5)
    assert req.arguments["k"] == 5
    assert scoped_get(req, ScopeLevel.NODE, "k") == 5
    assert scoped_get(req, ScopeLevel.NODE, "missing") is ABSENT


def test_scoped_set_round_trip_all_tiers():
    req = make_request(group_id="g")
    for level in (ScopeLevel.APPLICATION, ScopeLevel.SESSION_GROUP, ScopeLevel.REQUEST):
        scoped_set(req, level, "k", level.value)
        assert scoped_get(req, level, "k") == level.value


def test_response_ok_and_dict_shape():
    good = CallResponse(CallStatus.OK, output={"answer": "x"}, timing={"execute": 1.0})
    bad = CallResponse(CallStatus.ERROR, error_detail="boom")
    assert good.ok and not bad.ok
    assert good.as_dict() == {
        "status": "ok",
        "output": {"answer": "x"},
        "error_detail": None,
        "timing": {"execute": 1.0},
    }
    assert bad.as_dict()["status"] == "error"


def test_stage_error_copies_extra():
    extra = {"rounds": 2}
    err = StageError(LifecycleStage.EXECUTE, "boom", extra)
    extra["rounds"] = 99
    assert err.extra == {"rounds": 2}
    assert err.stage is LifecycleStage.EXECUTE
    assert "execute: boom" in str(err)


def test_stage_enum_order_is_the_pipeline():
    assert [s.value for s in LifecycleStage] == [
        "pre_process",
        "pre_save_data",
        "execute",
        "post_process",
        "format_output",
    ]


# -- aspects -----------------------------------------------------------------


def fire_args(req, response=None, stage=LifecycleStage.EXECUTE, phase=AspectPhase.BEFORE):
    return ("master", NodeKind.AGENT, stage, phase, req, response)


def test_aspects_fire_in_registration_order():
    reg = AspectRegistry()
    seen = []
    for tag in ("first", "second", "third"):
        reg.register(
            Aspect(
                stage=LifecycleStage.EXECUTE,
                phase=AspectPhase.BEFORE,
                selector=lambda node, kind: True,
                handler=lambda ctx, tag=tag: (seen.append(tag), ctx.annotate(tag)),
            )
        )
    notes = reg.fire(*fire_args(make_request()))
    assert seen == ["first", "second", "third"]
    assert [n["value"] for n in notes] == ["first", "second", "third"]
    assert all("aspect_id" in n for n in notes)


def test_aspect_selector_filters_by_node_and_kind():
    reg = AspectRegistry()
    hits = []
    reg.register(
        Aspect(
            stage=LifecycleStage.EXECUTE,
            phase=AspectPhase.BEFORE,
            selector=lambda node, kind: kind is NodeKind.TOOL,
            handler=lambda ctx: hits.append(ctx.node),
        )
    )
    reg.fire(*fire_args(make_request()))
    assert hits == []
    reg.fire("t", NodeKind.TOOL, LifecycleStage.EXECUTE, AspectPhase.BEFORE, make_request(), None)
    assert hits == ["t"]


def test_aspect_only_fires_at_its_joinpoint():
    reg = AspectRegistry()
    hits = []
    reg.register(
        Aspect(
            stage=LifecycleStage.POST_PROCESS,
            phase=AspectPhase.AFTER,
            selector=lambda node, kind: True,
            handler=lambda ctx: hits.append((ctx.stage, ctx.phase)),
        )
    )
    reg.fire(*fire_args(make_request()))
    assert hits == []
    reg.fire(*fire_args(make_request(), stage=LifecycleStage.POST_PROCESS, phase=AspectPhase.AFTER))
    assert hits == [(LifecycleStage.POST_PROCESS, AspectPhase.AFTER)]


def test_aspect_mutation_cannot_reach_the_payload():
    reg = AspectRegistry()

    def vandal(ctx):
        ctx.arguments["query"] = "corrupted"
        if ctx.response is not None:
            ctx.response["output"] = "corrupted"

    reg.register(
        Aspect(
            stage=LifecycleStage.EXECUTE,
            phase=AspectPhase.AFTER,
            selector=lambda node, kind: True,
            handler=vandal,
        )
    )
    req = make_request()
    resp = CallResponse(CallStatus.OK, output={"answer": "clean"})
    reg.fire(*fire_args(req, resp, phase=AspectPhase.AFTER))
    assert req.arguments == {"query": "hi"}
    assert resp.output == {"answer": "clean"}


def test_aspect_exceptions_never_break_the_call():
    reg = AspectRegistry()
    seen = []
    reg.register(
        Aspect(
            stage=LifecycleStage.EXECUTE,
            phase=AspectPhase.BEFORE,
            selector=lambda node, kind: 1 / 0,
            handler=lambda ctx: seen.append("selector-blew-up"),
        )
    )
    reg.register(
        Aspect(
            stage=LifecycleStage.EXECUTE,
            phase=AspectPhase.BEFORE,
            selector=lambda node, kind: True,
            handler=lambda ctx: 1 / 0,
        )
    )
    reg.register(
        Aspect(
            stage=LifecycleStage.EXECUTE,
            phase=AspectPhase.BEFORE,
            selector=lambda node, kind: True,
            handler=lambda ctx: seen.append("survivor"),
        )
    )
    notes = reg.fire(*fire_args(make_request()))
    assert seen == ["survivor"]
    assert notes == []


def test_aspect_registration_validates():
    reg = AspectRegistry()
    with pytest.raises(InvalidSelector):
        reg.register(
            Aspect(stage="execute", phase=AspectPhase.BEFORE, selector=lambda n, k: True, handler=lambda c: None)
        )
    with pytest.raises(InvalidSelector):
        reg.register(
            Aspect(stage=LifecycleStage.EXECUTE, phase=AspectPhase.BEFORE, selector=None, handler=lambda c: None)
        )

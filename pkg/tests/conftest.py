import json
from pathlib import Path

import pytest

from agentmesh.config import build_runtime
from agentmesh.models import ScriptedBinding, ScriptedRule
from agentmesh.nodes import NodeKind, NodeSpec, Registry
from agentmesh.runtime import Runtime, RuntimeSettings

REPO = Path(__file__).resolve().parent.parent
CONFIGS = REPO / "configs"
FIXTURES = Path(__file__).resolve().parent / "fixtures"


def rule(reply, match=None, regex=None, max_uses=None):
    return ScriptedRule(reply=reply, match=match, match_regex=regex, max_uses=max_uses)


def action(tool_name, **arguments):
    """A scripted completion that the planner parses as a tool call."""
    return json.dumps({"tool_name": tool_name, "arguments": arguments})


def make_runtime(tmp_path, specs, bindings=None, entrypoint=None, settings=None):
    registry = Registry()
    for spec in specs:
        registry.register(spec)
    if entrypoint:
        registry.set_entrypoint(entrypoint)
    rt = Runtime(tmp_path / "data", registry=registry, settings=settings)
    for name, binding in (bindings or {}).items():
        rt.add_binding(name, binding)
    return rt


def agent(name, model, callees=(), description="", **config):
    config = {"model": model, **config}
    return NodeSpec(
        name=name,
        kind=NodeKind.AGENT,
        description=description or f"{name} agent",
        permitted_callees=tuple(callees),
        config=config,
    )


def llm(name, binding, **config):
    return NodeSpec(
        name=name, kind=NodeKind.LLM, config={"binding": binding, **config}
    )


def tool(name, handler, description="", **config):
    return NodeSpec(
        name=name,
        kind=NodeKind.TOOL,
        description=description or f"{name} tool",
        config={"handler": handler, **config},
    )


@pytest.fixture
def assistant(tmp_path):
    """The file/time assistant mesh from configs/, scripted model."""
    return build_runtime(CONFIGS / "file_assistant.json", data_dir=tmp_path / "data")


@pytest.fixture
def solo(tmp_path):
    """Minimal mesh: one agent, one model, one echo tool."""

    def build(rules, default_reply=None, settings=None, **agent_config):
        return make_runtime(
            tmp_path,
            [
                agent("solo", "solo_llm", callees=("echo_tool",), **agent_config),
                llm("solo_llm", "scripted"),
                tool("echo_tool", "echo"),
            ],
            bindings={"scripted": ScriptedBinding(rules, default_reply=default_reply)},
            entrypoint="solo",
            settings=settings,
        )

    return build

"""agentmesh: a traced, replayable multi-agent runtime.

Agents, tools, model endpoints, and static flows register as nodes in
one mesh. Every call runs the same five-stage lifecycle, every event
lands in a versioned trace that can be paused, diffed, and regenerated,
and reviewed trajectories feed a knowledge bank that tunes prompts.
"""

from .bank import Bank
from .config import build_runtime, load_config
from .errors import AgentMeshError
from .lifecycle import (
    Aspect,
    AspectPhase,
    CallRequest,
    CallResponse,
    CallStatus,
    LifecycleStage,
)
from .models import ChatMessage, HttpBinding, ModelHub, ScriptedBinding
from .nodes import NodeKind, NodeSpec, Registry, USER_CALLER
from .planner import ReactMemory, parse_action, run_react
from .runtime import ChatResult, Runtime, RuntimeSettings
from .scopes import ABSENT, ScopeLevel, ScopeStore
from .tracer import (
    BreakpointManager,
    ExecutionGraph,
    TraceStore,
    build_graph,
    export_dot,
    normalize_graph,
    structure_checksum,
    timing_report,
)

__version__ = "0.1.0"

__all__ = [
    "ABSENT",
    "AgentMeshError",
    "Aspect",
    "AspectPhase",
    "Bank",
    "BreakpointManager",
    "CallRequest",
    "CallResponse",
    "CallStatus",
    "ChatMessage",
    "ChatResult",
    "ExecutionGraph",
    "HttpBinding",
    "LifecycleStage",
    "ModelHub",
    "NodeKind",
    "NodeSpec",
    "ReactMemory",
    "Registry",
    "Runtime",
    "RuntimeSettings",
    "ScopeLevel",
    "ScopeStore",
    "ScriptedBinding",
    "TraceStore",
    "USER_CALLER",
    "build_graph",
    "build_runtime",
    "export_dot",
    "load_config",
    "normalize_graph",
    "parse_action",
    "run_react",
    "structure_checksum",
    "timing_report",
]

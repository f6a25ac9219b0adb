"""Single-agent reasoning loop: decide, act, observe, repeat.

The planner owns decision parsing and the reasoning memory. It does not
execute anything itself; the caller supplies a dispatch function that
routes a (callee, arguments) pair through the runtime, so the loop is
testable with a plain stub.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

from .common import canonical_dumps
from .errors import AgentMeshError, RetryExhausted
from .models import ChatMessage
from .nodes import NodeSpec, Registry
from .prompts import OBSERVATION_PROMPT_LIMIT, render_react_system

MAX_REACT_ROUNDS = 16
PARSE_RETRY_LIMIT = 3
FAIL_STREAK_LIMIT = 3

_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


@dataclass(frozen=True)
class Call:
    callee: str
    arguments: dict[str, Any]


@dataclass(frozen=True)
class Final:
    answer: str


@dataclass(frozen=True)
class ParseFailure:
    detail: str


ActionDecision = Call | Final | ParseFailure


def _decision_from_object(obj: Any) -> Call | ParseFailure | None:
    """None when the object is valid JSON but not a call request."""
    if not isinstance(obj, dict) or "tool_name" not in obj:
        return None
    name = obj["tool_name"]
    if not isinstance(name, str) or not name:
        return ParseFailure("tool_name must be a non-empty string")
    arguments = obj.get("arguments", {})
    if not isinstance(arguments, dict):
        return ParseFailure("arguments must be a JSON object")
    return Call(callee=name, arguments=arguments)


def _scan_objects(text: str):
    """Yield every top-level JSON value decodable from some '{' onward."""
    decoder = json.JSONDecoder()
    pos = 0
    while True:
        start = text.find("{", pos)
        if start < 0:
            return
        try:
            obj, end = decoder.raw_decode(text, start)
        except ValueError:
            pos = start + 1
            continue
        yield obj
        pos = end


def parse_action(text: str) -> ActionDecision:
    """Total over arbitrary model output.

    First JSON object carrying "tool_name" wins, fenced blocks checked
    before loose text. A fenced block that fails to parse is treated as a
    garbled call attempt, not as prose.
    """
    for fence in _FENCE.finditer(text):
        body = fence.group(1).strip()
        if not body:
            continue
        try:
            obj = json.loads(body)
        except ValueError:
            return ParseFailure("fenced block is not valid JSON")
        decision = _decision_from_object(obj)
        if decision is not None:
            return decision
    for obj in _scan_objects(text):
        decision = _decision_from_object(obj)
        if decision is not None:
            return decision
    return Final(answer=text.strip())


class MemoryKind(str, Enum):
    SYSTEM_PROMPT = "system_prompt"
    USER_QUERY = "user_query"
    MODEL_THOUGHT = "model_thought"
    ACTION_TAKEN = "action_taken"
    OBSERVATION = "observation"
    FAILURE_OBSERVATION = "failure_observation"


@dataclass
class MemoryEntry:
    kind: MemoryKind
    content: Any
    source: str | None = None

    def as_dict(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "content": self.content, "source": self.source}


def _clip_for_prompt(text: str) -> str:
    encoded = text.encode("utf-8")
    if len(encoded) <= OBSERVATION_PROMPT_LIMIT:
        return text
    clipped = encoded[:OBSERVATION_PROMPT_LIMIT].decode("utf-8", errors="ignore")
    return clipped + " ...[truncated]"


@dataclass
class ReactMemory:
    """Ordered reasoning record; stores full values, clips only when
    rendering the prompt."""

    entries: list[MemoryEntry] = field(default_factory=list)

    def add(self, kind: MemoryKind, content: Any, source: str | None = None) -> None:
        self.entries.append(MemoryEntry(kind=kind, content=content, source=source))

    def to_messages(self) -> list[ChatMessage]:
        messages: list[ChatMessage] = []
        for entry in self.entries:
            if entry.kind is MemoryKind.SYSTEM_PROMPT:
                messages.append(ChatMessage("system", str(entry.content)))
            elif entry.kind is MemoryKind.USER_QUERY:
                messages.append(ChatMessage("user", str(entry.content)))
            elif entry.kind is MemoryKind.MODEL_THOUGHT:
                messages.append(ChatMessage("assistant", str(entry.content)))
            elif entry.kind is MemoryKind.ACTION_TAKEN:
                continue  # already present verbatim as the model's thought
            elif entry.kind is MemoryKind.OBSERVATION:
                rendered = canonical_dumps(entry.content)
                messages.append(
                    ChatMessage(
                        "user",
                        f"[observation] {entry.source}: {_clip_for_prompt(rendered)}",
                    )
                )
            else:
                messages.append(ChatMessage("user", f"[failure] {entry.content}"))
        return messages

    def as_dict(self) -> list[dict[str, Any]]:
        return [e.as_dict() for e in self.entries]


def permission_failure_text(caller: str, callee: str) -> str:
    return f"permission denied: {caller} -> {callee}"


def authorize(registry: Registry, caller: NodeSpec, callee: str) -> bool:
    """Permitted callees plus the caller's own model binding.

    The binding is part of the agent's wiring, not a delegation choice,
    so it does not need to appear in the permission list.
    """
    if callee in caller.permitted_callees:
        return callee in registry
    model = caller.model_node()
    return model is not None and callee == model and callee in registry


@dataclass
class DispatchResult:
    ok: bool
    output: Any = None
    error_detail: str | None = None


Dispatch = Callable[[str, dict[str, Any]], DispatchResult]
Complete = Callable[[list[ChatMessage]], str]


def plan_step(
    complete: Complete,
    memory: ReactMemory,
    retry_limit: int = PARSE_RETRY_LIMIT,
) -> Call | Final:
    """One decision. Garbled output is fed back as a failure observation
    and retried; after retry_limit garbled completions the step fails."""
    for _ in range(retry_limit):
        completion = complete(memory.to_messages())
        memory.add(MemoryKind.MODEL_THOUGHT, completion)
        decision = parse_action(completion)
        if isinstance(decision, ParseFailure):
            memory.add(
                MemoryKind.FAILURE_OBSERVATION,
                f"could not parse action: {decision.detail}",
            )
            continue
        return decision
    raise RetryExhausted(
        f"{retry_limit} completions in a row failed to parse as an action"
    )


@dataclass
class ReactOutcome:
    """Loop result. A bounded loop never raises: exhausting rounds, the
    fail streak, or the model itself all come back as an error outcome
    with the full memory transcript attached."""

    answer: str | None
    rounds: int
    memory: ReactMemory
    error_detail: str | None = None

    @property
    def ok(self) -> bool:
        return self.error_detail is None


def run_react(
    registry: Registry,
    agent: NodeSpec,
    query: str,
    dispatch: Dispatch,
    complete: Complete,
    *,
    max_rounds: int = MAX_REACT_ROUNDS,
    fail_streak_limit: int = FAIL_STREAK_LIMIT,
    retry_limit: int = PARSE_RETRY_LIMIT,
    system_prompt: str | None = None,
) -> ReactOutcome:
    """Drive the reasoning loop for one agent call.

    `dispatch` performs an authorized delegation and reports its outcome;
    `complete` consults the agent's model. Permission checks happen here,
    before dispatch, so denials become observations the model can react to
    instead of hard faults.
    """
    callees = []
    for name in agent.permitted_callees:
        if name in registry:
            callees.append((name, registry.resolve(name).description))
        else:
            callees.append((name, "unavailable"))
    instruction = system_prompt
    if instruction is None:
        instruction = agent.config.get("system_prompt") or agent.description
    memory = ReactMemory()
    memory.add(
        MemoryKind.SYSTEM_PROMPT,
        render_react_system(agent.name, instruction, callees),
    )
    memory.add(MemoryKind.USER_QUERY, query)

    def failed(rounds: int, detail: str) -> ReactOutcome:
        return ReactOutcome(answer=None, rounds=rounds, memory=memory, error_detail=detail)

    fail_streak = 0
    for round_no in range(1, max_rounds + 1):
        try:
            decision = plan_step(complete, memory, retry_limit=retry_limit)
        except RetryExhausted as exc:
            return failed(round_no, str(exc))
        except AgentMeshError as exc:
            return failed(round_no, f"model consultation failed: {exc}")
        if isinstance(decision, Final):
            return ReactOutcome(answer=decision.answer, rounds=round_no, memory=memory)
        memory.add(
            MemoryKind.ACTION_TAKEN,
            {"tool_name": decision.callee, "arguments": decision.arguments},
            source=agent.name,
        )
        if not authorize(registry, agent, decision.callee):
            memory.add(
                MemoryKind.FAILURE_OBSERVATION,
                permission_failure_text(agent.name, decision.callee),
                source=decision.callee,
            )
            fail_streak += 1
        else:
            result = dispatch(decision.callee, decision.arguments)
            if result.ok:
                memory.add(MemoryKind.OBSERVATION, result.output, source=decision.callee)
                fail_streak = 0
            else:
                memory.add(
                    MemoryKind.FAILURE_OBSERVATION,
                    result.error_detail or "call failed",
                    source=decision.callee,
                )
                fail_streak += 1
        if fail_streak >= fail_streak_limit:
            return failed(
                round_no,
                f"{fail_streak} consecutive failed actions for agent '{agent.name}'",
            )
    return failed(max_rounds, f"no final answer within {max_rounds} rounds")

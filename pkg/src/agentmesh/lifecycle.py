"""Call envelopes, the five-stage lifecycle vocabulary, and aspects.

Every call traverses the same ordered stages:

    pre_process -> pre_save_data -> execute -> post_process -> format_output

Aspects attach at (stage, phase) joinpoints. They observe and annotate;
annotations land in the trace, never in the payload, so the response with
any aspect set is identical to the response with none.
"""

from __future__ import annotations

import copy
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

from .common import new_id
from .errors import InvalidSelector
from .nodes import NodeKind
from .scopes import ScopeLevel, ScopeStore


class LifecycleStage(str, Enum):
    PRE_PROCESS = "pre_process"
    PRE_SAVE_DATA = "pre_save_data"
    EXECUTE = "execute"
    POST_PROCESS = "post_process"
    FORMAT_OUTPUT = "format_output"


STAGE_ORDER = (
    LifecycleStage.PRE_PROCESS,
    LifecycleStage.PRE_SAVE_DATA,
    LifecycleStage.EXECUTE,
    LifecycleStage.POST_PROCESS,
    LifecycleStage.FORMAT_OUTPUT,
)


class AspectPhase(str, Enum):
    BEFORE = "before"
    AFTER = "after"


class CallStatus(str, Enum):
    OK = "ok"
    ERROR = "error"


@dataclass
class CallRequest:
    """The envelope dispatched through the lifecycle.

    `request_id` identifies the whole inference trajectory (shared by every
    nested call); `call_id` identifies this one call. `call_chain` lists the
    caller lineage from the root, ending with this call's caller.
    """

    request_id: str
    call_id: str
    caller: str
    callee: str
    arguments: dict[str, Any]
    group_id: str | None = None
    call_chain: tuple[str, ...] = ()
    parent_call_id: str | None = None
    scopes: ScopeStore | None = None
    overrides: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        # invariant: call_chain is non-empty and ends with the caller
        if not self.call_chain:
            self.call_chain = (self.caller,)

    def child(self, callee: str, arguments: dict[str, Any]) -> "CallRequest":
        """Build the request for a nested call; arguments pass verbatim,
        nothing is merged from this call's node scope."""
        return CallRequest(
            request_id=self.request_id,
            call_id="c-" + new_id(),
            caller=self.callee,
            callee=callee,
            arguments=dict(arguments),
            group_id=self.group_id,
            call_chain=self.call_chain + (self.callee,),
            parent_call_id=self.call_id,
            scopes=self.scopes,
        )

    # -- node scope ----------------------------------------------------------

    def get_arguments(self) -> dict[str, Any]:
        return self.arguments

    def set_argument(self, key: str, value: Any) -> None:
        self.arguments[key] = value

    # -- shared scopes (one get/set pair per level) ----------------------------

    def set_global_data(self, key: str, value: Any) -> None:
        self._scopes().set(ScopeLevel.APPLICATION, key, value)

    def get_global_data(self, key: str) -> Any:
        return self._scopes().get(ScopeLevel.APPLICATION, key)

    def set_group_data(self, key: str, value: Any) -> None:
        self._scopes().set(ScopeLevel.SESSION_GROUP, key, value, group_id=self.group_id)

    def get_group_data(self, key: str) -> Any:
        return self._scopes().get(ScopeLevel.SESSION_GROUP, key, group_id=self.group_id)

    def set_shared_data(self, key: str, value: Any) -> None:
        self._scopes().set(ScopeLevel.REQUEST, key, value, request_id=self.request_id)

    def get_shared_data(self, key: str) -> Any:
        return self._scopes().get(ScopeLevel.REQUEST, key, request_id=self.request_id)

    def _scopes(self) -> ScopeStore:
        if self.scopes is None:
            raise RuntimeError("request has no scope store attached")
        return self.scopes


def scoped_set(request: CallRequest, level: ScopeLevel, key: str, value: Any) -> None:
    """Write through the request's identity at the addressed tier."""
    if level is ScopeLevel.NODE:
        request.set_argument(key, value)
        return
    request._scopes().set(
        level, key, value, request_id=request.request_id, group_id=request.group_id
    )


def scoped_get(request: CallRequest, level: ScopeLevel, key: str) -> Any:
    if level is ScopeLevel.NODE:
        from .scopes import ABSENT

        return request.arguments.get(key, ABSENT)
    return request._scopes().get(
        level, key, request_id=request.request_id, group_id=request.group_id
    )


@dataclass
class CallResponse:
    status: CallStatus
    output: Any = None
    error_detail: str | None = None
    timing: dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status is CallStatus.OK

    def as_dict(self) -> dict[str, Any]:
        return {
            "status": self.status.value,
            "output": self.output,
            "error_detail": self.error_detail,
            "timing": dict(self.timing),
        }


class StageError(Exception):
    """Failure inside a lifecycle stage; converted to an error response,
    never raised past the call boundary.

    `extra` keys are merged into the error envelope the callee returns, so
    a failing agent can attach its reasoning memory for the caller to read.
    """

    def __init__(self, stage: LifecycleStage, detail: str, extra: dict[str, Any] | None = None):
        super().__init__(f"{stage.value}: {detail}")
        self.stage = stage
        self.detail = detail
        self.extra = dict(extra or {})


@dataclass(frozen=True)
class AspectContext:
    """What a handler sees at a joinpoint: deep-copied snapshots only."""

    node: str
    kind: NodeKind
    stage: LifecycleStage
    phase: AspectPhase
    request_id: str
    call_id: str
    arguments: dict[str, Any]
    response: dict[str, Any] | None
    _annotations: list[dict[str, Any]] = field(default_factory=list, repr=False)

    def annotate(self, value: Any) -> None:
        """Append an annotation; it is recorded on the trace event for this
        joinpoint and never touches the payload."""
        self._annotations.append(value)


Selector = Callable[[str, NodeKind], bool]
Handler = Callable[[AspectContext], None]


@dataclass
class Aspect:
    stage: LifecycleStage
    phase: AspectPhase
    selector: Selector
    handler: Handler
    aspect_id: str = field(default_factory=new_id)


class AspectRegistry:
    """Holds aspects; fires them in registration order within a joinpoint."""

    def __init__(self) -> None:
        self._aspects: list[Aspect] = []
        self._lock = threading.Lock()

    def register(self, aspect: Aspect) -> str:
        if not isinstance(aspect.stage, LifecycleStage) or not isinstance(
            aspect.phase, AspectPhase
        ):
            raise InvalidSelector("aspect stage/phase must be lifecycle enums")
        if not callable(aspect.selector) or not callable(aspect.handler):
            raise InvalidSelector("aspect selector and handler must be callable")
        with self._lock:
            self._aspects.append(aspect)
        return aspect.aspect_id

    def fire(
        self,
        node: str,
        kind: NodeKind,
        stage: LifecycleStage,
        phase: AspectPhase,
        request: CallRequest,
        response: CallResponse | None,
    ) -> list[dict[str, Any]]:
        """Run matching handlers on snapshots; return their annotations.

        Handlers receive deep copies, so payload mutation attempts are
        ignored by construction.
        """
        with self._lock:
            aspects = list(self._aspects)
        annotations: list[dict[str, Any]] = []
        for aspect in aspects:
            if aspect.stage is not stage or aspect.phase is not phase:
                continue
            try:
                if not aspect.selector(node, kind):
                    continue
            except Exception:
                continue
            ctx = AspectContext(
                node=node,
                kind=kind,
                stage=stage,
                phase=phase,
                request_id=request.request_id,
                call_id=request.call_id,
                arguments=copy.deepcopy(request.arguments),
                response=copy.deepcopy(response.as_dict()) if response else None,
            )
            try:
                aspect.handler(ctx)
            except Exception:
                continue  # observers never break the call
            for value in ctx._annotations:
                annotations.append({"aspect_id": aspect.aspect_id, "value": value})
        return annotations

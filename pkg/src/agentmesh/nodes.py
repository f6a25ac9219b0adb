"""Node specs and the registry.

Agents, tools, model endpoints, and flows all register through the same
spec shape and live in one flat namespace. Permission lists may reference
names that are not registered yet (hot-plugging); dangling references are
reported by `validate_topology` and rejected at call time.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterator

from .errors import InvalidSpec, NameConflict, NodeNotFound

USER_CALLER = "__user__"


class NodeKind(str, Enum):
    AGENT = "agent"
    TOOL = "tool"
    LLM = "llm"
    FLOW = "flow"


# Leaf kinds never delegate: their permitted_callees must stay empty.
LEAF_KINDS = (NodeKind.TOOL, NodeKind.LLM)


@dataclass(frozen=True)
class NodeSpec:
    """A registered atomic component.

    `permitted_callees` order is preserved exactly as declared; it is the
    deterministic tie-break order for planning.
    """

    name: str
    kind: NodeKind
    description: str = ""
    permitted_callees: tuple[str, ...] = ()
    config: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "permitted_callees", tuple(self.permitted_callees))

    def validate(self) -> None:
        # permission hygiene (dangling callees, leaves that declare callees)
        # is deliberately not checked here: registration order is free, and
        # validate_topology reports those as issues instead.
        if not self.name or not isinstance(self.name, str):
            raise InvalidSpec("node name must be a non-empty string")
        if not isinstance(self.kind, NodeKind):
            raise InvalidSpec(f"unknown node kind: {self.kind!r}")

    def model_node(self) -> str | None:
        """Name of the agent's bound model node, if any."""
        value = self.config.get("model")
        return value if isinstance(value, str) and value else None


@dataclass(frozen=True)
class TopologyIssue:
    kind: str  # dangling_permission | unreachable_node | leaf_with_permissions | cycle
    subject: str
    detail: str
    severity: str = "error"  # error | info

    def as_dict(self) -> dict[str, str]:
        return {
            "kind": self.kind,
            "subject": self.subject,
            "detail": self.detail,
            "severity": self.severity,
        }


class Registry:
    """Name-keyed node registry; concurrent reads, serialized registration.

    Registered specs are immutable from the outside; the only sanctioned
    mutation path is `update_config`, used by prompt application to
    hot-update an agent's system prompt.
    """

    def __init__(self) -> None:
        self._specs: dict[str, NodeSpec] = {}
        self._order: list[str] = []
        self._entrypoint: str | None = None
        self._lock = threading.Lock()

    def register(self, spec: NodeSpec) -> None:
        spec.validate()
        with self._lock:
            if spec.name in self._specs:
                raise NameConflict(f"node {spec.name!r} already registered")
            self._specs[spec.name] = spec
            self._order.append(spec.name)

    def resolve(self, name: str) -> NodeSpec:
        try:
            return self._specs[name]
        except KeyError:
            raise NodeNotFound(f"node {name!r} is not registered") from None

    def __contains__(self, name: str) -> bool:
        return name in self._specs

    def __iter__(self) -> Iterator[NodeSpec]:
        return iter([self._specs[n] for n in self._order])

    def names(self) -> list[str]:
        return list(self._order)

    @property
    def entrypoint(self) -> str | None:
        return self._entrypoint

    def set_entrypoint(self, name: str) -> None:
        if name not in self._specs:
            raise NodeNotFound(f"entrypoint {name!r} is not registered")
        self._entrypoint = name

    def update_config(self, name: str, key: str, value: Any) -> NodeSpec:
        """Hot-update one config key of a registered spec (e.g. system_prompt)."""
        with self._lock:
            spec = self.resolve(name)
            new_config = dict(spec.config)
            new_config[key] = value
            updated = replace(spec, config=new_config)
            self._specs[name] = updated
            return updated

    # -- topology -----------------------------------------------------------

    def _edges(self, spec: NodeSpec) -> list[str]:
        """Outgoing reachability edges: permissions plus the model binding."""
        out = list(spec.permitted_callees)
        model = spec.model_node()
        if model is not None:
            out.append(model)
        return out

    def validate_topology(self) -> list[TopologyIssue]:
        """Static checks over the registered spec set, ordered by node name.

        Output is a pure function of the spec set plus the entrypoint;
        registration interleaving does not matter. Cycles among agents are
        informational only, since dynamic planning may revisit nodes.
        """
        specs = dict(self._specs)
        issues: list[TopologyIssue] = []

        for name in sorted(specs):
            spec = specs[name]
            for callee in spec.permitted_callees:
                if callee not in specs:
                    issues.append(
                        TopologyIssue(
                            "dangling_permission",
                            name,
                            f"{name} permits unregistered node {callee!r}",
                        )
                    )
            model = spec.model_node()
            if model is not None and model not in specs:
                issues.append(
                    TopologyIssue(
                        "dangling_permission",
                        name,
                        f"{name} binds unregistered model node {model!r}",
                    )
                )
            if spec.kind in LEAF_KINDS and spec.permitted_callees:
                issues.append(
                    TopologyIssue(
                        "leaf_with_permissions",
                        name,
                        f"{spec.kind.value} node {name} declares permitted callees",
                    )
                )

        if self._entrypoint is not None and self._entrypoint in specs:
            reachable = {self._entrypoint}
            frontier = [self._entrypoint]
            while frontier:
                current = frontier.pop()
                for callee in self._edges(specs[current]):
                    if callee in specs and callee not in reachable:
                        reachable.add(callee)
                        frontier.append(callee)
            for name in sorted(specs):
                if name not in reachable:
                    issues.append(
                        TopologyIssue(
                            "unreachable_node",
                            name,
                            f"{name} is not reachable from entrypoint {self._entrypoint}",
                        )
                    )

        issues.extend(self._agent_cycles(specs))
        return sorted(issues, key=lambda i: (i.subject, i.kind, i.detail))

    def _agent_cycles(self, specs: dict[str, NodeSpec]) -> list[TopologyIssue]:
        """Report cycles over agent-to-agent permission edges as info."""
        agents = {n for n, s in specs.items() if s.kind is NodeKind.AGENT}
        color: dict[str, int] = {}
        found: list[TopologyIssue] = []

        def visit(node: str, path: list[str]) -> None:
            color[node] = 1
            for callee in specs[node].permitted_callees:
                if callee not in agents:
                    continue
                if color.get(callee) == 1:
                    # a gray callee is always on the active path
                    cycle = path[path.index(callee):] + [callee]
                    found.append(
                        TopologyIssue(
                            "cycle",
                            min(cycle),
                            "agent cycle: " + " -> ".join(cycle),
                            severity="info",
                        )
                    )
                elif color.get(callee, 0) == 0:
                    visit(callee, path + [callee])
            color[node] = 2

        for name in sorted(agents):
            if color.get(name, 0) == 0:
                visit(name, [name])
        return found

    def permission_edges(self) -> list[tuple[str, str]]:
        """Declared permission edges, in registration and declaration order."""
        edges = []
        for name in self._order:
            for callee in self._specs[name].permitted_callees:
                edges.append((name, callee))
        return edges

    def binding_edges(self) -> list[tuple[str, str]]:
        """Agent-to-model binding edges."""
        edges = []
        for name in self._order:
            model = self._specs[name].model_node()
            if model is not None:
                edges.append((name, model))
        return edges

"""Exception hierarchy shared across the runtime, tracer, bank, and service."""

from __future__ import annotations


class AgentMeshError(Exception):
    """Base class for all agentmesh errors; carries a stable machine code."""

    code = "internal_error"


class NameConflict(AgentMeshError):
    code = "name_conflict"


class InvalidSpec(AgentMeshError):
    code = "invalid_spec"


class NodeNotFound(AgentMeshError):
    code = "node_not_found"


class InvalidSelector(AgentMeshError):
    code = "invalid_selector"


class MissingGroupId(AgentMeshError):
    code = "missing_group_id"


class SealedTrace(AgentMeshError):
    code = "sealed_trace"


class UnsealedTrace(AgentMeshError):
    code = "unsealed_trace"


class UnknownTrace(AgentMeshError):
    code = "unknown_trace"


class UnknownCall(AgentMeshError):
    code = "unknown_call"


class OverrideInvalid(AgentMeshError):
    code = "override_invalid"


class InvalidTransition(AgentMeshError):
    code = "invalid_transition"


class TemplateViolation(AgentMeshError):
    code = "template_violation"


class UnknownTemplate(AgentMeshError):
    code = "unknown_template"


class UnknownRecord(AgentMeshError):
    code = "unknown_record"


class NoApprovedTraces(AgentMeshError):
    code = "no_approved_traces"


class ModelUnavailable(AgentMeshError):
    code = "model_unavailable"


class NoRuleMatched(AgentMeshError):
    code = "no_rule_matched"


class RetryExhausted(AgentMeshError):
    code = "retry_exhausted"


class NoEntrypoint(AgentMeshError):
    code = "no_entrypoint"


class ConfigError(AgentMeshError):
    code = "config_error"


class InvalidRequest(AgentMeshError):
    code = "invalid_request"

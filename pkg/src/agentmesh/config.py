"""Mesh configuration: one JSON or YAML file describing nodes, model
bindings, and runtime settings, turned into a ready Runtime."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError
from .nodes import NodeKind, NodeSpec, Registry
from .runtime import Runtime, RuntimeSettings

NODE_KEYS = {"name", "kind", "description", "permitted_callees", "config"}
PLANNING_MODES = {"react", "fixed_flow"}


def load_config(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix == ".json":
            raw = json.loads(text)
        else:
            raw = yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path.name}: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    raw.setdefault("__dir__", str(path.parent))
    return raw


def _resolve_path(value: Any, base: Path) -> Any:
    if isinstance(value, str) and not Path(value).is_absolute():
        return str((base / value).resolve())
    return value


def _node_spec(entry: dict[str, Any]) -> NodeSpec:
    if not isinstance(entry, dict):
        raise ConfigError(f"node entry must be a mapping, got {type(entry).__name__}")
    extra = set(entry) - NODE_KEYS
    if extra:
        raise ConfigError(f"node '{entry.get('name')}' has unknown keys: {sorted(extra)}")
    try:
        kind = NodeKind(entry["kind"])
    except (KeyError, ValueError):
        raise ConfigError(f"node '{entry.get('name')}' has a bad kind: {entry.get('kind')!r}")
    config = entry.get("config", {})
    if not isinstance(config, dict):
        raise ConfigError(f"node '{entry.get('name')}' config must be a mapping")
    if kind is NodeKind.AGENT:
        mode = config.get("planning_mode", "react")
        if mode not in PLANNING_MODES:
            raise ConfigError(
                f"node '{entry.get('name')}' has unknown planning_mode {mode!r}; "
                f"expected one of {sorted(PLANNING_MODES)}"
            )
    return NodeSpec(
        name=entry.get("name", ""),
        kind=kind,
        description=entry.get("description", ""),
        permitted_callees=tuple(entry.get("permitted_callees", ())),
        config=config,
    )


def build_runtime(
    config: dict[str, Any] | str | Path, data_dir: str | Path | None = None
) -> Runtime:
    if not isinstance(config, dict):
        config = load_config(config)
    base = Path(config.get("__dir__", "."))
    settings_raw = config.get("settings", {})
    if not isinstance(settings_raw, dict):
        raise ConfigError("settings must be a mapping")

    chosen_dir = data_dir or settings_raw.get("data_dir") or "agentmesh_data"
    settings = RuntimeSettings.from_dict(settings_raw)

    registry = Registry()
    nodes = config.get("nodes", [])
    if not isinstance(nodes, list) or not nodes:
        raise ConfigError("config needs a non-empty 'nodes' list")
    for entry in nodes:
        spec = _node_spec(entry)
        if spec.kind is NodeKind.TOOL and "root" in spec.config:
            spec.config["root"] = _resolve_path(spec.config["root"], base)
        registry.register(spec)

    runtime = Runtime(chosen_dir, registry=registry, settings=settings)

    models = config.get("models", {})
    if not isinstance(models, dict):
        raise ConfigError("'models' must map binding names to configs")
    for name, model_config in models.items():
        if not isinstance(model_config, dict):
            raise ConfigError(f"model '{name}' config must be a mapping")
        model_config = dict(model_config)
        if "rules_file" in model_config:
            model_config["rules_file"] = _resolve_path(model_config["rules_file"], base)
        runtime.add_binding_config(name, model_config)

    entrypoint = settings_raw.get("entrypoint")
    if entrypoint is not None:
        registry.set_entrypoint(entrypoint)
    return runtime

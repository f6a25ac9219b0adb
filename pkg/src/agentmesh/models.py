"""Model bindings: scripted (deterministic, offline) and HTTP chat APIs.

A binding turns a message list into a completion string. The scripted
binding exists so whole multi-agent runs can execute hermetically; the
HTTP binding speaks the common chat-completions shape.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import httpx

from .errors import ConfigError, ModelUnavailable, NoRuleMatched


@dataclass(frozen=True)
class ChatMessage:
    role: str  # "system" | "user" | "assistant"
    content: str

    def as_dict(self) -> dict[str, str]:
        return {"role": self.role, "content": self.content}


def render_transcript(messages: list[ChatMessage]) -> str:
    """Flatten a message list for substring/regex rule matching."""
    return "\n".join(f"{m.role}: {m.content}" for m in messages)


@dataclass
class ScriptedRule:
    reply: str
    match: str | None = None
    match_regex: str | None = None
    max_uses: int | None = None
    uses: int = 0
    _compiled: re.Pattern | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if (self.match is None) == (self.match_regex is None):
            raise ConfigError("rule needs exactly one of 'match' or 'match_regex'")
        if self.match_regex is not None:
            self._compiled = re.compile(self.match_regex, re.DOTALL)
        if self.max_uses is not None and self.max_uses < 1:
            raise ConfigError("max_uses must be a positive integer")

    def exhausted(self) -> bool:
        return self.max_uses is not None and self.uses >= self.max_uses

    def matches(self, transcript: str) -> bool:
        if self.match is not None:
            return self.match in transcript
        assert self._compiled is not None
        return self._compiled.search(transcript) is not None


class ScriptedBinding:
    """Ordered first-match rule table over the flattened transcript.

    Same message sequence in, same completion out, aside from max_uses
    counters which advance one per matched completion.
    """

    def __init__(
        self,
        rules: list[ScriptedRule],
        default_reply: str | None = None,
        name: str = "scripted",
        latency_ms: float = 0.0,
    ):
        self.name = name
        self.rules = rules
        self.default_reply = default_reply
        # simulated inference time, for timing tests
        self.latency_ms = latency_ms
        self._lock = threading.Lock()

    @classmethod
    def from_config(cls, name: str, config: dict[str, Any]) -> "ScriptedBinding":
        raw_rules: Any
        if "rules_file" in config:
            path = Path(config["rules_file"])
            try:
                loaded = json.loads(path.read_text(encoding="utf-8"))
            except FileNotFoundError:
                raise ConfigError(f"rules file not found: {path}")
            except json.JSONDecodeError as exc:
                raise ConfigError(f"rules file is not valid JSON: {exc}")
            if isinstance(loaded, dict):
                raw_rules = loaded.get("rules", [])
                default_reply = config.get("default_reply", loaded.get("default_reply"))
            else:
                raw_rules = loaded
                default_reply = config.get("default_reply")
        elif "rules" in config:
            raw_rules = config["rules"]
            default_reply = config.get("default_reply")
        else:
            raise ConfigError("scripted binding needs 'rules' or 'rules_file'")
        if not isinstance(raw_rules, list):
            raise ConfigError("rules must be a list")
        rules = []
        for entry in raw_rules:
            if not isinstance(entry, dict) or "reply" not in entry:
                raise ConfigError(f"bad rule entry: {entry!r}")
            rules.append(
                ScriptedRule(
                    reply=entry["reply"],
                    match=entry.get("match"),
                    match_regex=entry.get("match_regex"),
                    max_uses=entry.get("max_uses"),
                )
            )
        return cls(
            rules,
            default_reply=default_reply,
            name=name,
            latency_ms=float(config.get("latency_ms", 0.0)),
        )

    def complete(self, messages: list[ChatMessage]) -> str:
        if self.latency_ms > 0:
            time.sleep(self.latency_ms / 1000.0)
        transcript = render_transcript(messages)
        with self._lock:
            for rule in self.rules:
                if rule.exhausted():
                    continue
                if rule.matches(transcript):
                    rule.uses += 1
                    return rule.reply
            if self.default_reply is not None:
                return self.default_reply
        raise NoRuleMatched(
            f"binding '{self.name}' has no rule for this transcript "
            f"(tail: {transcript[-200:]!r})"
        )


class HttpBinding:
    """Chat-completions over HTTP. The auth token comes from the process
    environment via a named variable; it is never read from config values."""

    def __init__(
        self,
        name: str,
        base_url: str,
        model: str,
        api_key_env: str | None = None,
        timeout_s: float = 30.0,
        temperature: float | None = None,
    ):
        self.name = name
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout_s = timeout_s
        self.temperature = temperature

    @classmethod
    def from_config(cls, name: str, config: dict[str, Any]) -> "HttpBinding":
        for forbidden in ("api_key", "token", "secret"):
            if forbidden in config:
                raise ConfigError(
                    f"binding '{name}' puts a credential in config; "
                    f"use 'api_key_env' to name an environment variable"
                )
        try:
            base_url = config["base_url"]
            model = config["model"]
        except KeyError as exc:
            raise ConfigError(f"http binding '{name}' missing {exc.args[0]!r}")
        return cls(
            name=name,
            base_url=base_url,
            model=model,
            api_key_env=config.get("api_key_env"),
            timeout_s=float(config.get("timeout_s", 30.0)),
            temperature=config.get("temperature"),
        )

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            token = os.environ.get(self.api_key_env)
            if not token:
                raise ModelUnavailable(
                    f"environment variable {self.api_key_env} is not set"
                )
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(self, messages: list[ChatMessage]) -> str:
        payload: dict[str, Any] = {
            "model": self.model,
            "messages": [m.as_dict() for m in messages],
        }
        if self.temperature is not None:
            payload["temperature"] = self.temperature
        url = f"{self.base_url}/chat/completions"
        last_exc: Exception | None = None
        for attempt in range(2):  # one retry, on timeout only
            try:
                resp = httpx.post(
                    url, json=payload, headers=self._headers(), timeout=self.timeout_s
                )
            except httpx.TimeoutException as exc:
                last_exc = exc
                continue
            except httpx.HTTPError as exc:
                raise ModelUnavailable(f"transport error calling {self.name}: {exc}")
            if resp.status_code != 200:
                raise ModelUnavailable(
                    f"binding '{self.name}' returned HTTP {resp.status_code}"
                )
            try:
                body = resp.json()
                return body["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise ModelUnavailable(f"malformed completion payload: {exc}")
        raise ModelUnavailable(f"binding '{self.name}' timed out twice: {last_exc}")


Binding = ScriptedBinding | HttpBinding


def build_binding(name: str, config: dict[str, Any]) -> Binding:
    provider = config.get("provider", "scripted")
    if provider == "scripted":
        return ScriptedBinding.from_config(name, config)
    if provider == "http":
        return HttpBinding.from_config(name, config)
    raise ConfigError(f"unknown model provider {provider!r} for binding '{name}'")


class ModelHub:
    """Name -> binding map; llm nodes resolve their completion through it."""

    def __init__(self) -> None:
        self._bindings: dict[str, Binding] = {}
        self._lock = threading.Lock()

    def add(self, name: str, binding: Binding) -> None:
        with self._lock:
            self._bindings[name] = binding

    def get(self, name: str) -> Binding:
        with self._lock:
            try:
                return self._bindings[name]
            except KeyError:
                raise ModelUnavailable(f"no model binding named '{name}'")

    def complete(self, name: str, messages: list[ChatMessage]) -> str:
        return self.get(name).complete(messages)

import threading
import time
from types import SimpleNamespace

import httpx
import pytest

from agentmesh.errors import ConfigError, ModelUnavailable, NoRuleMatched
from agentmesh.models import (
    ChatMessage,
    HttpBinding,
    ModelHub,
    ScriptedBinding,
    ScriptedRule,
    build_binding,
    render_transcript,
)

from conftest import rule


def msgs(*contents):
    return [ChatMessage(role="user", content=c) for c in contents]


def test_render_transcript_role_prefixed_lines():
    out = render_transcript(
        [ChatMessage("system", "be brief"), ChatMessage("user", "hi")]
    )
    assert out == "system: be brief\nuser: hi"


def test_rule_needs_exactly_one_matcher():
    with pytest.raises(ConfigError):
        ScriptedRule(reply="x")
    with pytest.raises(ConfigError):
        ScriptedRule(reply="x", match="a", match_regex="b")
    with pytest.raises(ConfigError):
        ScriptedRule(reply="x", match="a", max_uses=0)


def test_rule_regex_spans_lines():
    r = rule("yes", regex="start.*end")
    assert r.matches("start\nmiddle\nend")


def test_first_matching_rule_wins():
    binding = ScriptedBinding([rule("one", match="q"), rule("two", match="q")])
    assert binding.complete(msgs("q")) == "one"


def test_max_uses_falls_through_to_later_rules():
    binding = ScriptedBinding(
        [rule("limited", match="q", max_uses=1), rule("fallback", match="q")]
    )
    assert binding.complete(msgs("q")) == "limited"
    assert binding.complete(msgs("q")) == "fallback"


def test_default_reply_and_no_rule_matched():
    with_default = ScriptedBinding([], default_reply="dunno")
    assert with_default.complete(msgs("anything")) == "dunno"
    bare = ScriptedBinding([rule("x", match="never-there")])
    with pytest.raises(NoRuleMatched):
        bare.complete(msgs("anything"))


def test_same_transcript_same_completion():
    binding = ScriptedBinding([rule("stable", match="q")])
    assert binding.complete(msgs("q")) == binding.complete(msgs("q"))


def test_max_uses_is_thread_safe():
    binding = ScriptedBinding(
        [rule("prize", match="q", max_uses=1)], default_reply="miss"
    )
    results = []
    barrier = threading.Barrier(8)

    def worker():
        barrier.wait()
        results.append(binding.complete(msgs("q")))

    threads = [threading.Thread(target=worker) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert results.count("prize") == 1
    assert results.count("miss") == 7


def test_latency_ms_delays_completion():
    binding = ScriptedBinding([], default_reply="ok", latency_ms=40)
    t0 = time.perf_counter()
    binding.complete(msgs("q"))
    assert (time.perf_counter() - t0) * 1000 >= 35


def test_from_config_rules_inline_and_file(tmp_path):
    binding = ScriptedBinding.from_config(
        "b", {"rules": [{"match": "q", "reply": "a"}], "default_reply": "d"}
    )
    assert binding.complete(msgs("q")) == "a"
    assert binding.complete(msgs("zzz")) == "d"

    path = tmp_path / "rules.json"
    path.write_text('{"default_reply": "d2", "rules": [{"match_regex": "x+", "reply": "r"}]}')
    from_file = ScriptedBinding.from_config("b2", {"rules_file": str(path)})
    assert from_file.complete(msgs("xxx")) == "r"
    assert from_file.default_reply == "d2"

    with pytest.raises(ConfigError):
        ScriptedBinding.from_config("b3", {})
    with pytest.raises(ConfigError):
        ScriptedBinding.from_config("b4", {"rules_file": str(tmp_path / "missing.json")})
    with pytest.raises(ConfigError):
        ScriptedBinding.from_config("b5", {"rules": [{"match": "no-reply-key"}]})


# -- http binding ---------------------------------------------------------------


def ok_response(content="hello"):
    return SimpleNamespace(
        status_code=200,
        json=lambda: {"choices": [{"message": {"content": content}}]},
    )


def test_http_config_rejects_inline_credentials():
    for key in ("api_key", "token", "secret"):
        with pytest.raises(ConfigError):
            HttpBinding.from_config(
                "b", {"base_url": "http://x", "model": "m", key: "hunter2"}
            )


def test_http_config_requires_url_and_model():
    with pytest.raises(ConfigError):
        HttpBinding.from_config("b", {"model": "m"})
    with pytest.raises(ConfigError):
        HttpBinding.from_config("b", {"base_url": "http://x"})


def test_auth_token_comes_from_named_env_var(monkeypatch):
    binding = HttpBinding("b", "http://x", "m", api_key_env="TEST_MODEL_KEY")
    monkeypatch.delenv("TEST_MODEL_KEY", raising=False)
    with pytest.raises(ModelUnavailable):
        binding._headers()
    monkeypatch.setenv("TEST_MODEL_KEY", "tok-123")
    assert binding._headers()["Authorization"] == "Bearer tok-123"


def test_http_complete_success(monkeypatch):
    calls = []

    def fake_post(url, **kw):
        calls.append((url, kw))
        return ok_response("answer!")

    monkeypatch.setattr(httpx, "post", fake_post)
    binding = HttpBinding("b", "http://x/v1/", "m", temperature=0.2)
    assert binding.complete(msgs("hi")) == "answer!"
    url, kw = calls[0]
    assert url == "http://x/v1/chat/completions"
    assert kw["json"]["model"] == "m"
    assert kw["json"]["temperature"] == 0.2
    assert kw["json"]["messages"] == [{"role": "user", "content": "hi"}]


def test_http_retries_once_on_timeout_only(monkeypatch):
    attempts = []

    def flaky_post(url, **kw):
        attempts.append(1)
        if len(attempts) == 1:
            raise httpx.ReadTimeout("slow")
        return ok_response("eventually")

    monkeypatch.setattr(httpx, "post", flaky_post)
    binding = HttpBinding("b", "http://x", "m")
    assert binding.complete(msgs("hi")) == "eventually"
    assert len(attempts) == 2


def test_http_gives_up_after_second_timeout(monkeypatch):
    attempts = []

    def always_slow(url, **kw):
        attempts.append(1)
        raise httpx.ReadTimeout("slow")

    monkeypatch.setattr(httpx, "post", always_slow)
    with pytest.raises(ModelUnavailable, match="timed out twice"):
        HttpBinding("b", "http://x", "m").complete(msgs("hi"))
    assert len(attempts) == 2


def test_http_transport_error_is_not_retried(monkeypatch):
    attempts = []

    def broken(url, **kw):
        attempts.append(1)
        raise httpx.ConnectError("refused")

    monkeypatch.setattr(httpx, "post", broken)
    with pytest.raises(ModelUnavailable):
        HttpBinding("b", "http://x", "m").complete(msgs("hi"))
    assert len(attempts) == 1


def test_http_bad_status_and_bad_body(monkeypatch):
    monkeypatch.setattr(
        httpx, "post", lambda url, **kw: SimpleNamespace(status_code=500, json=dict)
    )
    with pytest.raises(ModelUnavailable, match="HTTP 500"):
        HttpBinding("b", "http://x", "m").complete(msgs("hi"))

    monkeypatch.setattr(
        httpx, "post", lambda url, **kw: SimpleNamespace(status_code=200, json=lambda: {"nope": 1})
    )
    with pytest.raises(ModelUnavailable, match="malformed"):
        HttpBinding("b", "http://x", "m").complete(msgs("hi"))


def test_build_binding_dispatch():
    scripted = build_binding("s", {"rules": []})
    assert isinstance(scripted, ScriptedBinding)
    http = build_binding("h", {"provider": "http", "base_url": "http://x", "model": "m"})
    assert isinstance(http, HttpBinding)
    with pytest.raises(ConfigError):
        build_binding("x", {"provider": "quantum"})


def test_hub_lookup_and_missing():
    hub = ModelHub()
    hub.add("s", ScriptedBinding([], default_reply="hi"))
    assert hub.complete("s", msgs("q")) == "hi"
    with pytest.raises(ModelUnavailable):
        hub.get("ghost")

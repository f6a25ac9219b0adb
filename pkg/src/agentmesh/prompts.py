"""Pinned prompt templates, addressed by version.

Templates live here and nowhere else, so the planner loop, the prompt
optimizer, and the tests all render from the same strings. New wording
gets a new version key; old keys never change meaning.
"""

from __future__ import annotations

# rendered observations larger than this are clipped in the prompt only;
# memory and trace keep the full value
OBSERVATION_PROMPT_LIMIT = 8 * 1024

# knowledge excerpts fed to the optimizer: at most this many, each clipped
EXCERPT_COUNT = 5
EXCERPT_LIMIT_BYTES = 2048

REACT_SYSTEM_V1 = """\
You are {agent_name}.
{instruction}

You may call these helpers:
{tools_block}

Work one step at a time. To call a helper, reply with exactly one JSON object:
{{"tool_name": "<name>", "arguments": {{...}}}}
To finish, reply with the final answer as plain text that contains no JSON object.
Results of your calls come back as observation messages."""

OPTIMIZER_SYSTEM_V1 = """\
You improve system prompts for the agent {agent_name}.

Current prompt:
---
{current_prompt}
---

Approved interaction excerpts ({excerpt_count} shown):
{excerpts_block}

Reply with a single improved system prompt as plain text. Keep the calling
contract identical: one JSON object with "tool_name" and "arguments" to
delegate, plain text to finish."""

PROMPT_VERSIONS = {
    "react_system": {"v1": REACT_SYSTEM_V1},
    "optimizer_system": {"v1": OPTIMIZER_SYSTEM_V1},
}


def render_tools_block(callees: list[tuple[str, str]]) -> str:
    if not callees:
        return "(none)"
    return "\n".join(f"- {name}: {desc or 'no description'}" for name, desc in callees)


def render_react_system(
    agent_name: str,
    instruction: str,
    callees: list[tuple[str, str]],
    version: str = "v1",
) -> str:
    template = PROMPT_VERSIONS["react_system"][version]
    return template.format(
        agent_name=agent_name,
        instruction=instruction or "You coordinate helpers to answer the user.",
        tools_block=render_tools_block(callees),
    )


def clip_excerpt(text: str, limit: int = EXCERPT_LIMIT_BYTES) -> str:
    encoded = text.encode("utf-8")
    if len(encoded) <= limit:
        return text
    clipped = encoded[:limit].decode("utf-8", errors="ignore")
    return clipped + " ...[clipped]"


def render_optimizer(
    agent_name: str,
    current_prompt: str,
    excerpts: list[str],
    version: str = "v1",
) -> str:
    chosen = [clip_excerpt(e) for e in excerpts[:EXCERPT_COUNT]]
    block = "\n".join(f"[{i + 1}] {text}" for i, text in enumerate(chosen)) or "(none)"
    template = PROMPT_VERSIONS["optimizer_system"][version]
    return template.format(
        agent_name=agent_name,
        current_prompt=current_prompt,
        excerpt_count=len(chosen),
        excerpts_block=block,
    )

"""Fenced-block envelope parsing shared by the agent loops.

Agent replies carry structured payloads in markdown fences whose info string
names the payload kind (tool, done, plan, verdict, ...). Payload bodies must
not themselves contain a line starting with three backticks.
"""

from __future__ import annotations

import json
import re

from .workspace import ToolCall

_FENCE_RE = re.compile(
    r"^```([A-Za-z_][\w-]*)[ \t]*\n(.*?)^```[ \t]*$",
    re.MULTILINE | re.DOTALL,
)


def extract_blocks(text: str) -> list[tuple[str, str]]:
    """Return (name, body) for every fenced block, in order of appearance."""
    found = []
    for match in _FENCE_RE.finditer(text):
        body = match.group(2)
        if body.endswith("\n"):
            body = body[:-1]
        found.append((match.group(1), body))
    return found


def blocks_named(text: str, name: str) -> list[str]:
    return [body for kind, body in extract_blocks(text) if kind == name]


def first_block(text: str, name: str) -> str | None:
    for kind, body in extract_blocks(text):
        if kind == name:
            return body
    return None


def parse_tool_call(body: str) -> ToolCall | None:
    """Decode a `tool` block body: {"tool": name, "args": {str: str}}.

    Returns None for anything malformed; agent loops answer with a format
    reminder instead of failing.
    """
    try:
        payload = json.loads(body)
    except json.JSONDecodeError:
        return None
    if not isinstance(payload, dict) or not isinstance(payload.get("tool"), str):
        return None
    args = payload.get("args", {})
    if not isinstance(args, dict):
        return None
    if any(not isinstance(k, str) or not isinstance(v, str) for k, v in args.items()):
        return None
    return ToolCall(tool=payload["tool"], args=args)

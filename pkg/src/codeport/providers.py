"""Completion-provider seam: scripted replay, HTTP chat backend, transcripts.

The engine never inspects provider identity; any object with a
`complete(request) -> CompletionResponse` method works. The scripted backend
makes the whole pipeline deterministic and testable offline; the HTTP
backend speaks the de-facto chat-completions wire format.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import requests

from .errors import (
    ConfigError,
    IoFailure,
    PromptTooLarge,
    RemoteError,
    ResponseEmpty,
    ScriptExhausted,
    ScriptMismatch,
    TransportError,
)
from .fsio import atomic_write_text

ROLE_SYSTEM = "system"
ROLE_USER = "user"
ROLE_ASSISTANT = "assistant"
_ROLES = (ROLE_SYSTEM, ROLE_USER, ROLE_ASSISTANT)

DEFAULT_TEMPERATURE = 0.2
DEFAULT_CONTEXT_CHAR_BUDGET = 400_000

SCRIPT_MODE_SEQUENCE = "sequence"
SCRIPT_MODE_TAG = "tag"


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in _ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.role in (ROLE_SYSTEM, ROLE_USER) and not self.content:
            raise ValueError(f"{self.role} message content must be non-empty")


@dataclass(frozen=True)
class CompletionRequest:
    messages: tuple[ChatMessage, ...]
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int | None = None
    tag: str = ""

    def __post_init__(self):
        if not self.messages:
            raise ValueError("request must carry at least one message")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be within [0, 2]")
        system_positions = [i for i, m in enumerate(self.messages) if m.role == ROLE_SYSTEM]
        if system_positions and system_positions != [0]:
            raise ValueError("a system message must be unique and come first")

    @property
    def char_count(self) -> int:
        return sum(len(m.content) for m in self.messages)


@dataclass(frozen=True)
class CompletionResponse:
    content: str
    usage: tuple[int, int] | None = None  # (prompt_tokens, completion_tokens)


class CompletionProvider:
    """Base completion contract. Implementations must be safe for concurrent calls."""

    max_chars: int = DEFAULT_CONTEXT_CHAR_BUDGET

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        raise NotImplementedError

    def _check_budget(self, request: CompletionRequest) -> None:
        if request.char_count > self.max_chars:
            raise PromptTooLarge(
                f"request is {request.char_count} characters, budget {self.max_chars}"
            )


@dataclass
class ScriptEntry:
    """One transcript entry. For script inputs only `response` (and `tag` in
    tag mode) matter; `messages` preserves what was recorded."""

    response: str
    tag: str = ""
    messages: tuple[dict, ...] = ()
    temperature: float = DEFAULT_TEMPERATURE


class ScriptedProvider(CompletionProvider):
    """Deterministic backend replaying a fixed script.

    `sequence` mode consumes entries in order regardless of content;
    `tag` mode serves the first unconsumed entry whose tag matches the
    request. Entries are consumed at most once. Temperature is ignored:
    determinism dominates.
    """

    def __init__(self, entries, mode: str = SCRIPT_MODE_SEQUENCE, max_chars: int | None = None):
        if mode not in (SCRIPT_MODE_SEQUENCE, SCRIPT_MODE_TAG):
            raise ConfigError(f"unknown script mode {mode!r}")
        self._entries = list(entries)
        self._consumed = [False] * len(self._entries)
        self._mode = mode
        self._lock = threading.Lock()
        if max_chars is not None:
            self.max_chars = max_chars

    @classmethod
    def from_file(cls, path, max_chars: int | None = None) -> "ScriptedProvider":
        mode, entries = load_script(path)
        return cls(entries, mode=mode, max_chars=max_chars)

    @property
    def consumed_count(self) -> int:
        return sum(self._consumed)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        self._check_budget(request)
        with self._lock:
            entry = self._pick(request)
        if entry.response == "":
            raise ResponseEmpty(f"script entry for tag {request.tag!r} is empty")
        return CompletionResponse(content=entry.response)

    def _pick(self, request: CompletionRequest) -> ScriptEntry:
        unconsumed = [i for i, done in enumerate(self._consumed) if not done]
        if not unconsumed:
            raise ScriptExhausted(
                f"script exhausted after {len(self._entries)} entries "
                f"(request tag {request.tag!r})"
            )
        if self._mode == SCRIPT_MODE_SEQUENCE:
            index = unconsumed[0]
        else:
            matching = [i for i in unconsumed if self._entries[i].tag == request.tag]
            if not matching:
                raise ScriptMismatch(f"no unconsumed script entry for tag {request.tag!r}")
            index = matching[0]
        self._consumed[index] = True
        return self._entries[index]


def _entry_from_raw(raw: object, where: str) -> ScriptEntry:
    if not isinstance(raw, dict) or "response" not in raw:
        raise ConfigError(f"{where}: script entry must be an object with a 'response'")
    messages = raw.get("messages", [])
    if not isinstance(messages, list):
        raise ConfigError(f"{where}: 'messages' must be a list")
    return ScriptEntry(
        response=str(raw["response"]),
        tag=str(raw.get("tag", "")),
        messages=tuple(messages),
        temperature=float(raw.get("temperature", DEFAULT_TEMPERATURE)),
    )


def parse_script_text(text: str) -> tuple[str, list[ScriptEntry]]:
    """Parse a transcript/script document.

    A bare JSON array (the recorded-transcript form) is a sequence-mode
    script; an object `{"mode": ..., "entries": [...]}` declares its mode.
    """
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"script is not valid JSON: {exc}") from exc
    if isinstance(document, list):
        mode, raw_entries = SCRIPT_MODE_SEQUENCE, document
    elif isinstance(document, dict):
        mode = document.get("mode", SCRIPT_MODE_SEQUENCE)
        raw_entries = document.get("entries", [])
        if not isinstance(raw_entries, list):
            raise ConfigError("script 'entries' must be a list")
    else:
        raise ConfigError("script root must be an array or an object")
    if mode not in (SCRIPT_MODE_SEQUENCE, SCRIPT_MODE_TAG):
        raise ConfigError(f"unknown script mode {mode!r}")
    entries = [_entry_from_raw(raw, f"entries[{i}]") for i, raw in enumerate(raw_entries)]
    return mode, entries


def load_script(path) -> tuple[str, list[ScriptEntry]]:
    return parse_script_text(Path(path).read_text(encoding="utf-8"))


def transcript_entry(request: CompletionRequest, response: CompletionResponse) -> dict:
    return {
        "tag": request.tag,
        "messages": [{"role": m.role, "content": m.content} for m in request.messages],
        "temperature": request.temperature,
        "response": response.content,
    }


def _dump_transcript(document) -> str:
    return json.dumps(document, indent=2, ensure_ascii=False) + "\n"


def record_transcript(path, request: CompletionRequest, response: CompletionResponse) -> None:
    """Append one entry to a transcript file, keeping it valid after every append."""
    path = Path(path)
    entry = transcript_entry(request, response)
    try:
        if path.exists():
            document = json.loads(path.read_text(encoding="utf-8"))
        else:
            document = []
        if isinstance(document, list):
            document.append(entry)
        elif isinstance(document, dict) and isinstance(document.get("entries"), list):
            document["entries"].append(entry)
        else:
            raise IoFailure(f"{path} is not a transcript file")
        atomic_write_text(path, _dump_transcript(document))
    except (OSError, json.JSONDecodeError) as exc:
        raise IoFailure(f"could not append transcript entry to {path}: {exc}") from exc


class RecordingProvider(CompletionProvider):
    """Wraps a provider, appending every exchange to a transcript file."""

    def __init__(self, inner: CompletionProvider, path):
        self._inner = inner
        self._path = Path(path)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        response = self._inner.complete(request)
        record_transcript(self._path, request, response)
        return response


class HttpProvider(CompletionProvider):
    """Generic chat-completions HTTP backend.

    POSTs `{model, messages, temperature[, max_tokens]}` to the endpoint and
    reads the first choice's message content. Transient transport failures
    are retried with exponential backoff; remote HTTP errors fail fast.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        token_env: str | None = None,
        attempts: int = 3,
        backoff_secs: float = 1.0,
        timeout_secs: float = 60.0,
        session=None,
        max_chars: int | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.token_env = token_env
        self.attempts = max(1, attempts)
        self.backoff_secs = backoff_secs
        self.timeout_secs = timeout_secs
        self._session = session if session is not None else requests.Session()
        if max_chars is not None:
            self.max_chars = max_chars

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.token_env:
            token = os.environ.get(self.token_env)
            if not token:
                raise ConfigError(f"bearer token env var {self.token_env!r} is not set")
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        self._check_budget(request)
        payload = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
        }
        if request.max_tokens is not None:
            payload["max_tokens"] = request.max_tokens
        headers = self._headers()

        last_exc: Exception | None = None
        for attempt in range(self.attempts):
            if attempt:
                time.sleep(self.backoff_secs * (2 ** (attempt - 1)))
            try:
                reply = self._session.post(
                    self.endpoint, json=payload, headers=headers, timeout=self.timeout_secs
                )
            except requests.RequestException as exc:
                last_exc = exc
                continue
            return self._parse_reply(reply)
        raise TransportError(
            f"transport failed after {self.attempts} attempt(s): {last_exc}"
        )

    def _parse_reply(self, reply) -> CompletionResponse:
        if not 200 <= reply.status_code < 300:
            raise RemoteError(reply.status_code, reply.text[:200])
        try:
            data = reply.json()
            content = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise RemoteError(reply.status_code, f"unparseable body: {reply.text[:200]}") from exc
        if not content:
            raise ResponseEmpty("remote completion content is empty")
        usage = None
        raw_usage = data.get("usage")
        if isinstance(raw_usage, dict):
            try:
                usage = (int(raw_usage["prompt_tokens"]), int(raw_usage["completion_tokens"]))
            except (KeyError, TypeError, ValueError):
                usage = None
        return CompletionResponse(content=content, usage=usage)

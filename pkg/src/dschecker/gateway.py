"""Provider-agnostic chat interface with tool declarations.

Four providers: live HTTP (chat-completions wire format), scripted (fixed
turn list for tests), replay (recorded transcript keyed by request hash), and
recording (wraps another provider and writes the transcript). The gateway
validates tool-call arguments against the declared schemas but never
interprets message content.
"""
from __future__ import annotations

import hashlib
import json
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from importlib.resources import files
from pathlib import Path
from typing import Iterable, Optional, Protocol, Sequence

import jsonschema
import requests

from .errors import ErrorCode, GatewayError
from .model import GenerationParams

TOOL_GET_VARIABLE_INFO = "get_variable_info"
TOOL_GET_API_DOCUMENTATION = "get_api_documentation"


class Role(str, Enum):
    SYSTEM = "SYSTEM"
    USER = "USER"
    ASSISTANT = "ASSISTANT"
    TOOL_RESULT = "TOOL_RESULT"


@dataclass(frozen=True)
class ToolCall:
    id: str
    name: str
    arguments: dict


@dataclass(frozen=True)
class ChatMessage:
    role: Role
    content: str = ""
    tool_calls: tuple[ToolCall, ...] = ()
    tool_call_id: Optional[str] = None


@dataclass(frozen=True)
class ModelTurn:
    """Either a final text answer or a non-empty batch of tool calls."""

    final_text: Optional[str] = None
    tool_calls: tuple[ToolCall, ...] = ()

    def __post_init__(self) -> None:
        if (self.final_text is None) == (not self.tool_calls):
            raise ValueError("a turn is exactly one of final_text / tool_calls")


@dataclass(frozen=True)
class ToolDeclaration:
    name: str
    description: str
    parameters: dict = field(compare=False)


def load_tool_declarations(path: Optional[Path] = None) -> tuple[ToolDeclaration, ...]:
    if path is None:
        raw = files("dschecker").joinpath("assets/tool_declarations.json").read_text("utf-8")
    else:
        raw = Path(path).read_text(encoding="utf-8")
    return tuple(
        ToolDeclaration(name=d["name"], description=d["description"], parameters=d["parameters"])
        for d in json.loads(raw)
    )


def _message_to_dict(msg: ChatMessage) -> dict:
    out: dict = {"role": msg.role.value, "content": msg.content}
    if msg.tool_calls:
        out["tool_calls"] = [
            {"id": c.id, "name": c.name, "arguments": c.arguments} for c in msg.tool_calls
        ]
    if msg.tool_call_id is not None:
        out["tool_call_id"] = msg.tool_call_id
    return out


def request_digest(
    conversation: Sequence[ChatMessage],
    tools: Sequence[ToolDeclaration],
    params: GenerationParams,
) -> str:
    """Stable hash of (messages, tools, params); the replay transcript key."""
    payload = {
        "messages": [_message_to_dict(m) for m in conversation],
        "tools": [
            {"name": t.name, "description": t.description, "parameters": t.parameters}
            for t in tools
        ],
        "params": {
            "model_name": params.model_name,
            "temperature": params.temperature,
            "max_output_tokens": params.max_output_tokens,
        },
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def turn_to_dict(turn: ModelTurn) -> dict:
    if turn.final_text is not None:
        return {"final_text": turn.final_text}
    return {
        "tool_calls": [
            {"id": c.id, "name": c.name, "arguments": c.arguments} for c in turn.tool_calls
        ]
    }


def turn_from_dict(obj: dict) -> ModelTurn:
    if "final_text" in obj:
        return ModelTurn(final_text=obj["final_text"])
    return ModelTurn(
        tool_calls=tuple(
            ToolCall(id=c["id"], name=c["name"], arguments=c["arguments"])
            for c in obj["tool_calls"]
        )
    )


class Provider(Protocol):
    def next_turn(
        self,
        conversation: Sequence[ChatMessage],
        tools: Sequence[ToolDeclaration],
        params: GenerationParams,
    ) -> ModelTurn: ...


class ScriptedProvider:
    """Returns a fixed sequence of turns regardless of the request."""

    def __init__(self, turns: Iterable[ModelTurn]):
        self._turns = deque(turns)
        self._lock = threading.Lock()
        self.consumed = 0

    def next_turn(self, conversation, tools, params) -> ModelTurn:
        with self._lock:
            if not self._turns:
                raise GatewayError(ErrorCode.REPLAY_MISMATCH, "scripted turns exhausted")
            self.consumed += 1
            return self._turns.popleft()


class ReplayProvider:
    """Serves recorded turns keyed by request hash; no network, ever."""

    def __init__(self, source: Path | str | Sequence[Path | str]):
        paths: list[Path] = []
        if isinstance(source, (str, Path)):
            source = Path(source)
            if source.is_dir():
                paths = sorted(source.glob("*.json"))
            else:
                paths = [source]
        else:
            paths = [Path(p) for p in source]
        self._turns: dict[str, deque[dict]] = {}
        for path in paths:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
            if data.get("version") != 1:
                raise GatewayError(
                    ErrorCode.REPLAY_MISMATCH, f"unsupported transcript version in {path}"
                )
            for exchange in data["exchanges"]:
                self._turns.setdefault(exchange["request"], deque()).append(exchange["turn"])
        self._lock = threading.Lock()

    def next_turn(self, conversation, tools, params) -> ModelTurn:
        digest = request_digest(conversation, tools, params)
        with self._lock:
            queue = self._turns.get(digest)
            if not queue:
                remaining = sum(len(q) for q in self._turns.values())
                raise GatewayError(
                    ErrorCode.REPLAY_MISMATCH,
                    f"no recorded turn for request {digest[:12]}… "
                    f"({remaining} unused recordings remain)",
                )
            return turn_from_dict(queue.popleft())


class RecordingProvider:
    """Wraps a provider and appends every exchange to a transcript file."""

    def __init__(self, inner: Provider, path: Path | str):
        self._inner = inner
        self._path = Path(path)
        self._exchanges: list[dict] = []
        self._lock = threading.Lock()
        if self._path.exists():
            existing = json.loads(self._path.read_text(encoding="utf-8"))
            self._exchanges = existing.get("exchanges", [])

    def next_turn(self, conversation, tools, params) -> ModelTurn:
        turn = self._inner.next_turn(conversation, tools, params)
        digest = request_digest(conversation, tools, params)
        with self._lock:
            self._exchanges.append({"request": digest, "turn": turn_to_dict(turn)})
            self._path.parent.mkdir(parents=True, exist_ok=True)
            self._path.write_text(
                json.dumps({"version": 1, "exchanges": self._exchanges}, indent=2) + "\n",
                encoding="utf-8",
            )
        return turn


class HttpProvider:
    """Chat-completions provider (OpenAI-compatible wire format)."""

    def __init__(self, base_url: str, api_key: str, timeout_s: float = 120.0, retries: int = 3):
        self._base = base_url.rstrip("/")
        self._key = api_key
        self._timeout = timeout_s
        self._retries = retries

    def next_turn(self, conversation, tools, params) -> ModelTurn:
        body: dict = {
            "model": params.model_name,
            "messages": [self._wire_message(m) for m in conversation],
            "temperature": params.temperature,
            "max_tokens": params.max_output_tokens,
        }
        if tools:
            body["tools"] = [
                {
                    "type": "function",
                    "function": {
                        "name": t.name,
                        "description": t.description,
                        "parameters": t.parameters,
                    },
                }
                for t in tools
            ]
        last_error: Optional[GatewayError] = None
        for attempt in range(self._retries):
            if attempt:
                time.sleep(2 ** (attempt - 1))
            try:
                response = requests.post(
                    f"{self._base}/chat/completions",
                    json=body,
                    headers={"Authorization": f"Bearer {self._key}"},
                    timeout=self._timeout,
                )
            except requests.RequestException as exc:
                last_error = GatewayError(ErrorCode.PROVIDER_HTTP, f"request failed: {exc}")
                continue
            if response.status_code == 429:
                last_error = GatewayError(
                    ErrorCode.RATE_LIMITED, "provider rate limit; retry with backoff"
                )
                continue
            if response.status_code >= 500:
                last_error = GatewayError(
                    ErrorCode.PROVIDER_HTTP,
                    f"HTTP {response.status_code}: {response.text[:200]}",
                )
                continue
            if response.status_code != 200:
                raise GatewayError(
                    ErrorCode.PROVIDER_HTTP,
                    f"HTTP {response.status_code}: {response.text[:200]}",
                )
            return self._parse_response(response.json())
        assert last_error is not None
        raise last_error

    @staticmethod
    def _wire_message(msg: ChatMessage) -> dict:
        if msg.role is Role.SYSTEM:
            return {"role": "system", "content": msg.content}
        if msg.role is Role.USER:
            return {"role": "user", "content": msg.content}
        if msg.role is Role.ASSISTANT:
            wire: dict = {"role": "assistant", "content": msg.content or None}
            if msg.tool_calls:
                wire["tool_calls"] = [
                    {
                        "id": c.id,
                        "type": "function",
                        "function": {"name": c.name, "arguments": json.dumps(c.arguments)},
                    }
                    for c in msg.tool_calls
                ]
            return wire
        return {"role": "tool", "tool_call_id": msg.tool_call_id, "content": msg.content}

    @staticmethod
    def _parse_response(payload: dict) -> ModelTurn:
        try:
            message = payload["choices"][0]["message"]
        except (KeyError, IndexError):
            raise GatewayError(
                ErrorCode.PROVIDER_HTTP, "response carries no choices[0].message"
            ) from None
        raw_calls = message.get("tool_calls") or []
        if raw_calls:
            calls = []
            for c in raw_calls:
                try:
                    arguments = json.loads(c["function"]["arguments"])
                except (json.JSONDecodeError, KeyError, TypeError):
                    raise GatewayError(
                        ErrorCode.MALFORMED_TOOL_CALL,
                        f"tool call arguments are not valid JSON: {c!r}",
                    ) from None
                calls.append(ToolCall(id=c["id"], name=c["function"]["name"], arguments=arguments))
            return ModelTurn(tool_calls=tuple(calls))
        return ModelTurn(final_text=message.get("content") or "")


class Gateway:
    """Thin validation layer over a provider; shareable across threads."""

    def __init__(self, provider: Provider):
        self.provider = provider

    def complete(
        self,
        conversation: Sequence[ChatMessage],
        tools: Sequence[ToolDeclaration] = (),
        params: Optional[GenerationParams] = None,
    ) -> ModelTurn:
        if not conversation or conversation[0].role is not Role.SYSTEM:
            raise ValueError("conversation must start with a SYSTEM message")
        if params is None:
            params = GenerationParams(model_name="unspecified")
        turn = self.provider.next_turn(conversation, tools, params)
        if turn.tool_calls:
            by_name = {t.name: t for t in tools}
            for call in turn.tool_calls:
                declaration = by_name.get(call.name)
                if declaration is None:
                    raise GatewayError(
                        ErrorCode.MALFORMED_TOOL_CALL, f"undeclared tool '{call.name}'"
                    )
                try:
                    jsonschema.validate(call.arguments, declaration.parameters)
                except jsonschema.ValidationError as exc:
                    raise GatewayError(
                        ErrorCode.MALFORMED_TOOL_CALL,
                        f"arguments for {call.name} fail schema: {exc.message}",
                    ) from None
        return turn

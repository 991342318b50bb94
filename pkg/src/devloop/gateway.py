"""Chat-completion client with token accounting and record/replay modes.

Live mode posts OpenAI-compatible chat-completion requests over HTTP.
Record mode does the same but appends every exchange to a cassette file
before returning it.  Replay mode answers exclusively from the cassette and
never touches the network, which is what makes whole-pipeline runs
deterministic and testable offline.

Cassettes are append-only JSON-lines files of
``{request_hash, request, response, usage, model_name}`` entries, matched on
replay by request hash with recorded order breaking ties.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

import httpx

from .errors import EmptyResponse, InvalidInput, ReplayMismatch, TransportError

DEFAULT_TEMPERATURE = 0.2
DEFAULT_REQUEST_TIMEOUT = 60.0
API_KEY_VARS = ("DEVLOOP_API_KEY", "OPENAI_API_KEY")


class Role(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class ChatMessage:
    role: Role
    content: str


def validate_transcript(messages: list[ChatMessage]) -> None:
    """A request transcript holds exactly one system message, first, all non-empty."""
    if not messages:
        raise InvalidInput("transcript is empty")
    if any(not m.content for m in messages):
        raise InvalidInput("transcript contains an empty message")
    system_count = sum(1 for m in messages if m.role is Role.SYSTEM)
    if system_count != 1 or messages[0].role is not Role.SYSTEM:
        raise InvalidInput("transcript must start with its single system message")


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise InvalidInput("token counts must be non-negative")

    @property
    def total(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.prompt_tokens + other.prompt_tokens,
            self.completion_tokens + other.completion_tokens,
        )


class Mode(str, Enum):
    LIVE = "live"
    RECORD = "record"
    REPLAY = "replay"


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff: float = 0.5  # seconds between attempts


@dataclass
class BackendProfile:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model_name: str = "gpt-3.5-turbo-16k"
    temperature: float = DEFAULT_TEMPERATURE
    max_response_tokens: int = 4096
    retry_policy: RetryPolicy = field(default_factory=RetryPolicy)
    mode: Mode = Mode.REPLAY
    cassette_path: str | None = None

    def __post_init__(self):
        if isinstance(self.mode, str):
            self.mode = Mode(self.mode)
        if not 0.0 <= self.temperature <= 2.0:
            raise InvalidInput("temperature must be within [0, 2]")
        if self.mode is not Mode.LIVE and not self.cassette_path:
            raise InvalidInput(f"{self.mode.value} mode requires a cassette path")

    def to_dict(self) -> dict:
        return {
            "endpoint": self.endpoint,
            "model_name": self.model_name,
            "temperature": self.temperature,
            "max_response_tokens": self.max_response_tokens,
            "retry_policy": {
                "max_attempts": self.retry_policy.max_attempts,
                "backoff": self.retry_policy.backoff,
            },
            "mode": self.mode.value,
            "cassette_path": self.cassette_path,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BackendProfile":
        retry = data.get("retry_policy", {})
        return cls(
            endpoint=data.get("endpoint", cls.endpoint),
            model_name=data.get("model_name", cls.model_name),
            temperature=data.get("temperature", DEFAULT_TEMPERATURE),
            max_response_tokens=data.get("max_response_tokens", 4096),
            retry_policy=RetryPolicy(
                max_attempts=retry.get("max_attempts", 3),
                backoff=retry.get("backoff", 0.5),
            ),
            mode=Mode(data.get("mode", "replay")),
            cassette_path=data.get("cassette_path"),
        )


@dataclass(frozen=True)
class ChatExchange:
    request: tuple[ChatMessage, ...]
    response: ChatMessage
    usage: TokenUsage
    backend: str
    sequence_no: int


def request_hash(messages: list[ChatMessage]) -> str:
    """Stable digest over (role, content) pairs; the replay matching key."""
    payload = json.dumps(
        [[m.role.value, m.content] for m in messages],
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def usage_total(exchanges: list[ChatExchange]) -> TokenUsage:
    total = TokenUsage()
    for exchange in exchanges:
        total = total + exchange.usage
    return total


# transport: (endpoint, payload, headers, timeout) -> decoded response body
Transport = Callable[[str, dict, dict, float], dict]


def http_transport(endpoint: str, payload: dict, headers: dict, timeout: float) -> dict:
    response = httpx.post(endpoint, json=payload, headers=headers, timeout=timeout)
    response.raise_for_status()
    return response.json()


class ChatGateway:
    """One gateway per session; exchanges are serialized under a lock."""

    def __init__(self, profile: BackendProfile, transport: Transport | None = None):
        self.profile = profile
        self._transport = transport or http_transport
        self._lock = threading.Lock()
        self._sequence = 0
        self._entries: list[dict] = []
        self._consumed: list[bool] = []
        if profile.mode is Mode.REPLAY:
            self._entries = _load_cassette(Path(profile.cassette_path))
            self._consumed = [False] * len(self._entries)

    def complete(self, messages: list[ChatMessage]) -> ChatExchange:
        validate_transcript(messages)
        with self._lock:
            if self.profile.mode is Mode.REPLAY:
                exchange = self._replay(messages)
            else:
                exchange = self._live(messages)
            self._sequence += 1
            return exchange

    # -- replay ------------------------------------------------------------

    def _replay(self, messages: list[ChatMessage]) -> ChatExchange:
        wanted = request_hash(messages)
        for index, entry in enumerate(self._entries):
            if self._consumed[index] or entry["request_hash"] != wanted:
                continue
            self._consumed[index] = True
            return self._exchange_from_entry(entry)
        remaining = self._consumed.count(False)
        raise ReplayMismatch(
            f"no recorded exchange for request hash {wanted[:12]}… "
            f"({remaining} unconsumed of {len(self._entries)}); "
            "the prompt construction has drifted from the cassette"
        )

    def _exchange_from_entry(self, entry: dict) -> ChatExchange:
        usage = entry.get("usage", {})
        return ChatExchange(
            request=tuple(
                ChatMessage(Role(m["role"]), m["content"]) for m in entry["request"]
            ),
            response=ChatMessage(Role.ASSISTANT, entry["response"]["content"]),
            usage=TokenUsage(
                usage.get("prompt_tokens", 0), usage.get("completion_tokens", 0)
            ),
            backend=entry.get("model_name", self.profile.model_name),
            sequence_no=self._sequence,
        )

    # -- live / record -----------------------------------------------------

    def _live(self, messages: list[ChatMessage]) -> ChatExchange:
        payload = {
            "model": self.profile.model_name,
            "messages": [{"role": m.role.value, "content": m.content} for m in messages],
            "temperature": self.profile.temperature,
            "max_tokens": self.profile.max_response_tokens,
        }
        headers = {"Content-Type": "application/json"}
        for var in API_KEY_VARS:
            key = os.environ.get(var)
            if key:
                headers["Authorization"] = f"Bearer {key}"
                break
        policy = self.profile.retry_policy
        body = None
        last_error: Exception | None = None
        for attempt in range(1, policy.max_attempts + 1):
            try:
                body = self._transport(
                    self.profile.endpoint, payload, headers, DEFAULT_REQUEST_TIMEOUT
                )
                break
            except Exception as exc:  # transport failures are retried uniformly
                last_error = exc
                if attempt < policy.max_attempts:
                    time.sleep(policy.backoff)
        if body is None:
            raise TransportError(
                f"backend unreachable after {policy.max_attempts} attempts: {last_error}"
            )
        content = _response_content(body)
        usage = body.get("usage", {})
        exchange = ChatExchange(
            request=tuple(messages),
            response=ChatMessage(Role.ASSISTANT, content),
            usage=TokenUsage(
                usage.get("prompt_tokens", 0), usage.get("completion_tokens", 0)
            ),
            backend=self.profile.model_name,
            sequence_no=self._sequence,
        )
        if self.profile.mode is Mode.RECORD:
            self._append_to_cassette(exchange)
        return exchange

    def _append_to_cassette(self, exchange: ChatExchange) -> None:
        entry = {
            "request_hash": request_hash(list(exchange.request)),
            "request": [
                {"role": m.role.value, "content": m.content} for m in exchange.request
            ],
            "response": {"role": "assistant", "content": exchange.response.content},
            "usage": {
                "prompt_tokens": exchange.usage.prompt_tokens,
                "completion_tokens": exchange.usage.completion_tokens,
            },
            "model_name": exchange.backend,
        }
        path = Path(self.profile.cassette_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        # persisted before the exchange is returned to the caller
        with path.open("a", encoding="utf-8") as handle:
            handle.write(json.dumps(entry, ensure_ascii=False, sort_keys=True) + "\n")


def _load_cassette(path: Path) -> list[dict]:
    if not path.exists():
        raise ReplayMismatch(f"cassette file {path} does not exist")
    entries = []
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
            entry["request_hash"], entry["request"], entry["response"]
        except (json.JSONDecodeError, KeyError) as exc:
            raise ReplayMismatch(f"cassette line {line_no} unreadable: {exc}") from exc
        entries.append(entry)
    return entries


def _response_content(body: dict) -> str:
    try:
        content = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        content = None
    if not content or not str(content).strip():
        raise EmptyResponse("backend returned no completion content")
    return str(content)

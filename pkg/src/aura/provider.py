"""Provider-agnostic gateway to chat-completion and embedding backends.

Agents never import vendor SDKs; they build a ChatRequest and call
``complete``. Backends are either the deterministic scripted mock (tests,
offline eval) or a generic OpenAI-compatible HTTP client; specific
vendors are configuration, not code. ``complete`` owns retry with
exponential backoff, the single JSON repair round, and audit logging.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

from .errors import (
    AuthError,
    MalformedModelOutput,
    ProviderError,
    ProviderTimeout,
    RateLimited,
    ScriptExhausted,
    UnmatchedRequest,
)

ROLES = ("system", "user", "assistant")
AGENT_ROLES = ("preprocessor", "rewriter", "decision", "attributor", "judge")

REPAIR_MESSAGE = "Return only the JSON object."

# Per-agent sampling defaults; the attributor samples so pass@3 is meaningful.
DEFAULT_TEMPERATURES = {
    "preprocessor": 0.0,
    "rewriter": 0.0,
    "decision": 0.0,
    "attributor": 0.7,
    "judge": 0.0,
}
DEFAULT_MAX_TOKENS = 1024

_FENCE_RE = re.compile(r"```(?:json)?\s*(\{.*\})\s*```", re.DOTALL)


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown message role: {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[Message, ...]
    agent_role: str
    temperature: float = 0.0
    max_tokens: int = DEFAULT_MAX_TOKENS
    response_format: str = "free_text"  # or "json_object"

    def __post_init__(self):
        if self.agent_role not in AGENT_ROLES:
            raise ValueError(f"unknown agent role: {self.agent_role!r}")
        if self.response_format not in ("free_text", "json_object"):
            raise ValueError(f"unknown response format: {self.response_format!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if not any(m.role == "user" for m in self.messages):
            raise ValueError("request needs at least one user message")

    @property
    def final_user_message(self) -> str:
        for message in reversed(self.messages):
            if message.role == "user":
                return message.content
        raise ValueError("no user message")  # unreachable per __post_init__

    def prompt_digest(self) -> str:
        payload = "\x1e".join(f"{m.role}:{m.content}" for m in self.messages)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def make_request(agent_role: str, user: str, system: str = "",
                 history: Sequence[Message] = (),
                 response_format: str = "free_text",
                 temperature: Optional[float] = None,
                 max_tokens: int = DEFAULT_MAX_TOKENS) -> ChatRequest:
    if agent_role not in AGENT_ROLES:
        raise ValueError(f"unknown agent role: {agent_role!r}")
    messages: list[Message] = []
    if system:
        messages.append(Message("system", system))
    messages.extend(history)
    messages.append(Message("user", user))
    if temperature is None:
        temperature = DEFAULT_TEMPERATURES[agent_role]
    return ChatRequest(
        messages=tuple(messages),
        agent_role=agent_role,
        temperature=temperature,
        max_tokens=max_tokens,
        response_format=response_format,
    )


@dataclass(frozen=True)
class ChatResponse:
    text: str
    token_logprobs: Optional[tuple[tuple[str, float], ...]] = None
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __post_init__(self):
        if self.token_logprobs is not None:
            for token, logprob in self.token_logprobs:
                if logprob > 0:
                    raise ValueError(f"logprob for {token!r} is positive")


class Backend(Protocol):
    """A chat backend: one request in, one response out, errors typed."""

    name: str

    def invoke(self, request: ChatRequest) -> ChatResponse: ...


class AuditLog:
    """Append-only record of every outbound request (one entry per attempt)."""

    def __init__(self, path: Optional[str | Path] = None):
        self.entries: list[dict] = []
        self._path = Path(path) if path else None
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.entries)

    def append(self, entry: dict) -> None:
        with self._lock:
            self.entries.append(entry)
            if self._path:
                with self._path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry, ensure_ascii=False) + "\n")


@dataclass
class RetryPolicy:
    max_attempts: int = 3
    base_delay: float = 0.2
    sleep: Callable[[float], None] = time.sleep

    def delay(self, attempt: int) -> float:
        return self.base_delay * (2 ** attempt)


def _parse_json_object(text: str) -> dict:
    candidate = text.strip()
    fence = _FENCE_RE.search(candidate)
    if fence:
        candidate = fence.group(1)
    value = json.loads(candidate)
    if not isinstance(value, dict):
        raise json.JSONDecodeError("not a JSON object", candidate, 0)
    return value


def complete(backend: Backend, request: ChatRequest,
             audit: Optional[AuditLog] = None,
             retry: Optional[RetryPolicy] = None) -> ChatResponse:
    """Call a backend with retry, JSON validation + one repair round, auditing.

    When ``response_format`` is json_object the returned text is guaranteed
    to parse as a single JSON object (use ``parse_json_response``).
    """
    retry = retry or RetryPolicy()
    response = _invoke_with_retry(backend, request, audit, retry)
    if request.response_format != "json_object":
        return response

    try:
        _parse_json_object(response.text)
        return response
    except json.JSONDecodeError:
        pass

    repair = ChatRequest(
        messages=request.messages + (
            Message("assistant", response.text),
            Message("user", REPAIR_MESSAGE),
        ),
        agent_role=request.agent_role,
        temperature=request.temperature,
        max_tokens=request.max_tokens,
        response_format=request.response_format,
    )
    repaired = _invoke_with_retry(backend, repair, audit, retry)
    try:
        _parse_json_object(repaired.text)
        return repaired
    except json.JSONDecodeError as exc:
        raise MalformedModelOutput(
            f"{request.agent_role} output is not a JSON object after repair: {exc}") from exc


def parse_json_response(response: ChatResponse) -> dict:
    """Parse a json_object response already validated by ``complete``."""
    return _parse_json_object(response.text)


def _invoke_with_retry(backend: Backend, request: ChatRequest,
                       audit: Optional[AuditLog], retry: RetryPolicy) -> ChatResponse:
    last_error: Optional[ProviderError] = None
    for attempt in range(retry.max_attempts):
        started = time.monotonic()
        try:
            response = backend.invoke(request)
        except ProviderError as exc:
            _audit(audit, backend, request, started, outcome=exc.code)
            if not exc.retryable:
                raise
            last_error = exc
            if attempt + 1 < retry.max_attempts:
                retry.sleep(retry.delay(attempt))
            continue
        _audit(audit, backend, request, started, outcome="ok")
        return response
    assert last_error is not None
    raise last_error


def _audit(audit: Optional[AuditLog], backend: Backend, request: ChatRequest,
           started: float, outcome: str) -> None:
    if audit is None:
        return
    audit.append({
        "backend": backend.name,
        "agent_role": request.agent_role,
        "prompt_digest": request.prompt_digest(),
        "latency_ms": round((time.monotonic() - started) * 1000, 3),
        "outcome": outcome,
    })


class MockBackend:
    """Scripted backend replaying responses deterministically, never networked.

    Script keys are (agent_role, match_key); the key whose match_key is the
    longest substring of the request's final user message wins. Each key
    holds an ordered response list consumed one call at a time.
    """

    name = "mock"

    def __init__(self, script: dict[tuple[str, str], Sequence]):
        if not script:
            raise ValueError("mock script must not be empty")
        self._queues: dict[tuple[str, str], deque] = {
            key: deque(responses) for key, responses in script.items()
        }
        self._lock = threading.Lock()
        self.call_count = 0

    def invoke(self, request: ChatRequest) -> ChatResponse:
        prompt = request.final_user_message
        with self._lock:
            self.call_count += 1
            candidates = [
                key for key in self._queues
                if key[0] == request.agent_role and key[1] in prompt
            ]
            if not candidates:
                fingerprint = hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:12]
                raise UnmatchedRequest(
                    f"no script key matches agent_role={request.agent_role}",
                    agent_role=request.agent_role,
                    fingerprint=fingerprint,
                    prompt_head=prompt[:120],
                )
            best = max(candidates, key=lambda key: len(key[1]))
            queue = self._queues[best]
            if not queue:
                raise ScriptExhausted(
                    f"script key {best!r} has no responses left")
            return _as_response(queue.popleft())


def _as_response(scripted) -> ChatResponse:
    if isinstance(scripted, ChatResponse):
        return scripted
    if isinstance(scripted, dict):
        logprobs = scripted.get("logprobs")
        return ChatResponse(
            text=scripted["text"],
            token_logprobs=tuple((str(t), float(lp)) for t, lp in logprobs) if logprobs else None,
        )
    return ChatResponse(text=str(scripted))


def build_mock(script: dict[tuple[str, str], Sequence]) -> MockBackend:
    """Build a scripted mock backend from (agent_role, match_key) -> responses."""
    return MockBackend(script)


def load_mock_script(path: str | Path) -> dict[tuple[str, str], list]:
    """Load a mock script from JSON: a list of {agent_role, match_key, responses}."""
    entries = json.loads(Path(path).read_text(encoding="utf-8"))
    script: dict[tuple[str, str], list] = {}
    for entry in entries:
        key = (entry["agent_role"], entry.get("match_key", ""))
        script.setdefault(key, []).extend(entry["responses"])
    return script


class OpenAiCompatBackend:
    """Minimal OpenAI-compatible chat/embeddings client over HTTP.

    Works against any endpoint speaking the /chat/completions and
    /embeddings wire format; credentials come from the environment only.
    """

    def __init__(self, name: str, model: str, base_url: str, api_key: str,
                 timeout: float = 60.0):
        self.name = name
        self.model = model
        self.base_url = base_url.rstrip("/")
        self._api_key = api_key
        self._timeout = timeout

    def _post(self, path: str, payload: dict) -> dict:
        import httpx

        try:
            response = httpx.post(
                f"{self.base_url}{path}",
                json=payload,
                headers={"Authorization": f"Bearer {self._api_key}"},
                timeout=self._timeout,
            )
        except httpx.TimeoutException as exc:
            raise ProviderTimeout(f"{self.name}: {exc}") from exc
        except httpx.HTTPError as exc:
            raise ProviderError(f"{self.name}: transport failure: {exc}") from exc
        if response.status_code in (401, 403):
            raise AuthError(f"{self.name}: credentials rejected ({response.status_code})")
        if response.status_code == 429:
            raise RateLimited(f"{self.name}: rate limited")
        if response.status_code >= 500:
            exc = ProviderError(f"{self.name}: server error {response.status_code}")
            exc.retryable = True
            raise exc
        if response.status_code >= 400:
            raise ProviderError(f"{self.name}: request rejected ({response.status_code})")
        return response.json()

    def invoke(self, request: ChatRequest) -> ChatResponse:
        payload = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.response_format == "json_object":
            payload["response_format"] = {"type": "json_object"}
        data = self._post("/chat/completions", payload)
        try:
            choice = data["choices"][0]
            text = choice["message"]["content"]
            usage = data.get("usage", {})
            logprobs = None
            content_logprobs = (choice.get("logprobs") or {}).get("content")
            if content_logprobs:
                logprobs = tuple(
                    (item["token"], float(item["logprob"])) for item in content_logprobs)
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedModelOutput(f"{self.name}: unexpected response shape: {exc}") from exc
        return ChatResponse(
            text=text,
            token_logprobs=logprobs,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
        )

    def embed(self, text: str) -> list[float]:
        data = self._post("/embeddings", {"model": self.model, "input": text})
        try:
            return [float(v) for v in data["data"][0]["embedding"]]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedModelOutput(f"{self.name}: unexpected embedding shape: {exc}") from exc


@dataclass
class ProviderGateway:
    """Named backends plus per-agent routing and a shared audit log."""

    backends: dict[str, Backend]
    routing: dict[str, str]
    audit: AuditLog = field(default_factory=AuditLog)
    retry: RetryPolicy = field(default_factory=RetryPolicy)

    def backend_for(self, agent_role: str) -> Backend:
        name = self.routing.get(agent_role) or self.routing.get("default")
        if name is None or name not in self.backends:
            raise ProviderError(f"no backend routed for agent role {agent_role!r}")
        return self.backends[name]

    def complete(self, request: ChatRequest) -> ChatResponse:
        backend = self.backend_for(request.agent_role)
        return complete(backend, request, audit=self.audit, retry=self.retry)

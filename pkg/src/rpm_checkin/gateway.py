"""Model provider gateway: request shaping, transport, retries, scripting.

All outbound traffic to a completion provider goes through complete(), which
scrubs patient identifiers and refuses dispatch when any survive. Providers
implement a single method and stay swappable: an HTTP chat provider for live
deployments and a scripted provider that replays canned completions so the
whole service can run and be tested offline.
"""
from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import httpx

from .safety import ScrubRegistry, ScrubViolation, find_identifier_hits, scrub_text

log = logging.getLogger(__name__)

# Separates completions in a scripted-provider fixture file.
RECORD_SEPARATOR = "---END---"


@dataclass(frozen=True)
class ChatRequest:
    """One completion request: system prompt plus alternating chat messages."""

    system_prompt: str
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.2
    max_tokens: int = 700

    def texts(self) -> tuple[str, ...]:
        return (self.system_prompt,) + tuple(text for _, text in self.messages)


@dataclass(frozen=True)
class ProviderConfig:
    """Where and how to reach the live chat-completion endpoint."""

    endpoint: str
    model: str
    credential_env: str = "RPM_CHECKIN_API_KEY"
    timeout_s: float = 30.0
    retry_budget: int = 2
    backoff_s: float = 0.5


class GatewayError(Exception):
    """Base class for provider/transport failures."""


class TransportFailure(GatewayError):
    pass


class CompletionTimeout(GatewayError):
    pass


class AuthRejected(GatewayError):
    pass


class RateLimited(GatewayError):
    pass


class ScriptExhausted(GatewayError):
    """The scripted provider ran out of queued completions."""


class CompletionProvider(Protocol):
    def complete(self, request: ChatRequest) -> str: ...


class HttpChatProvider:
    """Chat-completion client over an OpenAI-style HTTP endpoint.

    Retries transient failures (timeouts, 5xx, 429) with exponential backoff
    up to the configured budget. Auth failures never retry.
    """

    def __init__(self, config: ProviderConfig, client: httpx.Client | None = None) -> None:
        self._config = config
        self._client = client or httpx.Client(timeout=config.timeout_s)

    def complete(self, request: ChatRequest) -> str:
        credential = os.environ.get(self._config.credential_env, "")
        if not credential:
            raise AuthRejected(
                f"credential env var {self._config.credential_env} is not set"
            )
        body = {
            "model": self._config.model,
            "messages": [{"role": "system", "content": request.system_prompt}]
            + [{"role": role, "content": text} for role, text in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = {"Authorization": f"Bearer {credential}"}
        attempts = self._config.retry_budget + 1
        last_error: GatewayError = TransportFailure("no attempt made")
        for attempt in range(attempts):
            if attempt:
                time.sleep(self._config.backoff_s * (2 ** (attempt - 1)))
            try:
                response = self._client.post(
                    self._config.endpoint, json=body, headers=headers
                )
            except httpx.TimeoutException as exc:
                last_error = CompletionTimeout(str(exc))
                continue
            except httpx.HTTPError as exc:
                last_error = TransportFailure(str(exc))
                continue
            if response.status_code in (401, 403):
                raise AuthRejected(f"provider rejected credentials ({response.status_code})")
            if response.status_code == 429:
                last_error = RateLimited("provider rate limit")
                continue
            if response.status_code >= 500:
                last_error = TransportFailure(f"provider returned {response.status_code}")
                continue
            if response.status_code != 200:
                raise TransportFailure(f"provider returned {response.status_code}")
            try:
                payload = response.json()
                content = payload["choices"][0]["message"]["content"]
            except (json.JSONDecodeError, LookupError, TypeError) as exc:
                raise TransportFailure(f"malformed provider response: {exc}") from exc
            if not isinstance(content, str):
                raise TransportFailure("provider returned non-text content")
            return content
        raise last_error


class ScriptedProvider:
    """Deterministic provider that replays a fixed queue of completions.

    Ignores request content entirely; each call pops the next completion.
    Thread-safe. Exhausting the queue raises ScriptExhausted.
    """

    def __init__(self, completions: Iterable[str]) -> None:
        self._queue: list[str] = list(completions)
        self._cursor = 0
        self._lock = threading.Lock()
        self.requests: list[ChatRequest] = []

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedProvider":
        return cls(load_script(path))

    def complete(self, request: ChatRequest) -> str:
        with self._lock:
            self.requests.append(request)
            if self._cursor >= len(self._queue):
                raise ScriptExhausted(
                    f"script exhausted after {len(self._queue)} completion(s)"
                )
            completion = self._queue[self._cursor]
            self._cursor += 1
            return completion

    @property
    def remaining(self) -> int:
        with self._lock:
            return len(self._queue) - self._cursor


def load_script(path: str | Path) -> list[str]:
    """Read a scripted-completion fixture: records separated by ---END--- lines."""
    text = Path(path).read_text(encoding="utf-8")
    return split_script(text)


def split_script(text: str) -> list[str]:
    records: list[str] = []
    current: list[str] = []
    for line in text.splitlines():
        if line.strip() == RECORD_SEPARATOR:
            records.append("\n".join(current).strip("\n"))
            current = []
        else:
            current.append(line)
    tail = "\n".join(current).strip()
    if tail:
        records.append(tail)
    return [record for record in records if record.strip()]


def dump_script(completions: Sequence[str], path: str | Path) -> None:
    parts: list[str] = []
    for completion in completions:
        parts.append(completion.rstrip("\n"))
        parts.append(RECORD_SEPARATOR)
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")


def scrub_request(request: ChatRequest, registry: ScrubRegistry) -> ChatRequest:
    """Return a copy of the request with every registered identifier replaced."""
    return replace(
        request,
        system_prompt=scrub_text(request.system_prompt, registry),
        messages=tuple(
            (role, scrub_text(text, registry)) for role, text in request.messages
        ),
    )


def complete(
    provider: CompletionProvider,
    request: ChatRequest,
    registry: ScrubRegistry | None = None,
) -> str:
    """Single dispatch gate for all outbound completions.

    Scrubs the request against the registry, then re-scans it; if any
    identifier value survives scrubbing, raises ScrubViolation and never
    calls the provider.
    """
    if registry is not None and registry.entries:
        request = scrub_request(request, registry)
        hits = find_identifier_hits(request.texts(), registry.values)
        if hits:
            raise ScrubViolation(hits)
    return provider.complete(request)

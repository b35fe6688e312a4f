"""Chat-model backends behind one small interface.

A backend takes ordered {role, content} messages and returns one text
completion. Remote adapters own their retries and rate limiting; the mock
provider is a pure function of its inputs so offline runs reproduce exactly.
"""
from __future__ import annotations

import hashlib
import os
import time
from dataclasses import dataclass
from typing import Callable, Protocol

from .utils import TokenBucket, TransportError, retry_transport

Message = dict  # {"role": str, "content": str}

DEFAULT_MAX_INPUT_CHARS = 32000


class BackendError(RuntimeError):
    """Content-level backend failure (bad request, auth, malformed reply)."""


@dataclass(frozen=True)
class ChatBackendDescriptor:
    provider: str  # "remote" | "mock"
    model_id: str
    temperature: float = 0.7
    top_p: float = 1.0
    max_output_tokens: int = 512
    uses_native_retrieval: bool = False
    max_input_chars: int = DEFAULT_MAX_INPUT_CHARS

    def __post_init__(self):
        if self.provider not in ("remote", "mock"):
            raise BackendError(f"unknown chat provider {self.provider!r}")
        if self.temperature < 0:
            raise BackendError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise BackendError("top_p must be in (0, 1]")
        if self.max_output_tokens <= 0:
            raise BackendError("max_output_tokens must be positive")
        if self.max_input_chars <= 0:
            raise BackendError("max_input_chars must be positive")

    def to_dict(self) -> dict:
        return {
            "provider": self.provider,
            "model_id": self.model_id,
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_output_tokens": self.max_output_tokens,
            "uses_native_retrieval": self.uses_native_retrieval,
            "max_input_chars": self.max_input_chars,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChatBackendDescriptor":
        return cls(**d)


class ChatBackend(Protocol):
    descriptor: ChatBackendDescriptor

    def complete(self, messages: list[Message]) -> str: ...


def _digest_messages(messages: list[Message], seed: int) -> int:
    h = hashlib.blake2b(digest_size=8, key=seed.to_bytes(8, "little", signed=True))
    for m in messages:
        h.update(m.get("role", "").encode("utf-8"))
        h.update(b"\x00")
        h.update(m.get("content", "").encode("utf-8"))
        h.update(b"\x01")
    return int.from_bytes(h.digest(), "little")


class MockChatBackend:
    """Fully deterministic offline backend; sampling settings are ignored.

    ``reply`` may be a fixed string, a callable over the messages, or None for
    a hash-derived canned answer. Calls are counted and the last message list
    kept, which unit tests lean on.
    """

    def __init__(
        self,
        descriptor: ChatBackendDescriptor | None = None,
        reply: str | Callable[[list[Message]], str] | None = None,
        seed: int = 0,
    ):
        self.descriptor = descriptor or ChatBackendDescriptor(
            provider="mock", model_id="mock-chat", temperature=0.0, top_p=1.0
        )
        self.reply = reply
        self.seed = seed
        self.calls = 0
        self.last_messages: list[Message] | None = None

    def complete(self, messages: list[Message]) -> str:
        self.calls += 1
        self.last_messages = [dict(m) for m in messages]
        if callable(self.reply):
            return self.reply(messages)
        if self.reply is not None:
            return self.reply
        return f"mock answer {_digest_messages(messages, self.seed) % 100000:05d}"


class RemoteChatBackend:
    """OpenAI-style chat-completions HTTP adapter.

    Credentials come from ``<PROVIDER>_API_KEY``. Transport failures (timeouts,
    5xx) are retried with backoff; content failures are not. Calls share the
    optional token-bucket rate limiter.
    """

    def __init__(
        self,
        provider_name: str,
        descriptor: ChatBackendDescriptor,
        endpoint: str,
        session=None,
        rate_limiter: TokenBucket | None = None,
        timeout: float = 60.0,
        sleep=time.sleep,
        extra_body: dict | None = None,
    ):
        if descriptor.provider != "remote":
            raise BackendError("RemoteChatBackend requires a remote descriptor")
        import requests

        self.provider_name = provider_name
        self.descriptor = descriptor
        self.endpoint = endpoint
        self.session = session or requests.Session()
        self.rate_limiter = rate_limiter
        self.timeout = timeout
        self._sleep = sleep
        self.extra_body = extra_body or {}

    def _api_key(self) -> str:
        env = f"{self.provider_name.upper().replace('-', '_')}_API_KEY"
        key = os.getenv(env, "").strip()
        if not key:
            raise BackendError(f"missing required environment variable {env}")
        return key

    def complete(self, messages: list[Message]) -> str:
        import requests

        key = self._api_key()
        if self.rate_limiter is not None:
            self.rate_limiter.acquire()
        body = {
            "model": self.descriptor.model_id,
            "messages": messages,
            "temperature": self.descriptor.temperature,
            "top_p": self.descriptor.top_p,
            "max_tokens": self.descriptor.max_output_tokens,
        }
        body.update(self.extra_body)

        def attempt():
            try:
                resp = self.session.post(
                    self.endpoint,
                    json=body,
                    headers={"Authorization": f"Bearer {key}", "Content-Type": "application/json"},
                    timeout=self.timeout,
                )
            except requests.RequestException as exc:
                raise TransportError(f"{self.provider_name}: {exc}") from exc
            if resp.status_code >= 500:
                raise TransportError(f"{self.provider_name}: HTTP status {resp.status_code}")
            if not 200 <= resp.status_code < 300:
                raise BackendError(f"{self.provider_name}: HTTP status {resp.status_code}: {resp.text[:200]}")
            return resp.json()

        payload = retry_transport(attempt, sleep=self._sleep)
        try:
            return payload["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"{self.provider_name}: malformed completion payload") from exc

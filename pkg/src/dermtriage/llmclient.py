"""Minimal chat-completion client.

Talks to any OpenAI-style chat endpoint: POST {base_url}/chat/completions
with a JSON body of model, messages, temperature and max_tokens, bearer
auth in the header. Transient failures (timeouts, connection errors, 5xx)
are retried with exponential backoff; 4xx responses are configuration
errors and are not retried. The API key never appears in reprs, dicts or
error text.

Transports are pluggable so tests can run against a stub with canned
responses and scripted failures.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import requests

from .errors import (
    ConfigurationError,
    InputError,
    ProviderError,
    TransientTransportError,
    TransportError,
)

__all__ = [
    "LlmConfig",
    "ChatMessage",
    "HttpTransport",
    "StubTransport",
    "complete",
]

ROLES = ("system", "user", "assistant")

BACKOFF_BASE_SECONDS = 1.0
BACKOFF_FACTOR = 2.0


@dataclass
class LlmConfig:
    """Connection settings for the chat-completion endpoint.

    api_key is kept out of repr() and to_dict() on purpose.
    """

    base_url: str
    api_key: str = field(default="", repr=False)
    model_name: str = "llama-3-70b"
    temperature: float = 0.2
    max_tokens: int | None = None
    request_timeout: float = 30.0
    max_retries: int = 2

    def __post_init__(self):
        if not self.base_url:
            raise ConfigurationError("base_url must be non-empty")
        if self.max_retries < 0:
            raise ConfigurationError("max_retries must be >= 0")
        if self.request_timeout <= 0:
            raise ConfigurationError("request_timeout must be positive")

    @classmethod
    def from_env(cls, env=None):
        """Build a config from LLM_API_KEY, LLM_BASE_URL and LLM_MODEL."""
        env = os.environ if env is None else env
        base_url = env.get("LLM_BASE_URL", "")
        if not base_url:
            raise ConfigurationError("LLM_BASE_URL is not set")
        kwargs = {"base_url": base_url, "api_key": env.get("LLM_API_KEY", "")}
        if env.get("LLM_MODEL"):
            kwargs["model_name"] = env["LLM_MODEL"]
        return cls(**kwargs)

    def to_dict(self):
        return {
            "base_url": self.base_url,
            "model_name": self.model_name,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "request_timeout": self.request_timeout,
            "max_retries": self.max_retries,
        }


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise InputError(f"unknown role: {self.role!r}")
        if not self.content:
            raise InputError("message content must be non-empty")

    def to_dict(self):
        return {"role": self.role, "content": self.content}


class HttpTransport:
    """Sends the request over HTTP with bearer auth."""

    def __init__(self, config):
        self.base_url = config.base_url.rstrip("/")
        self._api_key = config.api_key
        self.timeout = config.request_timeout

    def send(self, payload):
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        url = f"{self.base_url}/chat/completions"
        try:
            response = requests.post(
                url, json=payload, headers=headers, timeout=self.timeout
            )
        except (requests.Timeout, requests.ConnectionError) as exc:
            raise TransientTransportError(f"request to {url} failed: {exc}") from exc
        if 400 <= response.status_code < 500:
            raise ConfigurationError(
                f"provider rejected the request with HTTP {response.status_code}"
            )
        if response.status_code >= 500:
            raise TransientTransportError(
                f"provider returned HTTP {response.status_code}"
            )
        try:
            return response.json()
        except (json.JSONDecodeError, ValueError) as exc:
            raise ProviderError(f"provider returned non-JSON body: {exc}") from exc


class StubTransport:
    """Scripted in-memory transport for tests and offline runs.

    The script is a list of events, consumed one per send():
      {"text": ...}          respond with that completion
      {"error": "timeout"}   raise a transient transport error
      {"status": N}          behave like an HTTP status N response
    With echo=True (and no pending event) the reply is the last user
    message. When the script runs out, the final text event repeats.
    Every request payload is recorded in .requests.
    """

    def __init__(self, script=None, echo=False):
        self.script = list(script or [])
        self.echo = echo
        self.requests = []
        self._cursor = 0
        self._last_text = None

    @classmethod
    def from_fixture(cls, path):
        """Load canned responses from a JSON file: {"responses": [...]}."""
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
        responses = data.get("responses")
        if not isinstance(responses, list) or not responses:
            raise ConfigurationError(f"fixture {path} has no responses")
        return cls(script=[{"text": text} for text in responses])

    @property
    def attempts(self):
        return len(self.requests)

    def send(self, payload):
        self.requests.append(json.loads(json.dumps(payload)))
        event = None
        if self._cursor < len(self.script):
            event = self.script[self._cursor]
            self._cursor += 1
        if event is None:
            if self.echo:
                text = ""
                for message in payload.get("messages", []):
                    if message.get("role") == "user":
                        text = message.get("content", "")
                return _wrap_completion(text)
            if self._last_text is not None:
                return _wrap_completion(self._last_text)
            raise TransientTransportError("stub script exhausted")
        if "error" in event:
            raise TransientTransportError(f"stubbed failure: {event['error']}")
        if "status" in event:
            status = int(event["status"])
            if 400 <= status < 500:
                raise ConfigurationError(
                    f"provider rejected the request with HTTP {status}"
                )
            raise TransientTransportError(f"provider returned HTTP {status}")
        self._last_text = event.get("text", "")
        return _wrap_completion(self._last_text)


def _wrap_completion(text):
    return {"choices": [{"message": {"role": "assistant", "content": text}}]}


def _extract_text(response):
    try:
        choices = response["choices"]
        message = choices[0]["message"]
        content = message["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise ProviderError(f"malformed provider response: {exc}") from exc
    if not isinstance(content, str) or not content.strip():
        raise ProviderError("provider returned an empty completion")
    return content


def complete(config, messages, transport=None, sleeper=time.sleep):
    """Send a chat request and return the completion text.

    The first message must be the system prompt. Transient failures are
    retried up to config.max_retries times with exponential backoff
    (1s, 2s, 4s, ...); total attempts never exceed 1 + max_retries.
    """
    if not messages:
        raise InputError("messages must be non-empty")
    if messages[0].role != "system":
        raise InputError("the first message must have the system role")
    payload = {
        "model": config.model_name,
        "messages": [m.to_dict() for m in messages],
        "temperature": config.temperature,
    }
    if config.max_tokens is not None:
        payload["max_tokens"] = config.max_tokens
    if transport is None:
        transport = HttpTransport(config)

    attempts = 0
    delay = BACKOFF_BASE_SECONDS
    while True:
        attempts += 1
        try:
            response = transport.send(payload)
        except TransientTransportError as exc:
            if attempts >= 1 + config.max_retries:
                raise TransportError(
                    f"request failed after {attempts} attempts: {exc}"
                ) from exc
            sleeper(delay)
            delay *= BACKOFF_FACTOR
            continue
        return _extract_text(response)

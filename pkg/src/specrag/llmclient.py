"""Chat-completion client abstraction with a remote OpenAI-compatible backend."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from typing import Iterator, Protocol, Sequence, runtime_checkable

import httpx

logger = logging.getLogger(__name__)

Message = dict[str, str]  # {"role": ..., "content": ...}


@dataclass(frozen=True)
class DecodingConfig:
    """Decoding parameters; temperature 0 keeps evaluation reproducible."""

    temperature: float = 0.0
    max_tokens: int = 1024

    def __post_init__(self):
        if self.temperature < 0.0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {self.max_tokens}")


class LLMError(Exception):
    """A completion call failed after retries; carries the prompt for diagnostics."""

    def __init__(self, message: str, attempts: int = 1, prompt: str | None = None):
        super().__init__(f"{message} (attempts={attempts})")
        self.attempts = attempts
        self.prompt = prompt


@runtime_checkable
class LLMClient(Protocol):
    model_id: str

    def complete(self, messages: Sequence[Message], decoding: DecodingConfig) -> str:
        ...

    def stream(self, messages: Sequence[Message], decoding: DecodingConfig) -> Iterator[str]:
        """Yield text deltas in order; concatenation equals the full completion."""
        ...


def _prompt_digest(messages: Sequence[Message]) -> str:
    return "\n\n".join(f"[{m.get('role', '?')}] {m.get('content', '')}" for m in messages)


class RemoteLLMClient:
    """OpenAI-compatible chat-completions client (POST /v1/chat/completions)."""

    def __init__(
        self,
        base_url: str,
        model_id: str,
        auth_env_var: str | None = None,
        max_retries: int = 2,
        timeout: float = 120.0,
        client: httpx.Client | None = None,
    ):
        self.model_id = model_id
        self.max_retries = max_retries
        headers = {}
        if auth_env_var:
            token = os.environ.get(auth_env_var, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"
        self._client = client or httpx.Client(
            base_url=base_url.rstrip("/"), headers=headers, timeout=timeout
        )

    def _payload(self, messages: Sequence[Message], decoding: DecodingConfig) -> dict:
        return {
            "model": self.model_id,
            "messages": list(messages),
            "temperature": decoding.temperature,
            "max_tokens": decoding.max_tokens,
        }

    def complete(self, messages: Sequence[Message], decoding: DecodingConfig) -> str:
        attempts = 0
        last_error: Exception | None = None
        while attempts <= self.max_retries:
            attempts += 1
            try:
                resp = self._client.post("/v1/chat/completions", json=self._payload(messages, decoding))
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
            except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
                last_error = exc
                logger.warning("completion failed (attempt %d): %s", attempts, exc)
        raise LLMError(
            f"chat completion failed: {last_error}",
            attempts=attempts,
            prompt=_prompt_digest(messages),
        )

    def stream(self, messages: Sequence[Message], decoding: DecodingConfig) -> Iterator[str]:
        payload = self._payload(messages, decoding)
        payload["stream"] = True
        attempts = 0
        while True:
            attempts += 1
            yielded = False
            try:
                with self._client.stream("POST", "/v1/chat/completions", json=payload) as resp:
                    resp.raise_for_status()
                    for line in resp.iter_lines():
                        line = line.strip()
                        if not line.startswith("data:"):
                            continue
                        body = line[len("data:") :].strip()
                        if body == "[DONE]":
                            return
                        try:
                            delta = json.loads(body)["choices"][0].get("delta", {})
                        except (KeyError, IndexError, ValueError):
                            continue
                        piece = delta.get("content")
                        if piece:
                            yielded = True
                            yield piece
                return
            except httpx.HTTPError as exc:
                # Mid-stream failures are not retried: deltas already escaped.
                if yielded or attempts > self.max_retries:
                    raise LLMError(
                        f"streaming completion failed: {exc}",
                        attempts=attempts,
                        prompt=_prompt_digest(messages),
                    ) from exc
                logger.warning("stream failed before first delta (attempt %d): %s", attempts, exc)

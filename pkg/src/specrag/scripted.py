"""In-process LLM stand-ins for offline runs and deterministic tests."""

from __future__ import annotations

import re
from collections import deque
from typing import Callable, Iterator, Sequence

from .generation import CONTEXT_ENTRY_RE
from .llmclient import DecodingConfig, LLMError, Message

STREAM_PIECE_CHARS = 16

QUESTION_TAIL_RE = re.compile(r"Question:\s*(.+)\s*$", re.DOTALL)


def stream_pieces(text: str, size: int = STREAM_PIECE_CHARS) -> Iterator[str]:
    """Fixed-size text pieces whose concatenation is exactly the input."""
    for start in range(0, len(text), size):
        yield text[start : start + size]


class ScriptedLLM:
    """Replays queued replies; an Exception entry raises instead of replying.

    When the queue runs dry the optional default reply is used; without
    one, exhaustion is a hard failure so tests notice over-calling.
    """

    def __init__(
        self,
        replies: Sequence[str | Exception] = (),
        default: str | None = None,
        model_id: str = "scripted",
    ):
        self.model_id = model_id
        self.default = default
        self._queue: deque[str | Exception] = deque(replies)
        self.calls: list[list[Message]] = []

    def _next(self, messages: Sequence[Message]) -> str:
        self.calls.append(list(messages))
        if self._queue:
            item = self._queue.popleft()
            if isinstance(item, Exception):
                if isinstance(item, LLMError):
                    raise item
                raise LLMError(str(item)) from item
            return item
        if self.default is not None:
            return self.default
        raise LLMError(f"script exhausted after {len(self.calls)} calls")

    def complete(self, messages: Sequence[Message], decoding: DecodingConfig) -> str:
        return self._next(messages)

    def stream(self, messages: Sequence[Message], decoding: DecodingConfig) -> Iterator[str]:
        yield from stream_pieces(self._next(messages))


class CallableLLM:
    """Computes each reply from the messages; for behavior-shaped scripting."""

    def __init__(self, fn: Callable[[Sequence[Message]], str], model_id: str = "scripted-fn"):
        self.model_id = model_id
        self._fn = fn
        self.calls: list[list[Message]] = []

    def complete(self, messages: Sequence[Message], decoding: DecodingConfig) -> str:
        self.calls.append(list(messages))
        return self._fn(messages)

    def stream(self, messages: Sequence[Message], decoding: DecodingConfig) -> Iterator[str]:
        yield from stream_pieces(self.complete(messages, decoding))


class QueryEchoHelper:
    """Offline helper model: answers helper prompts with the question itself.

    Asked for a hypothetical answer it returns the question verbatim; asked
    for a numbered list of rewrites it returns the question as the single
    entry. Both collapse HyDE and multi-query retrieval onto vanilla, the
    neutral behavior when no real helper model is available.
    """

    def __init__(self, model_id: str = "query-echo"):
        self.model_id = model_id

    def _reply(self, messages: Sequence[Message]) -> str:
        content = ""
        for message in reversed(messages):
            if message.get("role") == "user":
                content = message.get("content", "")
                break
        match = QUESTION_TAIL_RE.search(content)
        question = match.group(1).strip() if match else content.strip()
        if "numbered list" in content.lower():
            return f"1. {question}"
        return question

    def complete(self, messages: Sequence[Message], decoding: DecodingConfig) -> str:
        return self._reply(messages)

    def stream(self, messages: Sequence[Message], decoding: DecodingConfig) -> Iterator[str]:
        yield from stream_pieces(self._reply(messages))


class ContextEchoLLM:
    """Echoes the first context entry of the prompt, verbatim.

    With context present the reply is grounded by construction; without
    context it falls back to a fixed reply that the corpus never contains,
    which is what makes retrieval-vs-none comparisons measurable offline.
    """

    def __init__(
        self,
        fallback: str = "No indexed material is available for this question.",
        model_id: str = "context-echo",
    ):
        self.model_id = model_id
        self.fallback = fallback

    def _reply(self, messages: Sequence[Message]) -> str:
        for message in reversed(messages):
            if message.get("role") == "user":
                match = CONTEXT_ENTRY_RE.search(message.get("content", ""))
                return match.group(3) if match else self.fallback
        return self.fallback

    def complete(self, messages: Sequence[Message], decoding: DecodingConfig) -> str:
        return self._reply(messages)

    def stream(self, messages: Sequence[Message], decoding: DecodingConfig) -> Iterator[str]:
        yield from stream_pieces(self._reply(messages))

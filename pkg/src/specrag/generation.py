"""Prompt assembly, guarded answer generation, and the end-to-end query path."""

from __future__ import annotations

import logging
import re
import time
from dataclasses import dataclass
from typing import Iterator, Protocol, Sequence, runtime_checkable

from .lexical import sentence_supported, split_sentences, tokenize, vocabulary, STOPWORDS
from .llmclient import DecodingConfig, LLMClient, LLMError, Message
from .retrieval import RetrievedContext

logger = logging.getLogger(__name__)

CONTEXT_HEADER = "Context:"
QUESTION_HEADER = "Question:"
CONTEXT_ENTRY_RE = re.compile(r"^\[(\d+)\] \(source: ([^)]+)\) (.*)$", re.MULTILINE)

DEFAULT_OUTPUT_INDICATOR = (
    "Answer in plain prose. When context entries are present, use only facts "
    "stated in them."
)

FACT_CHECK_INSTRUCTION = (
    "You verify answers against reference passages. Reply with exactly one "
    "word, yes or no: is every factual claim in the answer supported by the "
    "passages?\n\nPassages:\n{context}\n\nAnswer to verify:\n{answer}"
)

YES_NO_RE = re.compile(r"\b(yes|no)\b", re.IGNORECASE)


@dataclass(frozen=True)
class PersonaConfig:
    role_statement: str = (
        "You are an assistant that answers questions about technical standards documents."
    )
    tone_phrases: tuple[str, ...] = ("precise", "neutral")
    default_answer: str = (
        "I do not have enough information in the indexed documents to answer that."
    )
    extra_instructions: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.role_statement.strip():
            raise ValueError("role_statement must be non-empty")
        if not self.default_answer.strip():
            raise ValueError("default_answer must be non-empty")


@dataclass(frozen=True)
class PromptBundle:
    instruction: str
    context_block: str
    input_data: str
    output_indicator: str
    rendered: str
    token_estimate: int


@dataclass(frozen=True)
class GuardrailResult:
    verdict: str  # pass | fail | not_checked
    method: str
    detail: str = ""


@dataclass(frozen=True)
class GeneratedAnswer:
    text: str
    model_id: str
    prompt: PromptBundle
    context: RetrievedContext
    cited_chunk_ids: tuple[str, ...]
    guardrail: GuardrailResult
    latency_ms: int
    attempts: int = 1


def build_prompt(
    query: str, context: RetrievedContext, persona: PersonaConfig
) -> PromptBundle:
    """Render the augmented prompt: instruction, context, input, output indicator.

    Byte-for-byte deterministic in its inputs; the context block is empty
    exactly when retrieval returned nothing.
    """
    instruction_lines = [persona.role_statement]
    if persona.tone_phrases:
        instruction_lines.append("Tone: " + ", ".join(persona.tone_phrases) + ".")
    instruction_lines.extend(persona.extra_instructions)
    instruction = "\n".join(instruction_lines)

    if context.is_empty:
        context_block = ""
    else:
        entries = [
            f"[{i + 1}] (source: {item.chunk.chunk_id}) {item.chunk.text}"
            for i, item in enumerate(context.items)
        ]
        context_block = CONTEXT_HEADER + "\n" + "\n".join(entries)

    input_data = QUESTION_HEADER + "\n" + query
    sections = [instruction]
    if context_block:
        sections.append(context_block)
    sections.extend([input_data, DEFAULT_OUTPUT_INDICATOR])
    rendered = "\n\n".join(sections)
    return PromptBundle(
        instruction=instruction,
        context_block=context_block,
        input_data=input_data,
        output_indicator=DEFAULT_OUTPUT_INDICATOR,
        rendered=rendered,
        token_estimate=len(rendered.split()),
    )


def prompt_messages(bundle: PromptBundle) -> list[Message]:
    """Split the rendered prompt into chat messages for the wire protocol."""
    user_sections = [s for s in (bundle.context_block, bundle.input_data, bundle.output_indicator) if s]
    return [
        {"role": "system", "content": bundle.instruction},
        {"role": "user", "content": "\n\n".join(user_sections)},
    ]


def generate_answer(
    bundle: PromptBundle,
    llm: LLMClient,
    decoding: DecodingConfig | None = None,
    max_retries: int = 2,
) -> tuple[str, int, int]:
    """Call the model; returns (text, attempts, latency_ms).

    Retries transient failures up to max_retries; the final failure is
    raised with the rendered prompt attached for diagnostics.
    """
    decoding = decoding or DecodingConfig()
    messages = prompt_messages(bundle)
    start = time.perf_counter()
    last_error: LLMError | None = None
    for attempt in range(1, max_retries + 2):
        try:
            text = llm.complete(messages, decoding)
        except LLMError as exc:
            last_error = exc
            logger.warning("generation failed (attempt %d): %s", attempt, exc)
            continue
        latency_ms = int(round((time.perf_counter() - start) * 1000))
        return text, attempt, latency_ms
    raise LLMError(
        f"generation failed: {last_error}",
        attempts=max_retries + 1,
        prompt=bundle.rendered,
    )


@runtime_checkable
class FactChecker(Protocol):
    method: str

    def check(self, answer_text: str, context_texts: Sequence[str]) -> tuple[bool, str, str]:
        """Returns (supported, method_used, detail)."""
        ...


class LexicalFactChecker:
    """Deterministic support check: every answer sentence must clear theta.

    A sentence's basis is its content words (all tokens when it has no
    content words); it is supported when at least theta of the basis
    appears anywhere in the context vocabulary.
    """

    method = "lexical"

    def __init__(self, theta: float = 0.5):
        if not 0.0 < theta <= 1.0:
            raise ValueError(f"theta must be in (0, 1], got {theta}")
        self.theta = theta

    def check(self, answer_text: str, context_texts: Sequence[str]) -> tuple[bool, str, str]:
        vocab = vocabulary(context_texts)
        sentences = split_sentences(answer_text)
        unsupported = [s for s in sentences if not sentence_supported(s, vocab, self.theta)]
        if unsupported:
            shown = "; ".join(s[:80] for s in unsupported[:3])
            return False, self.method, f"{len(unsupported)}/{len(sentences)} sentences unsupported: {shown}"
        return True, self.method, f"all {len(sentences)} sentences supported"


class JudgeFactChecker:
    """LLM entailment check with lexical fallback when the judge misbehaves."""

    method = "judge"

    def __init__(self, llm: LLMClient, fallback: LexicalFactChecker | None = None):
        self._llm = llm
        self._fallback = fallback or LexicalFactChecker()

    def check(self, answer_text: str, context_texts: Sequence[str]) -> tuple[bool, str, str]:
        prompt = FACT_CHECK_INSTRUCTION.format(
            context="\n".join(context_texts), answer=answer_text
        )
        try:
            reply = self._llm.complete(
                [{"role": "user", "content": prompt}], DecodingConfig(max_tokens=8)
            )
        except LLMError as exc:
            ok, _, detail = self._fallback.check(answer_text, context_texts)
            return ok, "lexical-fallback", f"judge failed ({exc}); {detail}"
        match = YES_NO_RE.search(reply)
        if match is None:
            ok, _, detail = self._fallback.check(answer_text, context_texts)
            return ok, "lexical-fallback", f"judge reply unparseable ({reply[:60]!r}); {detail}"
        verdict = match.group(1).lower() == "yes"
        return verdict, self.method, f"judge said {match.group(1).lower()}"


def fact_check(
    answer_text: str, context: RetrievedContext, checker: FactChecker
) -> GuardrailResult:
    """Empty context (No-RAG) is never checked; otherwise delegate to checker."""
    if context.is_empty:
        return GuardrailResult(verdict="not_checked", method="none", detail="no context retrieved")
    ok, method, detail = checker.check(answer_text, context.texts)
    return GuardrailResult(verdict="pass" if ok else "fail", method=method, detail=detail)


def cited_chunk_ids(answer_text: str, context: RetrievedContext) -> tuple[str, ...]:
    """Context chunks sharing at least one content token with the answer, in order."""
    answer_tokens = {t for t in tokenize(answer_text) if t not in STOPWORDS}
    cited = []
    for item in context.items:
        if answer_tokens & set(tokenize(item.chunk.text)):
            cited.append(item.chunk.chunk_id)
    return tuple(cited)


def _finalize(
    text: str,
    bundle: PromptBundle,
    context: RetrievedContext,
    llm: LLMClient,
    persona: PersonaConfig,
    checker: FactChecker,
    latency_ms: int,
    attempts: int,
) -> GeneratedAnswer:
    guardrail = fact_check(text, context, checker)
    final_text = text
    if guardrail.verdict == "fail":
        guardrail = GuardrailResult(
            verdict="fail",
            method=guardrail.method,
            detail=f"original answer withheld: {text!r}; {guardrail.detail}",
        )
        final_text = persona.default_answer
    return GeneratedAnswer(
        text=final_text,
        model_id=llm.model_id,
        prompt=bundle,
        context=context,
        cited_chunk_ids=cited_chunk_ids(final_text, context),
        guardrail=guardrail,
        latency_ms=latency_ms,
        attempts=attempts,
    )


def answer_query(
    query: str,
    context: RetrievedContext,
    llm: LLMClient,
    persona: PersonaConfig,
    checker: FactChecker,
    decoding: DecodingConfig | None = None,
) -> GeneratedAnswer:
    """Prompt, generate, fact-check; a failing verdict substitutes the default answer."""
    bundle = build_prompt(query, context, persona)
    text, attempts, latency_ms = generate_answer(bundle, llm, decoding)
    return _finalize(text, bundle, context, llm, persona, checker, latency_ms, attempts)


def stream_answer(
    query: str,
    context: RetrievedContext,
    llm: LLMClient,
    persona: PersonaConfig,
    checker: FactChecker,
    decoding: DecodingConfig | None = None,
) -> Iterator[tuple[str, object]]:
    """Yield ("delta", text) frames then one ("final", GeneratedAnswer).

    The guardrail can only run on the complete text, so a failing verdict
    shows up in the final frame with the substituted answer.
    """
    decoding = decoding or DecodingConfig()
    bundle = build_prompt(query, context, persona)
    start = time.perf_counter()
    pieces: list[str] = []
    for piece in llm.stream(prompt_messages(bundle), decoding):
        pieces.append(piece)
        yield ("delta", piece)
    text = "".join(pieces)
    latency_ms = int(round((time.perf_counter() - start) * 1000))
    yield ("final", _finalize(text, bundle, context, llm, persona, checker, latency_ms, 1))

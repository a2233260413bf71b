"""Retrieval and answer metrics, LLM-as-a-judge, and comparison reports.

Metric formulas are fixed here so results are reproducible without any
external evaluation framework. Every judge-dependent metric has a
deterministic lexical mode; in that mode a full run needs no network.
"""

from __future__ import annotations

import csv
import json
import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence, runtime_checkable

import numpy as np

from .embedding import EmbeddingProvider, embed_texts
from .generation import GeneratedAnswer
from .lexical import sentence_supported, split_sentences, vocabulary
from .llmclient import DecodingConfig, LLMClient, LLMError
from .retrieval import RetrievedContext, parse_numbered_list

logger = logging.getLogger(__name__)

METRIC_NAMES = (
    "context_precision",
    "context_recall",
    "answer_similarity",
    "answer_correctness",
    "faithfulness",
    "answer_relevance",
    "judge_rating",
    "overall",
)

ANSWER_METRICS = ("answer_similarity", "answer_correctness", "faithfulness", "answer_relevance")

INT_RE = re.compile(r"-?\d+")

JUDGE_INSTRUCTION = (
    "Rate how well the answer addresses the question, using the reference "
    "answer as the standard. Reply with a single integer from {lo} to {hi} "
    "and nothing else.\n\nQuestion: {question}\n\nReference answer: "
    "{reference}\n\nAnswer to rate: {answer}"
)

RELEVANCE_INSTRUCTION = (
    "Write {m} questions that the passage below would directly answer. "
    "Output a numbered list, one question per line, and nothing else.\n\n"
    "Passage:\n{answer}"
)


class MetricAbsent(Exception):
    """A metric could not be computed for a sample; recorded, not fatal."""


@dataclass(frozen=True)
class EvalSample:
    question: str
    ground_truth: str
    reference_context_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.question.strip():
            raise ValueError("question must be non-empty")
        if not self.ground_truth.strip():
            raise ValueError("ground_truth must be non-empty")

    @classmethod
    def from_dict(cls, data: dict) -> "EvalSample":
        refs = data.get("reference_context_ids")
        return cls(
            question=data["question"],
            ground_truth=data["ground_truth"],
            reference_context_ids=tuple(refs) if refs is not None else None,
        )

    def to_dict(self) -> dict:
        out = {"question": self.question, "ground_truth": self.ground_truth}
        if self.reference_context_ids is not None:
            out["reference_context_ids"] = list(self.reference_context_ids)
        return out


def load_dataset(path: Path | str) -> list[EvalSample]:
    """JSON-lines dataset, one sample per line."""
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                samples.append(EvalSample.from_dict(json.loads(line)))
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}:{lineno}: bad sample: {exc}") from exc
    return samples


@dataclass(frozen=True)
class MetricConfig:
    theta: float = 0.5
    correctness_weight: float = 0.75
    n_relevance_questions: int = 3
    judge_scale: tuple[int, int] = (1, 10)

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise ValueError(f"theta must be in (0, 1], got {self.theta}")
        if not 0.0 <= self.correctness_weight <= 1.0:
            raise ValueError(f"correctness_weight must be in [0, 1], got {self.correctness_weight}")
        if self.n_relevance_questions < 1:
            raise ValueError("n_relevance_questions must be >= 1")
        if self.judge_scale[0] >= self.judge_scale[1]:
            raise ValueError(f"judge_scale must be (lo, hi) with lo < hi, got {self.judge_scale}")


@runtime_checkable
class Attributor(Protocol):
    """Decides whether one sentence is supported by the given context texts."""

    def supports(self, sentence: str, context_texts: Sequence[str]) -> bool:
        ...


class LexicalAttributor:
    """Deterministic support via content-word overlap against context vocabulary."""

    def __init__(self, theta: float = 0.5):
        self.theta = theta

    def supports(self, sentence: str, context_texts: Sequence[str]) -> bool:
        return sentence_supported(sentence, vocabulary(context_texts), self.theta)


class JudgeAttributor:
    """LLM yes/no entailment per sentence; lexical fallback on failure."""

    def __init__(self, llm: LLMClient, theta: float = 0.5):
        self._llm = llm
        self._fallback = LexicalAttributor(theta)

    def supports(self, sentence: str, context_texts: Sequence[str]) -> bool:
        prompt = (
            "Reply with exactly one word, yes or no: is the statement supported "
            "by the passages?\n\nPassages:\n"
            + "\n".join(context_texts)
            + f"\n\nStatement: {sentence}"
        )
        try:
            reply = self._llm.complete(
                [{"role": "user", "content": prompt}], DecodingConfig(max_tokens=8)
            )
        except LLMError:
            return self._fallback.supports(sentence, context_texts)
        match = re.search(r"\b(yes|no)\b", reply, re.IGNORECASE)
        if match is None:
            return self._fallback.supports(sentence, context_texts)
        return match.group(1).lower() == "yes"


@runtime_checkable
class RelevanceHelper(Protocol):
    """Produces questions a given answer would answer."""

    def questions_for(self, answer: str, m: int) -> list[str]:
        ...


class AnswerEchoRelevanceHelper:
    """Deterministic stand-in: the answer itself, m times.

    Relevance then reduces to answer-question similarity under the
    embedder, which is still monotone in topical overlap.
    """

    def questions_for(self, answer: str, m: int) -> list[str]:
        return [answer] * m


class LLMRelevanceHelper:
    def __init__(self, llm: LLMClient):
        self._llm = llm

    def questions_for(self, answer: str, m: int) -> list[str]:
        prompt = RELEVANCE_INSTRUCTION.format(m=m, answer=answer)
        try:
            reply = self._llm.complete(
                [{"role": "user", "content": prompt}], DecodingConfig(max_tokens=512)
            )
        except LLMError as exc:
            raise MetricAbsent(f"relevance helper failed: {exc}") from exc
        questions = parse_numbered_list(reply)
        if not questions:
            raise MetricAbsent("relevance helper produced no parseable questions")
        return questions[:m]


class ScriptedRelevanceHelper:
    """Fixed question list per call; for fixtures that pin relevance exactly."""

    def __init__(self, questions: Sequence[str]):
        self._questions = list(questions)

    def questions_for(self, answer: str, m: int) -> list[str]:
        return (self._questions * m)[:m] if self._questions else [answer] * m


def context_precision(retrieved_ids: Sequence[str], indicators: Sequence[int]) -> float:
    """Rank-weighted precision: sum of precision@k at relevant ranks / #relevant."""
    if len(retrieved_ids) != len(indicators):
        raise ValueError(
            f"{len(indicators)} indicators for {len(retrieved_ids)} retrieved items"
        )
    if not retrieved_ids:
        return 0.0
    relevant = sum(1 for r in indicators if r)
    if relevant == 0:
        return 0.0
    total = 0.0
    hits = 0
    for k, rel in enumerate(indicators, start=1):
        if rel:
            hits += 1
            total += hits / k
    return total / relevant


def reference_indicators(retrieved_ids: Sequence[str], reference_ids: Sequence[str]) -> list[int]:
    refs = set(reference_ids)
    return [1 if cid in refs else 0 for cid in retrieved_ids]


def context_recall(
    context_texts: Sequence[str], ground_truth: str, attributor: Attributor
) -> float:
    """Fraction of ground-truth sentences attributable to the retrieved context."""
    sentences = split_sentences(ground_truth)
    if not sentences:
        raise ValueError("ground_truth has no sentences")
    if not context_texts:
        return 0.0
    supported = sum(1 for s in sentences if attributor.supports(s, context_texts))
    return supported / len(sentences)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    a64 = np.asarray(a, dtype=np.float64).ravel()
    b64 = np.asarray(b, dtype=np.float64).ravel()
    na, nb = np.linalg.norm(a64), np.linalg.norm(b64)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a64, b64) / (na * nb))


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def answer_similarity(answer: str, ground_truth: str, embedder: EmbeddingProvider) -> float:
    """Cosine of the two embeddings, clamped to [0, 1]; empty answer is 0."""
    if not answer.strip():
        return 0.0
    vectors = embed_texts(embedder, [answer, ground_truth])
    return _clamp01(_cosine(vectors[0], vectors[1]))


def answer_correctness(
    answer: str,
    ground_truth: str,
    embedder: EmbeddingProvider,
    attributor: Attributor,
    weight: float = 0.75,
) -> float:
    """Factual F1 over statement sets blended with embedding similarity.

    TP: answer sentences supported by the ground truth. FP: the rest.
    FN: ground-truth sentences not supported by the answer.
    """
    answer_sentences = split_sentences(answer)
    gt_sentences = split_sentences(ground_truth)
    tp = sum(1 for s in answer_sentences if attributor.supports(s, [ground_truth]))
    fp = len(answer_sentences) - tp
    fn = sum(1 for s in gt_sentences if not attributor.supports(s, [answer]))
    denom = 2 * tp + fp + fn
    f1 = (2 * tp / denom) if denom else 0.0
    sim = answer_similarity(answer, ground_truth, embedder)
    return _clamp01(weight * f1 + (1.0 - weight) * sim)


def faithfulness(answer: str, context_texts: Sequence[str], attributor: Attributor) -> float:
    """Fraction of answer claims (sentences) supported by the context."""
    claims = split_sentences(answer)
    if not claims:
        return 0.0
    if not context_texts:
        return 0.0
    supported = sum(1 for c in claims if attributor.supports(c, context_texts))
    return supported / len(claims)


def answer_relevance(
    answer: str,
    question: str,
    helper: RelevanceHelper,
    embedder: EmbeddingProvider,
    m: int = 3,
) -> float:
    """Mean cosine between the original question and helper-generated questions."""
    generated = helper.questions_for(answer, m)
    if not generated:
        raise MetricAbsent("relevance helper returned no questions")
    vectors = embed_texts(embedder, [question] + list(generated))
    scores = [_cosine(vectors[0], vectors[i]) for i in range(1, len(vectors))]
    return _clamp01(float(np.mean(scores)))


def judge_rate(
    question: str,
    answer: str,
    reference: str,
    judge: LLMClient,
    scale: tuple[int, int] = (1, 10),
    max_retries: int = 1,
) -> int | None:
    """Single integer rating parsed from the judge; None when unparseable."""
    lo, hi = scale
    prompt = JUDGE_INSTRUCTION.format(lo=lo, hi=hi, question=question, reference=reference, answer=answer)
    for attempt in range(1 + max_retries):
        try:
            reply = judge.complete(
                [{"role": "user", "content": prompt}], DecodingConfig(max_tokens=8)
            )
        except LLMError as exc:
            logger.warning("judge call failed (attempt %d): %s", attempt + 1, exc)
            continue
        match = INT_RE.search(reply)
        if match is None:
            logger.warning("judge reply unparseable (attempt %d): %r", attempt + 1, reply[:60])
            continue
        rating = int(match.group())
        if rating < lo or rating > hi:
            logger.warning("judge rating %d outside [%d, %d], clamped", rating, lo, hi)
            rating = min(hi, max(lo, rating))
        return rating
    return None


@dataclass
class EvalRuntime:
    """Everything run_eval needs, already wired for one (strategy, model) cell."""

    strategy_name: str
    model_name: str
    retrieve: Callable[[str], RetrievedContext]
    answer: Callable[[str, RetrievedContext], GeneratedAnswer]
    embedder: EmbeddingProvider
    attributor: Attributor
    relevance_helper: RelevanceHelper
    judge: LLMClient | None = None


@dataclass
class SampleRecord:
    sample_id: str
    strategy: str
    model: str
    question: str
    answer_text: str
    retrieved_chunk_ids: list[str]
    guardrail_verdict: str
    metrics: dict[str, float | int | None]
    absent: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "strategy": self.strategy,
            "model": self.model,
            "question": self.question,
            "answer_text": self.answer_text,
            "retrieved_chunk_ids": self.retrieved_chunk_ids,
            "guardrail_verdict": self.guardrail_verdict,
            "metrics": self.metrics,
            "absent": sorted(self.absent),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SampleRecord":
        return cls(
            sample_id=data["sample_id"],
            strategy=data["strategy"],
            model=data["model"],
            question=data["question"],
            answer_text=data["answer_text"],
            retrieved_chunk_ids=list(data["retrieved_chunk_ids"]),
            guardrail_verdict=data["guardrail_verdict"],
            metrics=dict(data["metrics"]),
            absent=list(data["absent"]),
        )


@dataclass
class MetricReport:
    strategy: str
    model: str
    records: list[SampleRecord]
    footnotes: tuple[str, ...] = (
        "empty retrieval and zero-relevance cases score 0.0 by convention",
        "aggregate means exclude absent values; counts reported per metric",
    )

    @property
    def aggregates(self) -> dict[str, dict]:
        out: dict[str, dict] = {}
        for name in METRIC_NAMES:
            values = [
                r.metrics[name]
                for r in self.records
                if r.metrics.get(name) is not None
            ]
            out[name] = {
                "mean": (float(np.mean(values)) if values else None),
                "count": len(values),
                "absent": len(self.records) - len(values),
            }
        return out

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "model": self.model,
            "n_samples": len(self.records),
            "aggregates": self.aggregates,
            "records": [r.to_dict() for r in sorted(self.records, key=lambda r: r.sample_id)],
            "footnotes": list(self.footnotes),
        }


def _metric_guard(record: SampleRecord, name: str, compute: Callable[[], float | int | None]) -> None:
    try:
        record.metrics[name] = compute()
    except MetricAbsent as exc:
        logger.warning("%s absent for %s: %s", name, record.sample_id, exc)
        record.metrics[name] = None
        record.absent.append(name)


def evaluate_sample(
    sample_id: str,
    sample: EvalSample,
    runtime: EvalRuntime,
    cfg: MetricConfig,
) -> SampleRecord:
    """Run the pipeline on one sample and compute every configured metric."""
    context = runtime.retrieve(sample.question)
    answer = runtime.answer(sample.question, context)
    record = SampleRecord(
        sample_id=sample_id,
        strategy=runtime.strategy_name,
        model=runtime.model_name,
        question=sample.question,
        answer_text=answer.text,
        retrieved_chunk_ids=list(context.chunk_ids),
        guardrail_verdict=answer.guardrail.verdict,
        metrics={},
    )

    def precision() -> float | None:
        if sample.reference_context_ids is not None:
            indicators = reference_indicators(context.chunk_ids, sample.reference_context_ids)
        else:
            # No labeled references: judge each chunk on whether it supports
            # the ground truth, in whatever mode the attributor runs.
            indicators = [
                1 if runtime.attributor.supports(sample.ground_truth, [text]) else 0
                for text in context.texts
            ]
        return context_precision(context.chunk_ids, indicators)

    _metric_guard(record, "context_precision", precision)
    _metric_guard(
        record,
        "context_recall",
        lambda: context_recall(list(context.texts), sample.ground_truth, runtime.attributor),
    )
    _metric_guard(
        record,
        "answer_similarity",
        lambda: answer_similarity(answer.text, sample.ground_truth, runtime.embedder),
    )
    _metric_guard(
        record,
        "answer_correctness",
        lambda: answer_correctness(
            answer.text,
            sample.ground_truth,
            runtime.embedder,
            runtime.attributor,
            cfg.correctness_weight,
        ),
    )
    _metric_guard(
        record,
        "faithfulness",
        lambda: faithfulness(answer.text, list(context.texts), runtime.attributor),
    )
    _metric_guard(
        record,
        "answer_relevance",
        lambda: answer_relevance(
            answer.text,
            sample.question,
            runtime.relevance_helper,
            runtime.embedder,
            cfg.n_relevance_questions,
        ),
    )
    if runtime.judge is not None:
        _metric_guard(
            record,
            "judge_rating",
            lambda: judge_rate(
                sample.question, answer.text, sample.ground_truth, runtime.judge, cfg.judge_scale
            ),
        )
        if record.metrics.get("judge_rating") is None and "judge_rating" not in record.absent:
            record.absent.append("judge_rating")
    else:
        record.metrics["judge_rating"] = None
        record.absent.append("judge_rating")

    answer_values = [record.metrics.get(name) for name in ANSWER_METRICS]
    if any(v is None for v in answer_values):
        record.metrics["overall"] = None
        record.absent.append("overall")
    else:
        record.metrics["overall"] = float(np.mean([float(v) for v in answer_values]))
    return record


def run_eval(
    dataset: Sequence[EvalSample],
    runtime: EvalRuntime,
    cfg: MetricConfig | None = None,
    records_path: Path | str | None = None,
    max_workers: int = 1,
) -> MetricReport:
    """Evaluate every sample; flush records incrementally so runs can resume.

    With records_path set, existing records for this (strategy, model) are
    reused instead of recomputed.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    cfg = cfg or MetricConfig()
    done: dict[str, SampleRecord] = {}
    if records_path is not None and Path(records_path).exists():
        with open(records_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = SampleRecord.from_dict(json.loads(line))
                if record.strategy == runtime.strategy_name and record.model == runtime.model_name:
                    done[record.sample_id] = record

    ids = [f"s{i:04d}" for i in range(len(dataset))]
    pending = [(ids[i], dataset[i]) for i in range(len(dataset)) if ids[i] not in done]
    write_lock = threading.Lock()
    sink = open(records_path, "a", encoding="utf-8") if records_path is not None else None
    try:

        def work(item: tuple[str, EvalSample]) -> SampleRecord:
            sample_id, sample = item
            record = evaluate_sample(sample_id, sample, runtime, cfg)
            if sink is not None:
                with write_lock:
                    sink.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
                    sink.flush()
            return record

        if max_workers > 1 and len(pending) > 1:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                fresh = list(pool.map(work, pending))
        else:
            fresh = [work(item) for item in pending]
    finally:
        if sink is not None:
            sink.close()
    records = sorted(list(done.values()) + fresh, key=lambda r: r.sample_id)
    return MetricReport(strategy=runtime.strategy_name, model=runtime.model_name, records=records)


@dataclass
class ComparisonReport:
    dataset_size: int
    cells: list[MetricReport]

    def to_dict(self) -> dict:
        return {
            "dataset_size": self.dataset_size,
            "cells": [
                {
                    "strategy": c.strategy,
                    "model": c.model,
                    "n_samples": len(c.records),
                    "aggregates": c.aggregates,
                }
                for c in self.cells
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def write_csv(self, path: Path | str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["strategy", "model"] + list(METRIC_NAMES))
            for cell in self.cells:
                agg = cell.aggregates
                writer.writerow(
                    [cell.strategy, cell.model]
                    + [
                        ("" if agg[m]["mean"] is None else f"{agg[m]['mean']:.6f}")
                        for m in METRIC_NAMES
                    ]
                )

    def render_table(self) -> str:
        headers = ["strategy", "model"] + [m for m in METRIC_NAMES]
        rows = []
        for cell in self.cells:
            agg = cell.aggregates
            rows.append(
                [cell.strategy, cell.model]
                + [
                    ("-" if agg[m]["mean"] is None else f"{agg[m]['mean']:.4f}")
                    for m in METRIC_NAMES
                ]
            )
        widths = [max(len(headers[i]), *(len(r[i]) for r in rows)) if rows else len(headers[i]) for i in range(len(headers))]
        def fmt(row: list[str]) -> str:
            return "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
        lines = [fmt(headers), fmt(["-" * w for w in widths])]
        lines.extend(fmt(r) for r in rows)
        return "\n".join(lines) + "\n"


def compare(
    strategies: Sequence[str],
    models: Sequence[str],
    dataset: Sequence[EvalSample],
    runtime_factory: Callable[[str, str], EvalRuntime],
    cfg: MetricConfig | None = None,
    records_path: Path | str | None = None,
    max_workers: int = 1,
) -> ComparisonReport:
    """Full strategy × model cross-product, one MetricReport per cell."""
    if not strategies:
        raise ValueError("strategies list is empty")
    if not models:
        raise ValueError("models list is empty")
    if not dataset:
        raise ValueError("dataset is empty")
    cells = []
    for strategy in strategies:
        for model in models:
            runtime = runtime_factory(strategy, model)
            cells.append(
                run_eval(dataset, runtime, cfg, records_path=records_path, max_workers=max_workers)
            )
    return ComparisonReport(dataset_size=len(dataset), cells=cells)

"""Query strategies over the vector index: none, vanilla, HyDE, and advanced.

All strategies share the same tail: deduplicate candidates by max
retrieval score, rerank against the original query, keep the top
k_final. With scripted helpers and the mock embedder every strategy is
a pure function of (query, corpus, config).
"""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import httpx

from .corpus import Chunk
from .embedding import EmbeddingProvider, ProviderError, VectorIndex, embed_texts
from .lexical import STOPWORDS, tokenize
from .llmclient import DecodingConfig, LLMClient, LLMError

logger = logging.getLogger(__name__)

STRATEGY_KINDS = ("none", "vanilla", "hyde", "advanced")

NUMBERED_LINE_RE = re.compile(r"^\s*\d+[.)]\s*(\S.*?)\s*$")

HYDE_INSTRUCTION = (
    "Write a short passage that plausibly answers the question below, as it "
    "might appear in a technical specification. Output only the passage.\n\n"
    "Question: {query}"
)

SUBQUERY_INSTRUCTION = (
    "Rewrite the question below as {n} different search queries that each "
    "target part of what it asks. Output a numbered list, one query per "
    "line, and nothing else.\n\n"
    "Question: {query}"
)

HELPER_DECODING = DecodingConfig(temperature=0.0, max_tokens=512)


@dataclass(frozen=True)
class StrategyConfig:
    kind: str = "vanilla"
    k_final: int = 10
    pool_per_query: int = 40
    n_subqueries: int = 10
    include_original_query: bool = True
    max_helper_concurrency: int = 4

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}, expected one of {STRATEGY_KINDS}")
        if self.k_final < 1:
            raise ValueError(f"k_final must be >= 1, got {self.k_final}")
        if self.pool_per_query < self.k_final:
            raise ValueError(
                f"pool_per_query ({self.pool_per_query}) must be >= k_final ({self.k_final})"
            )
        if self.kind == "advanced" and self.n_subqueries < 1:
            raise ValueError(f"n_subqueries must be >= 1, got {self.n_subqueries}")


@dataclass(frozen=True)
class RetrievedItem:
    chunk: Chunk
    retrieval_score: float
    rerank_score: float | None = None


@dataclass(frozen=True)
class RetrievalTrace:
    kind: str
    subqueries: tuple[str, ...] = ()
    hypothetical: str | None = None
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class RetrievedContext:
    query: str
    strategy: StrategyConfig
    items: tuple[RetrievedItem, ...] = ()
    trace: RetrievalTrace = field(default_factory=lambda: RetrievalTrace(kind="none"))

    @property
    def chunk_ids(self) -> tuple[str, ...]:
        return tuple(item.chunk.chunk_id for item in self.items)

    @property
    def texts(self) -> tuple[str, ...]:
        return tuple(item.chunk.text for item in self.items)

    @property
    def is_empty(self) -> bool:
        return not self.items


@runtime_checkable
class RerankerClient(Protocol):
    name: str

    def score(self, query: str, passages: Sequence[str]) -> list[float]:
        """One finite relevance score per passage, same order as passages."""
        ...


class TokenOverlapReranker:
    """Scores a passage by its count of distinct query content tokens."""

    name = "token-overlap"

    def score(self, query: str, passages: Sequence[str]) -> list[float]:
        qtokens = {t for t in tokenize(query) if t not in STOPWORDS} or set(tokenize(query))
        return [float(len(qtokens & set(tokenize(p)))) for p in passages]


class RemoteReranker:
    """Cross-encoder scoring endpoint: POST {query, passages[]} -> {scores[]}."""

    def __init__(
        self,
        base_url: str,
        model_id: str = "cross-encoder",
        path: str = "/rerank",
        max_retries: int = 2,
        timeout: float = 30.0,
        client: httpx.Client | None = None,
    ):
        self.name = model_id
        self.path = path
        self.max_retries = max_retries
        self._client = client or httpx.Client(base_url=base_url.rstrip("/"), timeout=timeout)

    def score(self, query: str, passages: Sequence[str]) -> list[float]:
        attempts = 0
        last_error: Exception | None = None
        while attempts <= self.max_retries:
            attempts += 1
            try:
                resp = self._client.post(self.path, json={"query": query, "passages": list(passages)})
                resp.raise_for_status()
                scores = [float(s) for s in resp.json()["scores"]]
            except (httpx.HTTPError, KeyError, TypeError, ValueError) as exc:
                last_error = exc
                logger.warning("rerank call failed (attempt %d): %s", attempts, exc)
                continue
            if len(scores) != len(passages):
                raise ProviderError(
                    f"reranker returned {len(scores)} scores for {len(passages)} passages",
                    attempts=attempts,
                )
            return scores
        raise ProviderError(f"reranker endpoint failed: {last_error}", attempts=attempts)


def deduplicate(items: Sequence[tuple[str, float]]) -> list[tuple[str, float]]:
    """Collapse repeated ids to their max score; descending score, ties by id."""
    best: dict[str, float] = {}
    for chunk_id, score in items:
        if chunk_id not in best or score > best[chunk_id]:
            best[chunk_id] = score
    return sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))


def rerank(
    query: str,
    candidates: Sequence[tuple[str, float]],
    index: VectorIndex,
    reranker: RerankerClient,
    k: int,
) -> tuple[list[RetrievedItem], list[str]]:
    """Order deduplicated candidates by cross-encoder score and keep the top k.

    Returns (items, warnings). Reranker failure degrades to retrieval-score
    order rather than failing the query.
    """
    if not candidates:
        return [], []
    chunks = [index.resolve_chunk(cid) for cid, _ in candidates]
    warnings: list[str] = []
    try:
        scores = reranker.score(query, [c.text for c in chunks])
    except Exception as exc:  # degrade, never drop the query
        warnings.append(f"reranker failed, using retrieval order: {exc}")
        logger.warning(warnings[-1])
        items = [
            RetrievedItem(chunk=chunks[i], retrieval_score=candidates[i][1])
            for i in range(len(candidates))
        ]
        return items[: min(k, len(items))], warnings
    order = sorted(
        range(len(candidates)), key=lambda i: (-scores[i], candidates[i][0])
    )
    items = [
        RetrievedItem(
            chunk=chunks[i], retrieval_score=candidates[i][1], rerank_score=float(scores[i])
        )
        for i in order
    ]
    return items[: min(k, len(items))], warnings


def parse_numbered_list(text: str) -> list[str]:
    """Extract the payloads of numbered lines; duplicates removed, order kept."""
    seen: set[str] = set()
    out: list[str] = []
    for line in text.splitlines():
        match = NUMBERED_LINE_RE.match(line)
        if match:
            payload = match.group(1)
            if payload not in seen:
                seen.add(payload)
                out.append(payload)
    return out


def generate_subqueries(
    query: str, llm: LLMClient, n: int, max_retries: int = 2
) -> tuple[list[str], list[str]]:
    """Ask the helper LLM for n rewrites; tolerant parse with bounded retries.

    Returns (subqueries, warnings). Zero parseable rewrites falls back to
    the original query.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    warnings: list[str] = []
    collected: list[str] = []
    seen: set[str] = set()
    prompt = SUBQUERY_INSTRUCTION.format(n=n, query=query)
    for attempt in range(1 + max_retries):
        try:
            reply = llm.complete([{"role": "user", "content": prompt}], HELPER_DECODING)
        except LLMError as exc:
            warnings.append(f"sub-query helper failed (attempt {attempt + 1}): {exc}")
            continue
        for sub in parse_numbered_list(reply):
            if sub not in seen:
                seen.add(sub)
                collected.append(sub)
        if len(collected) >= n:
            return collected[:n], warnings
    if not collected:
        warnings.append("sub-query helper produced nothing parseable; using the original query")
        return [query], warnings
    warnings.append(f"only {len(collected)} of {n} sub-queries parsed after retries")
    return collected, warnings


def _search_pool(
    index: VectorIndex, embedder: EmbeddingProvider, text: str, pool: int
) -> list[tuple[str, float]]:
    if len(index) == 0:
        return []
    vector = embed_texts(embedder, [text])[0]
    return index.search(vector, pool)


def _search_pools(
    index: VectorIndex,
    embedder: EmbeddingProvider,
    texts: Sequence[str],
    pool: int,
    max_concurrency: int,
) -> list[list[tuple[str, float]]]:
    """Per-text search pools, merged in input order regardless of completion order."""
    if len(texts) > 1 and max_concurrency > 1:
        with ThreadPoolExecutor(max_workers=max_concurrency) as executor:
            return list(executor.map(lambda t: _search_pool(index, embedder, t, pool), texts))
    return [_search_pool(index, embedder, t, pool) for t in texts]


def retrieve_none(query: str, cfg: StrategyConfig | None = None) -> RetrievedContext:
    cfg = cfg if cfg is not None else StrategyConfig(kind="none")
    return RetrievedContext(query=query, strategy=cfg, items=(), trace=RetrievalTrace(kind="none"))


def retrieve_vanilla(
    query: str,
    index: VectorIndex,
    embedder: EmbeddingProvider,
    reranker: RerankerClient,
    cfg: StrategyConfig,
) -> RetrievedContext:
    pool = _search_pool(index, embedder, query, cfg.pool_per_query)
    items, warnings = rerank(query, deduplicate(pool), index, reranker, cfg.k_final)
    return RetrievedContext(
        query=query,
        strategy=cfg,
        items=tuple(items),
        trace=RetrievalTrace(kind="vanilla", warnings=tuple(warnings)),
    )


def retrieve_hyde(
    query: str,
    index: VectorIndex,
    embedder: EmbeddingProvider,
    llm: LLMClient,
    reranker: RerankerClient,
    cfg: StrategyConfig,
) -> RetrievedContext:
    try:
        hypothetical = llm.complete(
            [{"role": "user", "content": HYDE_INSTRUCTION.format(query=query)}], HELPER_DECODING
        ).strip()
    except LLMError as exc:
        warning = f"hypothetical-answer helper failed, falling back to vanilla: {exc}"
        logger.warning(warning)
        vanilla = retrieve_vanilla(query, index, embedder, reranker, cfg)
        return RetrievedContext(
            query=query,
            strategy=cfg,
            items=vanilla.items,
            trace=RetrievalTrace(
                kind="hyde", warnings=vanilla.trace.warnings + (warning,)
            ),
        )
    pools = _search_pools(
        index, embedder, [query, hypothetical], cfg.pool_per_query, cfg.max_helper_concurrency
    )
    merged = deduplicate([pair for pool in pools for pair in pool])
    items, warnings = rerank(query, merged, index, reranker, cfg.k_final)
    return RetrievedContext(
        query=query,
        strategy=cfg,
        items=tuple(items),
        trace=RetrievalTrace(kind="hyde", hypothetical=hypothetical, warnings=tuple(warnings)),
    )


def retrieve_advanced(
    query: str,
    index: VectorIndex,
    embedder: EmbeddingProvider,
    llm: LLMClient,
    reranker: RerankerClient,
    cfg: StrategyConfig,
) -> RetrievedContext:
    subqueries, warnings = generate_subqueries(query, llm, cfg.n_subqueries)
    searched = list(subqueries)
    if cfg.include_original_query and query not in searched:
        searched.append(query)
    pools = _search_pools(
        index, embedder, searched, cfg.pool_per_query, cfg.max_helper_concurrency
    )
    merged = deduplicate([pair for pool in pools for pair in pool])
    items, rerank_warnings = rerank(query, merged, index, reranker, cfg.k_final)
    return RetrievedContext(
        query=query,
        strategy=cfg,
        items=tuple(items),
        trace=RetrievalTrace(
            kind="advanced",
            subqueries=tuple(searched),
            warnings=tuple(warnings) + tuple(rerank_warnings),
        ),
    )


def retrieve(
    query: str,
    index: VectorIndex,
    embedder: EmbeddingProvider,
    llm: LLMClient,
    reranker: RerankerClient,
    cfg: StrategyConfig,
) -> RetrievedContext:
    """Dispatch on cfg.kind; the single entry point used by service and CLI."""
    if cfg.kind == "none":
        return retrieve_none(query, cfg)
    if cfg.kind == "vanilla":
        return retrieve_vanilla(query, index, embedder, reranker, cfg)
    if cfg.kind == "hyde":
        return retrieve_hyde(query, index, embedder, llm, reranker, cfg)
    if cfg.kind == "advanced":
        return retrieve_advanced(query, index, embedder, llm, reranker, cfg)
    raise ValueError(f"unknown strategy kind {cfg.kind!r}")

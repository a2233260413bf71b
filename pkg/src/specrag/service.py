"""HTTP API over the pipeline: ingest, chat (optionally streamed), eval jobs."""

from __future__ import annotations

import json
import logging
import threading
import uuid
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, Field

from .config import AppConfig, Pipeline, build_components
from .corpus import ingest_corpus
from .embedding import build_index
from .evalharness import EvalSample, compare, load_dataset, run_eval
from .generation import GeneratedAnswer, stream_answer
from .retrieval import STRATEGY_KINDS

logger = logging.getLogger(__name__)

SESSION_TURNS = 4


class ApiError(Exception):
    def __init__(self, status_code: int, code: str, message: str):
        super().__init__(message)
        self.status_code = status_code
        self.code = code
        self.message = message


class IngestRequest(BaseModel):
    corpus_path: str


class ChatRequest(BaseModel):
    query: str = Field(min_length=1)
    strategy: str | None = None
    session_id: str | None = None
    stream: bool = False


class EvalRequest(BaseModel):
    dataset_path: str | None = None
    samples: list[dict] | None = None
    strategy: str | None = None
    model: str | None = None


class CompareRequest(BaseModel):
    dataset_path: str | None = None
    samples: list[dict] | None = None
    strategies: list[str]
    models: list[str] | None = None


@dataclass
class Job:
    job_id: str
    kind: str
    status: str = "pending"  # pending | running | done | error
    result: Any = None
    error: str | None = None


@dataclass
class ServiceState:
    cfg: AppConfig
    pipeline: Pipeline | None = None
    sessions: dict[str, deque] = field(default_factory=dict)
    jobs: dict[str, Job] = field(default_factory=dict)
    swap_lock: threading.Lock = field(default_factory=threading.Lock)
    executor: ThreadPoolExecutor = field(default_factory=lambda: ThreadPoolExecutor(max_workers=2))


def _chat_response_dict(answer: GeneratedAnswer, session_id: str | None) -> dict:
    context = answer.context
    scores = {
        item.chunk.chunk_id: (
            item.rerank_score if item.rerank_score is not None else item.retrieval_score
        )
        for item in context.items
    }
    citations = []
    for item in context.items:
        if item.chunk.chunk_id in answer.cited_chunk_ids:
            citations.append(
                {
                    "chunk_id": item.chunk.chunk_id,
                    "doc_id": item.chunk.doc_id,
                    "snippet": item.chunk.text[:240],
                    "score": scores[item.chunk.chunk_id],
                }
            )
    return {
        "answer": answer.text,
        "model_id": answer.model_id,
        "citations": citations,
        "guardrail": {
            "verdict": answer.guardrail.verdict,
            "method": answer.guardrail.method,
            "detail": answer.guardrail.detail,
        },
        "trace": {
            "kind": context.trace.kind,
            "subqueries": list(context.trace.subqueries),
            "hypothetical": context.trace.hypothetical,
            "warnings": list(context.trace.warnings),
        },
        "latency_ms": answer.latency_ms,
        "session_id": session_id,
    }


def _history_prefixed(state: ServiceState, session_id: str | None, query: str) -> str:
    if not session_id:
        return query
    history = state.sessions.get(session_id)
    if not history:
        return query
    turns = [f"User: {q}\nAssistant: {a}" for q, a in history]
    return "\n".join(turns) + f"\nUser: {query}"


def _record_turn(state: ServiceState, session_id: str | None, query: str, answer: str) -> None:
    if not session_id:
        return
    history = state.sessions.setdefault(session_id, deque(maxlen=SESSION_TURNS))
    history.append((query, answer))


def _load_samples(req_dataset_path: str | None, req_samples: list[dict] | None) -> list[EvalSample]:
    if req_samples is not None:
        try:
            return [EvalSample.from_dict(s) for s in req_samples]
        except (KeyError, ValueError) as exc:
            raise ApiError(400, "bad_request", f"bad inline sample: {exc}") from exc
    if req_dataset_path:
        path = Path(req_dataset_path)
        if not path.exists():
            raise ApiError(400, "bad_request", f"dataset not found: {path}")
        return load_dataset(path)
    raise ApiError(400, "bad_request", "provide dataset_path or samples")


def create_app(cfg: AppConfig, pipeline: Pipeline | None = None) -> FastAPI:
    """Assemble the service; pipeline may be absent until the first ingest."""
    app = FastAPI(title="specrag", version="0.1.0")
    state = ServiceState(cfg=cfg, pipeline=pipeline)
    app.state.engine = state

    @app.exception_handler(ApiError)
    async def api_error_handler(request: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status_code, content={"code": exc.code, "message": exc.message}
        )

    @app.exception_handler(Exception)
    async def internal_error_handler(request: Request, exc: Exception):
        correlation_id = uuid.uuid4().hex[:12]
        logger.exception("unhandled error [%s] on %s", correlation_id, request.url.path)
        return JSONResponse(
            status_code=500,
            content={
                "code": "internal_error",
                "message": f"internal failure; correlation id {correlation_id}",
            },
        )

    def require_pipeline() -> Pipeline:
        if state.pipeline is None:
            raise ApiError(409, "index_not_loaded", "index not loaded; POST /api/ingest first")
        return state.pipeline

    @app.get("/api/health")
    def health() -> dict:
        return {
            "status": "ok",
            "index_chunks": len(state.pipeline.index) if state.pipeline else 0,
            "deterministic_mode": cfg.deterministic_mode,
        }

    @app.post("/api/ingest")
    def ingest(req: IngestRequest) -> dict:
        corpus_path = Path(req.corpus_path)
        if not corpus_path.is_dir():
            raise ApiError(400, "bad_request", f"corpus path is not a directory: {corpus_path}")
        chunks, report = ingest_corpus(corpus_path, cfg.ingest)
        components = state.pipeline.components if state.pipeline else build_components(cfg)
        index = build_index(chunks, components.embedder)
        Path(cfg.index_path).parent.mkdir(parents=True, exist_ok=True)
        index.save(cfg.index_path)
        with state.swap_lock:
            state.pipeline = Pipeline(cfg=cfg, components=components, index=index)
        return {**report.to_dict(), "index_chunks": len(index)}

    @app.get("/api/chunks/{chunk_id}")
    def get_chunk(chunk_id: str) -> dict:
        pipeline = require_pipeline()
        if not pipeline.index.has_chunk(chunk_id):
            raise ApiError(404, "not_found", f"unknown chunk: {chunk_id}")
        return pipeline.index.resolve_chunk(chunk_id).to_dict()

    @app.post("/api/chat")
    def chat(req: ChatRequest):
        pipeline = require_pipeline()
        if req.strategy is not None and req.strategy not in STRATEGY_KINDS:
            raise ApiError(
                400, "bad_request", f"unknown strategy {req.strategy!r}, expected {STRATEGY_KINDS}"
            )
        context = pipeline.retrieve(req.query, req.strategy)
        prompt_input = _history_prefixed(state, req.session_id, req.query)

        if not req.stream:
            answer = pipeline.answer(prompt_input, context)
            _record_turn(state, req.session_id, req.query, answer.text)
            return _chat_response_dict(answer, req.session_id)

        def frames() -> Iterator[str]:
            seq = 0
            final: GeneratedAnswer | None = None
            for kind, payload in stream_answer(
                prompt_input,
                context,
                pipeline.components.generator,
                cfg.persona,
                pipeline.components.checker,
                cfg.decoding,
            ):
                if kind == "delta":
                    yield "data: " + json.dumps({"seq": seq, "delta": payload}) + "\n\n"
                    seq += 1
                else:
                    final = payload  # type: ignore[assignment]
            assert final is not None
            _record_turn(state, req.session_id, req.query, final.text)
            done = {"done": True, "response": _chat_response_dict(final, req.session_id)}
            yield "data: " + json.dumps(done) + "\n\n"

        return StreamingResponse(frames(), media_type="text/event-stream")

    def _submit(kind: str, fn) -> dict:
        job = Job(job_id=uuid.uuid4().hex, kind=kind)
        state.jobs[job.job_id] = job

        def run() -> None:
            job.status = "running"
            try:
                job.result = fn()
                job.status = "done"
            except Exception as exc:  # surfaced via job status
                logger.exception("%s job %s failed", kind, job.job_id)
                job.error = str(exc)
                job.status = "error"

        state.executor.submit(run)
        return {"job_id": job.job_id, "status": job.status}

    @app.post("/api/eval")
    def eval_endpoint(req: EvalRequest) -> dict:
        pipeline = require_pipeline()
        samples = _load_samples(req.dataset_path, req.samples)
        strategy = req.strategy or cfg.strategy.kind
        if strategy not in STRATEGY_KINDS:
            raise ApiError(400, "bad_request", f"unknown strategy {strategy!r}")
        runtime = pipeline.eval_runtime(strategy, req.model)

        def work() -> dict:
            report = run_eval(samples, runtime, cfg.metric)
            return report.to_dict()

        return _submit("eval", work)

    @app.post("/api/compare")
    def compare_endpoint(req: CompareRequest) -> dict:
        pipeline = require_pipeline()
        samples = _load_samples(req.dataset_path, req.samples)
        if not req.strategies:
            raise ApiError(400, "bad_request", "strategies list is empty")
        for strategy in req.strategies:
            if strategy not in STRATEGY_KINDS:
                raise ApiError(400, "bad_request", f"unknown strategy {strategy!r}")
        models = req.models or [pipeline.components.generator.model_id]

        def work() -> dict:
            report = compare(
                req.strategies,
                models,
                samples,
                pipeline.eval_runtime,
                cfg.metric,
            )
            return report.to_dict()

        return _submit("compare", work)

    @app.get("/api/jobs/{job_id}")
    def job_status(job_id: str) -> dict:
        job = state.jobs.get(job_id)
        if job is None:
            raise ApiError(404, "not_found", f"unknown job: {job_id}")
        out: dict = {"job_id": job.job_id, "kind": job.kind, "status": job.status}
        if job.status == "done":
            out["result"] = job.result
        if job.status == "error":
            out["error"] = job.error
        return out

    return app


def serve(cfg: AppConfig, pipeline: Pipeline | None) -> None:
    """Run the service under uvicorn until interrupted."""
    import uvicorn

    app = create_app(cfg, pipeline)
    uvicorn.run(app, host=cfg.service.host, port=cfg.service.port, log_level="info")

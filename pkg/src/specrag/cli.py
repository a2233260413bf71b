"""Command-line frontend: ingest, query, chat, eval, compare, serve."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import AppConfig, ConfigError, build_components, load_config, open_pipeline, Pipeline
from .corpus import IngestConfig, ingest_corpus
from .embedding import build_index
from .evalharness import compare, load_dataset, run_eval
from .generation import GeneratedAnswer
from .retrieval import STRATEGY_KINDS
from .service import serve

logger = logging.getLogger(__name__)


class JsonLineFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        payload = {
            "ts": self.formatTime(record, "%Y-%m-%dT%H:%M:%S%z"),
            "level": record.levelname.lower(),
            "logger": record.name,
            "message": record.getMessage(),
        }
        if record.exc_info:
            payload["exc"] = self.formatException(record.exc_info)
        return json.dumps(payload)


def setup_logging(verbose: bool = False) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonLineFormatter())
    root = logging.getLogger()
    root.handlers = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


def _apply_mode_flags(cfg: AppConfig, args: argparse.Namespace) -> AppConfig:
    if getattr(args, "deterministic", False):
        cfg = replace(cfg, deterministic_mode=True)
    if getattr(args, "remote", False):
        cfg = replace(cfg, deterministic_mode=False)
    if getattr(args, "index", None):
        cfg = replace(cfg, index_path=Path(args.index))
    return cfg


def _load_cfg(args: argparse.Namespace) -> AppConfig:
    cfg = load_config(getattr(args, "config", None))
    return _apply_mode_flags(cfg, args)


def _answer_dict(answer: GeneratedAnswer) -> dict:
    context = answer.context
    by_id = {item.chunk.chunk_id: item for item in context.items}
    return {
        "answer": answer.text,
        "model_id": answer.model_id,
        "citations": [
            {
                "chunk_id": cid,
                "doc_id": by_id[cid].chunk.doc_id,
                "snippet": by_id[cid].chunk.text[:240],
                "score": (
                    by_id[cid].rerank_score
                    if by_id[cid].rerank_score is not None
                    else by_id[cid].retrieval_score
                ),
            }
            for cid in answer.cited_chunk_ids
        ],
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
    }


def cmd_ingest(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    if args.out:
        cfg = replace(cfg, index_path=Path(args.out))
    ingest_cfg = cfg.ingest
    overrides = {
        name: getattr(args, name)
        for name in ("chunk_words", "overlap_words", "min_chunk_words")
        if getattr(args, name) is not None
    }
    if overrides:
        ingest_cfg = IngestConfig(
            chunk_words=overrides.get("chunk_words", ingest_cfg.chunk_words),
            overlap_words=overrides.get("overlap_words", ingest_cfg.overlap_words),
            min_chunk_words=overrides.get("min_chunk_words", ingest_cfg.min_chunk_words),
            allowed_codepoints=ingest_cfg.allowed_codepoints,
        )
    chunks, report = ingest_corpus(Path(args.corpus), ingest_cfg)
    components = build_components(cfg)
    index = build_index(chunks, components.embedder)
    Path(cfg.index_path).parent.mkdir(parents=True, exist_ok=True)
    index.save(cfg.index_path)
    out = {**report.to_dict(), "index_chunks": len(index), "index_path": str(cfg.index_path)}
    print(json.dumps(out, sort_keys=True))
    return 0


def cmd_query(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    pipeline = open_pipeline(cfg)
    answer = pipeline.ask(args.q, args.strategy)
    print(json.dumps(_answer_dict(answer), sort_keys=True))
    return 0


def cmd_chat(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    pipeline = open_pipeline(cfg)
    history: list[tuple[str, str]] = []
    print("chat ready; empty line or /quit to exit", file=sys.stderr)
    while True:
        try:
            line = input("> ")
        except EOFError:
            break
        query = line.strip()
        if not query or query == "/quit":
            break
        context = pipeline.retrieve(query, args.strategy)
        prompt_input = query
        if history:
            turns = [f"User: {q}\nAssistant: {a}" for q, a in history[-4:]]
            prompt_input = "\n".join(turns) + f"\nUser: {query}"
        answer = pipeline.answer(prompt_input, context)
        history.append((query, answer.text))
        print(answer.text)
        if answer.cited_chunk_ids:
            print("sources: " + ", ".join(answer.cited_chunk_ids), file=sys.stderr)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    pipeline = open_pipeline(cfg)
    dataset = load_dataset(args.dataset)
    strategy = args.strategy or cfg.strategy.kind
    runtime = pipeline.eval_runtime(strategy, args.model)
    report = run_eval(
        dataset,
        runtime,
        cfg.metric,
        records_path=args.records,
        max_workers=args.workers,
    )
    payload = json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
    print(json.dumps({"strategy": report.strategy, "model": report.model, "aggregates": report.aggregates}, sort_keys=True))
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    pipeline = open_pipeline(cfg)
    dataset = load_dataset(args.dataset)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    models = (
        [m.strip() for m in args.models.split(",") if m.strip()]
        if args.models
        else [pipeline.components.generator.model_id]
    )
    for strategy in strategies:
        if strategy not in STRATEGY_KINDS:
            raise ConfigError(f"unknown strategy {strategy!r}, expected one of {STRATEGY_KINDS}")
    report = compare(strategies, models, dataset, pipeline.eval_runtime, cfg.metric)
    if args.out:
        Path(args.out).write_text(report.to_json(), encoding="utf-8")
    if args.csv:
        report.write_csv(args.csv)
    print(report.render_table(), end="")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    if args.host:
        cfg = replace(cfg, service=replace(cfg.service, host=args.host))
    if args.port:
        cfg = replace(cfg, service=replace(cfg.service, port=args.port))
    pipeline: Pipeline | None = None
    if Path(cfg.index_path).exists():
        pipeline = open_pipeline(cfg)
    serve(cfg, pipeline)
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--index", help="index file path (overrides config)")
    parser.add_argument(
        "--deterministic",
        action="store_true",
        help="force scripted components; no network (default when no config says otherwise)",
    )
    parser.add_argument("--remote", action="store_true", help="force remote providers")
    parser.add_argument("--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specrag",
        description="Retrieval-augmented question answering over a standards corpus.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="chunk, embed, and index a corpus directory")
    p_ingest.add_argument("--corpus", required=True, help="directory of .txt/.md documents")
    p_ingest.add_argument("--out", help="index output path")
    p_ingest.add_argument("--chunk-words", type=int, dest="chunk_words")
    p_ingest.add_argument("--overlap-words", type=int, dest="overlap_words")
    p_ingest.add_argument("--min-chunk-words", type=int, dest="min_chunk_words")
    _add_common(p_ingest)
    p_ingest.set_defaults(fn=cmd_ingest)

    p_query = sub.add_parser("query", help="answer one question and print JSON")
    p_query.add_argument("--q", required=True, help="the question")
    p_query.add_argument("--strategy", choices=STRATEGY_KINDS)
    _add_common(p_query)
    p_query.set_defaults(fn=cmd_query)

    p_chat = sub.add_parser("chat", help="interactive terminal chat")
    p_chat.add_argument("--strategy", choices=STRATEGY_KINDS)
    _add_common(p_chat)
    p_chat.set_defaults(fn=cmd_chat)

    p_eval = sub.add_parser("eval", help="run the metric suite over a dataset")
    p_eval.add_argument("--dataset", required=True, help="JSON-lines file of samples")
    p_eval.add_argument("--strategy", choices=STRATEGY_KINDS)
    p_eval.add_argument("--model", help="generation model override")
    p_eval.add_argument("--out", help="write the full report JSON here")
    p_eval.add_argument("--records", help="JSON-lines per-sample record file (resumable)")
    p_eval.add_argument("--workers", type=int, default=1)
    _add_common(p_eval)
    p_eval.set_defaults(fn=cmd_eval)

    p_compare = sub.add_parser("compare", help="strategy x model comparison table")
    p_compare.add_argument("--strategies", required=True, help="comma-separated strategy kinds")
    p_compare.add_argument("--models", help="comma-separated model ids")
    p_compare.add_argument("--dataset", required=True)
    p_compare.add_argument("--out", help="write comparison JSON here")
    p_compare.add_argument("--csv", help="write comparison CSV here")
    _add_common(p_compare)
    p_compare.set_defaults(fn=cmd_compare)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host")
    p_serve.add_argument("--port", type=int)
    _add_common(p_serve)
    p_serve.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(getattr(args, "verbose", False))
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # diagnostics without a traceback wall
        logger.exception("command failed")
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Offline strategy comparison experiment.

Builds a synthetic corpus, indexes it with the mock embedder, evaluates all
four retrieval strategies with the scripted generator, and prints the
comparison table. Everything runs in-process; no network, no API keys.

Usage:
    python3 scripts/strategy_comparison.py --workdir /tmp/exp
    python3 scripts/strategy_comparison.py --workdir /tmp/exp --docs 60 --csv out.csv
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

from make_synthetic_corpus import build_dataset, build_documents

from specrag.config import AppConfig, build_components, open_pipeline
from specrag.corpus import IngestConfig, ingest_corpus
from specrag.embedding import build_index
from specrag.evalharness import EvalSample, compare
from specrag.retrieval import STRATEGY_KINDS


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--workdir", type=Path, required=True)
    parser.add_argument("--docs", type=int, default=40)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--strategies", default=",".join(STRATEGY_KINDS))
    parser.add_argument("--out", type=Path, help="write comparison JSON here")
    parser.add_argument("--csv", type=Path, help="write comparison CSV here")
    args = parser.parse_args()

    corpus_dir = args.workdir / "corpus"
    corpus_dir.mkdir(parents=True, exist_ok=True)
    docs = build_documents(args.docs, args.seed)
    for name, body in sorted(docs.items()):
        (corpus_dir / f"{name}.txt").write_text(body + "\n", encoding="utf-8")

    cfg = AppConfig(
        index_path=args.workdir / "index.ssv",
        ingest=IngestConfig(chunk_words=60, overlap_words=10, min_chunk_words=3),
    )
    started = time.perf_counter()
    chunks, report = ingest_corpus(corpus_dir, cfg.ingest)
    components = build_components(cfg)
    build_index(chunks, components.embedder).save(cfg.index_path)
    pipeline = open_pipeline(cfg)
    print(f"indexed {report.chunks_kept} chunks from {report.docs} documents", file=sys.stderr)

    dataset = [EvalSample.from_dict(s) for s in build_dataset(docs)]
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    result = compare(strategies, ["context-echo"], dataset, pipeline.eval_runtime, cfg.metric)
    print(result.render_table())
    print(f"evaluated {len(dataset)} samples x {len(strategies)} strategies "
          f"in {time.perf_counter() - started:.2f}s", file=sys.stderr)

    if args.out:
        args.out.write_text(result.to_json(), encoding="utf-8")
        print(f"wrote {args.out}", file=sys.stderr)
    if args.csv:
        result.write_csv(args.csv)
        print(f"wrote {args.csv}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

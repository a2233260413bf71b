"""Generate a synthetic topic corpus plus a matching eval dataset.

Each document describes one fictional subsystem with its own vocabulary,
so retrieval quality is measurable without any licensed source material.

Usage:
    python3 scripts/make_synthetic_corpus.py --out-dir data/corpus --docs 40 \
        --dataset data/dataset.jsonl
"""

from __future__ import annotations

import argparse
import json
import random
from pathlib import Path

NOUNS = [
    "router", "scheduler", "planner", "monitor", "gateway", "encoder", "balancer",
    "limiter", "archiver", "prober", "mapper", "tracer", "shaper", "mixer",
    "sampler", "logger", "scanner", "courier", "broker", "indexer",
]
VERBS = [
    "coordinates", "compresses", "translates", "allocates", "aggregates",
    "replicates", "validates", "throttles", "partitions", "interleaves",
]
OBJECTS = [
    "beam reports", "fault counters", "timing frames", "license grants",
    "antenna tables", "carrier maps", "handover logs", "loss figures",
    "spectrum plans", "backhaul quotas",
]
DETAILS = [
    "once per frame", "at cell startup", "under operator policy",
    "after each audit", "within one slot", "across vendor boundaries",
    "during quiet hours", "on demand", "per tracking area", "in batches",
]


def build_documents(n_docs: int, seed: int) -> dict[str, str]:
    rng = random.Random(seed)
    docs = {}
    for i in range(n_docs):
        noun = NOUNS[i % len(NOUNS)]
        verb = rng.choice(VERBS)
        obj = rng.choice(OBJECTS)
        detail = rng.choice(DETAILS)
        sentences = [
            f"The {noun} service {verb} {obj} {detail}.",
            f"Configuration for the {noun} lives in profile p{i:03d} "
            f"and is revalidated {rng.choice(DETAILS)}.",
            f"Operators audit the {noun} through counter group g{rng.randrange(100, 999)}.",
        ]
        docs[f"{noun}_{i:03d}"] = " ".join(sentences)
    return docs


def build_dataset(docs: dict[str, str]) -> list[dict]:
    samples = []
    for name, body in sorted(docs.items()):
        first = body.split(". ")[0] + "."
        noun = name.rsplit("_", 1)[0]
        samples.append(
            {
                "question": f"what does the {noun} service do?",
                "ground_truth": first,
                "reference_context_ids": [f"{name}.txt::0"],
            }
        )
    return samples


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", type=Path, required=True, help="corpus directory to create")
    parser.add_argument("--docs", type=int, default=40)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--dataset", type=Path, help="also write a JSONL eval dataset here")
    args = parser.parse_args()

    docs = build_documents(args.docs, args.seed)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for name, body in sorted(docs.items()):
        (args.out_dir / f"{name}.txt").write_text(body + "\n", encoding="utf-8")
    print(f"wrote {len(docs)} documents to {args.out_dir}")

    if args.dataset:
        samples = build_dataset(docs)
        args.dataset.parent.mkdir(parents=True, exist_ok=True)
        with open(args.dataset, "w", encoding="utf-8") as fh:
            for sample in samples:
                fh.write(json.dumps(sample) + "\n")
        print(f"wrote {len(samples)} samples to {args.dataset}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

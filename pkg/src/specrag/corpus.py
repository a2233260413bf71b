"""Document loading, text cleaning, and overlapping word-window chunking."""

from __future__ import annotations

import logging
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

logger = logging.getLogger(__name__)

DEFAULT_FORMATS = frozenset({"txt", "md"})

# Printable ASCII plus whitespace; everything else is treated as noise.
DEFAULT_ALLOWED_CODEPOINTS = frozenset(string.printable)


class CorpusError(Exception):
    """Raised when a corpus root cannot be read at all."""


@dataclass(frozen=True)
class Document:
    doc_id: str
    source_path: str
    title: str
    body: str


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    text: str
    word_span: tuple[int, int]  # half-open [start_word, end_word)
    ordinal: int

    @property
    def word_count(self) -> int:
        return self.word_span[1] - self.word_span[0]

    def to_dict(self) -> dict:
        return {
            "chunk_id": self.chunk_id,
            "doc_id": self.doc_id,
            "text": self.text,
            "word_span": list(self.word_span),
            "ordinal": self.ordinal,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Chunk":
        return cls(
            chunk_id=data["chunk_id"],
            doc_id=data["doc_id"],
            text=data["text"],
            word_span=(int(data["word_span"][0]), int(data["word_span"][1])),
            ordinal=int(data["ordinal"]),
        )


@dataclass(frozen=True)
class IngestConfig:
    chunk_words: int = 500
    overlap_words: int = 100
    min_chunk_words: int = 50
    allowed_codepoints: frozenset[str] = DEFAULT_ALLOWED_CODEPOINTS

    def __post_init__(self) -> None:
        if self.chunk_words < 1:
            raise ValueError(f"chunk_words must be >= 1, got {self.chunk_words}")
        if not 0 <= self.overlap_words < self.chunk_words:
            raise ValueError(
                f"overlap_words must satisfy 0 <= overlap < chunk_words, "
                f"got overlap={self.overlap_words}, chunk={self.chunk_words}"
            )
        if self.min_chunk_words > self.chunk_words:
            raise ValueError(
                f"min_chunk_words ({self.min_chunk_words}) exceeds chunk_words ({self.chunk_words})"
            )


@dataclass
class IngestReport:
    docs: int = 0
    chunks_kept: int = 0
    chunks_discarded_short: int = 0
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "docs": self.docs,
            "chunks_kept": self.chunks_kept,
            "chunks_discarded_short": self.chunks_discarded_short,
            "warnings": list(self.warnings),
        }


def doc_id_for(relative_path: Path | str) -> str:
    """Stable document id derived from a corpus-relative path.

    Slashes are folded so ids are safe in URLs and chunk ids.
    """
    return Path(relative_path).as_posix().replace("/", "__")


def load_documents(
    root: Path | str,
    formats: Iterable[str] = DEFAULT_FORMATS,
    warnings: list[str] | None = None,
) -> list[Document]:
    """Load one Document per matching file under ``root``, in path order.

    Unreadable or non-UTF-8 files are skipped with a recorded warning; an
    unreadable root is fatal.
    """
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"corpus root is not a readable directory: {root}")
    wanted = {f.lower().lstrip(".") for f in formats}

    files = sorted(
        (p for p in root.rglob("*") if p.is_file() and p.suffix.lstrip(".").lower() in wanted),
        key=lambda p: p.relative_to(root).as_posix(),
    )
    docs: list[Document] = []
    for path in files:
        try:
            body = path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            message = f"skipped unreadable file {path}: {exc}"
            logger.warning(message)
            if warnings is not None:
                warnings.append(message)
            continue
        rel = path.relative_to(root)
        docs.append(
            Document(
                doc_id=doc_id_for(rel),
                source_path=str(path),
                title=path.stem,
                body=body,
            )
        )
    return docs


def clean_text(raw: str, cfg: IngestConfig | None = None) -> str:
    """Normalize raw text to single-space-separated words.

    Code points outside the allowlist become spaces, line breaks become
    spaces, whitespace runs collapse, and the ends are trimmed. Idempotent.
    """
    allowed = (cfg or IngestConfig()).allowed_codepoints
    masked = "".join(ch if ch in allowed else " " for ch in raw)
    return " ".join(masked.split())


def chunk_spans(total_words: int, cfg: IngestConfig) -> list[tuple[int, int]]:
    """Half-open word spans of the sliding window, before the short-chunk filter.

    Window starts advance by ``chunk_words - overlap_words``; generation stops
    once a window reaches the final word.
    """
    spans: list[tuple[int, int]] = []
    stride = cfg.chunk_words - cfg.overlap_words
    start = 0
    while start < total_words:
        end = min(start + cfg.chunk_words, total_words)
        spans.append((start, end))
        if end == total_words:
            break
        start += stride
    return spans


def chunk_text(text: str, cfg: IngestConfig, doc_id: str = "doc") -> list[Chunk]:
    """Split cleaned text into overlapping word-bounded chunks.

    Chunks shorter than ``min_chunk_words`` are discarded; ordinals are dense
    over the retained chunks.
    """
    words = text.split()
    chunks: list[Chunk] = []
    ordinal = 0
    for start, end in chunk_spans(len(words), cfg):
        if end - start < cfg.min_chunk_words:
            continue
        chunks.append(
            Chunk(
                chunk_id=f"{doc_id}::{ordinal}",
                doc_id=doc_id,
                text=" ".join(words[start:end]),
                word_span=(start, end),
                ordinal=ordinal,
            )
        )
        ordinal += 1
    return chunks


def _chunk_document(doc: Document, cfg: IngestConfig) -> tuple[list[Chunk], int]:
    cleaned = clean_text(doc.body, cfg)
    total_words = len(cleaned.split())
    kept = chunk_text(cleaned, cfg, doc_id=doc.doc_id)
    discarded = len(chunk_spans(total_words, cfg)) - len(kept)
    return kept, discarded


def ingest_corpus(
    root: Path | str,
    cfg: IngestConfig | None = None,
    formats: Iterable[str] = DEFAULT_FORMATS,
    max_workers: int = 1,
) -> tuple[list[Chunk], IngestReport]:
    """Load, clean, and chunk every document under ``root``.

    Documents may be processed concurrently; the merged chunk list is always
    sorted by (doc_id, ordinal) so output is deterministic.
    """
    cfg = cfg or IngestConfig()
    report = IngestReport()
    docs = load_documents(root, formats, warnings=report.warnings)
    report.docs = len(docs)

    if max_workers > 1 and len(docs) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(lambda d: _chunk_document(d, cfg), docs))
    else:
        results = [_chunk_document(d, cfg) for d in docs]

    chunks: list[Chunk] = []
    for kept, discarded in results:
        chunks.extend(kept)
        report.chunks_discarded_short += discarded
    chunks.sort(key=lambda c: (c.doc_id, c.ordinal))
    report.chunks_kept = len(chunks)
    if report.chunks_kept == 0 and report.chunks_discarded_short > 0:
        message = (
            f"all {report.chunks_discarded_short} chunks discarded as shorter "
            f"than min_chunk_words={cfg.min_chunk_words}; the index will be empty"
        )
        logger.warning(message)
        report.warnings.append(message)
    return chunks, report

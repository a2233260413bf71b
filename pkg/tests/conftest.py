"""Shared fixtures: tiny corpora, deterministic pipelines, offline guards."""

from __future__ import annotations

import socket
from pathlib import Path

import pytest

from specrag.config import AppConfig, Pipeline, build_components
from specrag.corpus import IngestConfig, ingest_corpus
from specrag.embedding import build_index

TOPIC_SENTENCES = {
    "alpha": "The alpha subsystem coordinates beam scheduling across radio units.",
    "bravo": "The bravo module stores calibration tables for antenna arrays.",
    "charlie": "The charlie gateway translates transport frames between vendors.",
    "delta": "The delta planner allocates spectrum licenses to operators.",
    "echo": "The echo monitor aggregates fault counters from cell sites.",
}


def write_topic_corpus(root: Path, topics: dict[str, str] | None = None) -> Path:
    """One document per topic; each document is exactly one retained chunk."""
    topics = topics or TOPIC_SENTENCES
    root.mkdir(parents=True, exist_ok=True)
    for name, sentence in topics.items():
        (root / f"{name}.txt").write_text(sentence + "\n", encoding="utf-8")
    return root


@pytest.fixture
def topic_corpus(tmp_path: Path) -> Path:
    return write_topic_corpus(tmp_path / "corpus")


@pytest.fixture
def det_cfg(tmp_path: Path) -> AppConfig:
    return AppConfig(
        index_path=tmp_path / "index.ssv",
        ingest=IngestConfig(chunk_words=50, overlap_words=10, min_chunk_words=3),
    )


@pytest.fixture
def pipeline(det_cfg: AppConfig, topic_corpus: Path) -> Pipeline:
    chunks, _ = ingest_corpus(topic_corpus, det_cfg.ingest)
    components = build_components(det_cfg)
    index = build_index(chunks, components.embedder)
    index.save(det_cfg.index_path)
    return Pipeline(cfg=det_cfg, components=components, index=index)


@pytest.fixture
def no_network(monkeypatch: pytest.MonkeyPatch):
    """Make any real socket connection fail loudly."""

    def blocked(*args, **kwargs):
        raise AssertionError("network access attempted in an offline test")

    monkeypatch.setattr(socket.socket, "connect", blocked)
    yield

"""Retrieval-augmented question answering over technical standards corpora."""

from .corpus import Chunk, Document, IngestConfig, IngestReport, ingest_corpus
from .embedding import MockEmbeddingProvider, VectorIndex, build_index
from .evalharness import (
    ComparisonReport,
    EvalSample,
    MetricConfig,
    MetricReport,
    compare,
    run_eval,
)
from .generation import GeneratedAnswer, PersonaConfig, answer_query, build_prompt
from .retrieval import RetrievedContext, StrategyConfig, retrieve
from .config import AppConfig, Pipeline, build_components, load_config, open_pipeline

__version__ = "0.1.0"

__all__ = [
    "AppConfig",
    "Chunk",
    "ComparisonReport",
    "Document",
    "EvalSample",
    "GeneratedAnswer",
    "IngestConfig",
    "IngestReport",
    "MetricConfig",
    "MetricReport",
    "MockEmbeddingProvider",
    "PersonaConfig",
    "Pipeline",
    "RetrievedContext",
    "StrategyConfig",
    "VectorIndex",
    "answer_query",
    "build_components",
    "build_index",
    "build_prompt",
    "compare",
    "ingest_corpus",
    "load_config",
    "open_pipeline",
    "retrieve",
    "run_eval",
    "__version__",
]

"""Application configuration and component wiring for both runtime modes.

Deterministic mode swaps every model call for an in-process scripted
component, so ingest, chat, and a full evaluation run need no network.
Remote mode talks to OpenAI-compatible endpoints named in the config file.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .corpus import IngestConfig
from .embedding import (
    EmbeddingProvider,
    MockEmbeddingProvider,
    RemoteEmbeddingProvider,
    VectorIndex,
)
from .evalharness import (
    AnswerEchoRelevanceHelper,
    Attributor,
    EvalRuntime,
    JudgeAttributor,
    LexicalAttributor,
    LLMRelevanceHelper,
    MetricConfig,
    RelevanceHelper,
)
from .generation import (
    FactChecker,
    GeneratedAnswer,
    JudgeFactChecker,
    LexicalFactChecker,
    PersonaConfig,
    answer_query,
)
from .llmclient import DecodingConfig, LLMClient, RemoteLLMClient
from .retrieval import (
    RemoteReranker,
    RerankerClient,
    RetrievedContext,
    StrategyConfig,
    TokenOverlapReranker,
    retrieve,
)
from .scripted import ContextEchoLLM, QueryEchoHelper

PROVIDER_ROLES = ("embedding", "generation", "helper", "reranker", "judge")


class ConfigError(Exception):
    """The config file or overrides are unusable."""


@dataclass(frozen=True)
class ProviderEndpoint:
    base_url: str
    model_id: str
    auth_env_var: str | None = None
    dimension: int | None = None  # embedding providers only

    def __post_init__(self):
        if not self.base_url:
            raise ConfigError("provider base_url must be non-empty")
        if not self.model_id:
            raise ConfigError("provider model_id must be non-empty")


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    request_timeout: float = 120.0


@dataclass(frozen=True)
class AppConfig:
    index_path: Path = Path("data/index.ssv")
    deterministic_mode: bool = True
    mock_dimension: int = 64
    mock_seed: int = 0
    ingest: IngestConfig = field(default_factory=IngestConfig)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    persona: PersonaConfig = field(default_factory=PersonaConfig)
    metric: MetricConfig = field(default_factory=MetricConfig)
    decoding: DecodingConfig = field(default_factory=DecodingConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)
    providers: dict[str, ProviderEndpoint] = field(default_factory=dict)

    def __post_init__(self):
        unknown = set(self.providers) - set(PROVIDER_ROLES)
        if unknown:
            raise ConfigError(f"unknown provider roles: {sorted(unknown)}")
        if not self.deterministic_mode:
            for role in ("embedding", "generation"):
                if role not in self.providers:
                    raise ConfigError(f"remote mode requires a {role} provider")
            if self.providers["embedding"].dimension is None:
                raise ConfigError("embedding provider needs an explicit dimension")
            for role, endpoint in self.providers.items():
                if endpoint.auth_env_var and endpoint.auth_env_var not in os.environ:
                    raise ConfigError(
                        f"{role} provider names auth_env_var {endpoint.auth_env_var!r} "
                        "but it is not set"
                    )


def _expand(value: Any) -> Any:
    """Environment-variable interpolation on every string leaf."""
    if isinstance(value, str):
        return os.path.expandvars(value)
    if isinstance(value, dict):
        return {k: _expand(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_expand(v) for v in value]
    return value


def _build(section: type, data: dict, label: str):
    try:
        return section(**data)
    except TypeError as exc:
        raise ConfigError(f"bad {label} section: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"bad {label} section: {exc}") from exc


def config_from_dict(raw: dict) -> AppConfig:
    data = _expand(dict(raw))
    kwargs: dict[str, Any] = {}
    if "index_path" in data:
        kwargs["index_path"] = Path(data["index_path"])
    for key in ("deterministic_mode", "mock_dimension", "mock_seed"):
        if key in data:
            kwargs[key] = data[key]
    sections = {
        "ingest": IngestConfig,
        "strategy": StrategyConfig,
        "persona": PersonaConfig,
        "metric": MetricConfig,
        "decoding": DecodingConfig,
        "service": ServiceConfig,
    }
    for name, cls in sections.items():
        if name in data:
            section = dict(data[name])
            # JSON arrays arrive as lists; frozen dataclasses want tuples.
            for key, value in section.items():
                if isinstance(value, list):
                    section[key] = tuple(value)
            kwargs[name] = _build(cls, section, name)
    providers = {}
    for role, spec in (data.get("providers") or {}).items():
        providers[role] = _build(ProviderEndpoint, dict(spec), f"providers.{role}")
    kwargs["providers"] = providers
    return AppConfig(**kwargs)


def load_config(path: Path | str | None = None, overrides: dict | None = None) -> AppConfig:
    """Read the JSON config file, apply flat overrides, and validate."""
    raw: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
    if overrides:
        raw = {**raw, **{k: v for k, v in overrides.items() if v is not None}}
    return config_from_dict(raw)


@dataclass
class Components:
    """The model-facing pieces, already selected for the configured mode."""

    embedder: EmbeddingProvider
    generator: LLMClient
    helper: LLMClient
    reranker: RerankerClient
    checker: FactChecker
    attributor: Attributor
    relevance_helper: RelevanceHelper
    judge: LLMClient | None = None


def build_components(cfg: AppConfig, model_override: str | None = None) -> Components:
    if cfg.deterministic_mode:
        generator = ContextEchoLLM(model_id=model_override or "context-echo")
        theta = cfg.metric.theta
        return Components(
            embedder=MockEmbeddingProvider(dimension=cfg.mock_dimension, seed=cfg.mock_seed),
            generator=generator,
            helper=QueryEchoHelper(),
            reranker=TokenOverlapReranker(),
            checker=LexicalFactChecker(theta=theta),
            attributor=LexicalAttributor(theta=theta),
            relevance_helper=AnswerEchoRelevanceHelper(),
            judge=None,
        )

    emb = cfg.providers["embedding"]
    embedder = RemoteEmbeddingProvider(
        base_url=emb.base_url,
        model_id=emb.model_id,
        dimension=int(emb.dimension or 0),
        auth_env_var=emb.auth_env_var,
    )
    gen = cfg.providers["generation"]
    # Generation retries live in generate_answer; keep the client single-shot.
    generator = RemoteLLMClient(
        base_url=gen.base_url,
        model_id=model_override or gen.model_id,
        auth_env_var=gen.auth_env_var,
        max_retries=0,
    )
    helper_spec = cfg.providers.get("helper", gen)
    helper = RemoteLLMClient(
        base_url=helper_spec.base_url,
        model_id=helper_spec.model_id,
        auth_env_var=helper_spec.auth_env_var,
    )
    if "reranker" in cfg.providers:
        rr = cfg.providers["reranker"]
        reranker: RerankerClient = RemoteReranker(base_url=rr.base_url, model_id=rr.model_id)
    else:
        reranker = TokenOverlapReranker()
    theta = cfg.metric.theta
    judge: LLMClient | None = None
    checker: FactChecker = LexicalFactChecker(theta=theta)
    attributor: Attributor = LexicalAttributor(theta=theta)
    if "judge" in cfg.providers:
        j = cfg.providers["judge"]
        judge = RemoteLLMClient(base_url=j.base_url, model_id=j.model_id, auth_env_var=j.auth_env_var)
        checker = JudgeFactChecker(judge, fallback=LexicalFactChecker(theta=theta))
        attributor = JudgeAttributor(judge, theta=theta)
    return Components(
        embedder=embedder,
        generator=generator,
        helper=helper,
        reranker=reranker,
        checker=checker,
        attributor=attributor,
        relevance_helper=LLMRelevanceHelper(helper),
        judge=judge,
    )


@dataclass
class Pipeline:
    """A configured engine: index plus components, the unit service and CLI use."""

    cfg: AppConfig
    components: Components
    index: VectorIndex

    def retrieve(self, query: str, strategy_kind: str | None = None) -> RetrievedContext:
        strategy = self.cfg.strategy
        if strategy_kind is not None and strategy_kind != strategy.kind:
            strategy = replace(strategy, kind=strategy_kind)
        return retrieve(
            query,
            self.index,
            self.components.embedder,
            self.components.helper,
            self.components.reranker,
            strategy,
        )

    def answer(self, query: str, context: RetrievedContext) -> GeneratedAnswer:
        return answer_query(
            query,
            context,
            self.components.generator,
            self.cfg.persona,
            self.components.checker,
            self.cfg.decoding,
        )

    def ask(self, query: str, strategy_kind: str | None = None) -> GeneratedAnswer:
        return self.answer(query, self.retrieve(query, strategy_kind))

    def eval_runtime(self, strategy_kind: str, model_name: str | None = None) -> EvalRuntime:
        components = self.components
        if model_name is not None and model_name != components.generator.model_id:
            components = build_components(self.cfg, model_override=model_name)
        pipeline = Pipeline(cfg=self.cfg, components=components, index=self.index)
        return EvalRuntime(
            strategy_name=strategy_kind,
            model_name=components.generator.model_id,
            retrieve=lambda q: pipeline.retrieve(q, strategy_kind),
            answer=pipeline.answer,
            embedder=components.embedder,
            attributor=components.attributor,
            relevance_helper=components.relevance_helper,
            judge=components.judge,
        )


def open_pipeline(cfg: AppConfig, model_override: str | None = None) -> Pipeline:
    """Load the persisted index and wire components; fails if nothing ingested."""
    if not Path(cfg.index_path).exists():
        raise ConfigError(
            f"index not found at {cfg.index_path}; run ingest first"
        )
    index = VectorIndex.load(cfg.index_path)
    return Pipeline(cfg=cfg, components=build_components(cfg, model_override), index=index)

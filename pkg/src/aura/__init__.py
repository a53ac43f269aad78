"""AURA: retrieval-augmented threat attribution with justifications.

The engine answers analyst queries about threat activity with a ranked
actor attribution, the nation each actor is linked to, and a natural
language justification grounded in retrieved context.
"""

from .agents import (
    AttributionResult,
    ContextSnippet,
    RelevanceDecision,
    StubSearcher,
    attribute,
    assess_relevance,
    build_web_query,
    rewrite_query,
    web_search,
)
from .config import EngineConfig, build_deps, load_config
from .corpus import (
    Chunk,
    Corpus,
    ThreatReport,
    chunk_corpus,
    chunk_document,
    ingest_report,
    normalize_text,
    record_body_text,
)
from .embedding import EmbeddingVector, HashedTrigramEmbedder, cosine_similarity, embed_text
from .errors import AuraError, StageError
from .evaluation import (
    ActorAliasTable,
    EvalRecord,
    JudgeScores,
    MetricReport,
    embedding_coherence,
    flesch_reading_ease,
    judge,
    pass_at_k,
    perplexity,
    run_eval,
    top_k_accuracy,
    type_token_ratio,
)
from .extraction import (
    Ioc,
    TechniqueId,
    ThreatEntities,
    extract_entities,
    refang,
    scan_iocs,
    scan_ttps,
)
from .provider import (
    AuditLog,
    ChatRequest,
    ChatResponse,
    Message,
    MockBackend,
    OpenAiCompatBackend,
    ProviderGateway,
    RetryPolicy,
    build_mock,
    complete,
    load_mock_script,
    make_request,
)
from .session import (
    SessionMemory,
    SessionStore,
    TurnDeps,
    TurnRecord,
    memory_context_view,
    new_session,
    run_turn,
    update_memory,
)
from .vector_store import IndexedChunk, SearchHit, VectorIndex, build_index

__version__ = "0.1.0"

__all__ = [
    "ActorAliasTable",
    "AttributionResult",
    "AuditLog",
    "AuraError",
    "ChatRequest",
    "ChatResponse",
    "Chunk",
    "ContextSnippet",
    "Corpus",
    "EmbeddingVector",
    "EngineConfig",
    "EvalRecord",
    "HashedTrigramEmbedder",
    "IndexedChunk",
    "Ioc",
    "JudgeScores",
    "Message",
    "MetricReport",
    "MockBackend",
    "OpenAiCompatBackend",
    "ProviderGateway",
    "RelevanceDecision",
    "RetryPolicy",
    "SearchHit",
    "SessionMemory",
    "SessionStore",
    "StageError",
    "StubSearcher",
    "TechniqueId",
    "ThreatEntities",
    "ThreatReport",
    "TurnDeps",
    "TurnRecord",
    "VectorIndex",
    "assess_relevance",
    "attribute",
    "build_deps",
    "build_index",
    "build_mock",
    "build_web_query",
    "chunk_corpus",
    "chunk_document",
    "complete",
    "cosine_similarity",
    "embed_text",
    "embedding_coherence",
    "extract_entities",
    "flesch_reading_ease",
    "ingest_report",
    "judge",
    "load_config",
    "load_mock_script",
    "make_request",
    "memory_context_view",
    "new_session",
    "normalize_text",
    "pass_at_k",
    "perplexity",
    "record_body_text",
    "refang",
    "rewrite_query",
    "run_eval",
    "run_turn",
    "scan_iocs",
    "scan_ttps",
    "top_k_accuracy",
    "type_token_ratio",
    "update_memory",
    "web_search",
]

"""Engine configuration: file loading, validation, dependency wiring.

Config files are YAML (JSON is a YAML subset). Secrets never appear in
the file, only the names of environment variables that hold them. The
``AURA_CONFIG`` environment variable supplies a default config path.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from . import provider
from .agents import DEFAULT_CONTEXT_BUDGET
from .corpus import DEFAULT_CHUNK_SIZE, DEFAULT_OVERLAP
from .embedding import DEFAULT_DIMS, HashedTrigramEmbedder, RemoteEmbedder
from .errors import InvalidConfig
from .session import DEFAULT_MEMORY_WINDOW, DEFAULT_RETRIEVAL_K, TurnDeps

CONFIG_ENV_VAR = "AURA_CONFIG"

_ENGINE_KEYS = {
    "chunk_size",
    "overlap",
    "dims",
    "embedder",
    "embedder_backend",
    "retrieval_k",
    "memory_window",
    "context_budget",
}
_BACKEND_KINDS = ("mock", "openai_compat")
_ROUTING_KEYS = set(provider.AGENT_ROLES) | {"default"}


@dataclass
class EngineConfig:
    chunk_size: int = DEFAULT_CHUNK_SIZE
    overlap: int = DEFAULT_OVERLAP
    dims: int = DEFAULT_DIMS
    embedder: str = "hashed_trigram"
    embedder_backend: Optional[str] = None
    retrieval_k: int = DEFAULT_RETRIEVAL_K
    memory_window: int = DEFAULT_MEMORY_WINDOW
    context_budget: int = DEFAULT_CONTEXT_BUDGET
    backends: dict = field(default_factory=dict)
    routing: dict = field(default_factory=dict)
    index_dir: str = "index"
    sessions_dir: str = "sessions"
    audit_log: Optional[str] = None
    base_dir: str = "."

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def validate(self) -> "EngineConfig":
        if self.chunk_size < 1:
            raise InvalidConfig("chunk_size must be >= 1")
        if self.overlap < 0 or self.overlap >= self.chunk_size:
            raise InvalidConfig(
                f"overlap must satisfy 0 <= overlap < chunk_size, "
                f"got overlap={self.overlap} chunk_size={self.chunk_size}"
            )
        if self.dims < 1:
            raise InvalidConfig("dims must be >= 1")
        if self.retrieval_k < 1:
            raise InvalidConfig("retrieval_k must be >= 1")
        if self.memory_window < 0:
            raise InvalidConfig("memory_window must be >= 0")
        if self.context_budget < 1:
            raise InvalidConfig("context_budget must be >= 1")
        if self.embedder not in ("hashed_trigram", "remote"):
            raise InvalidConfig(f"unknown embedder {self.embedder!r}")
        if self.embedder == "remote" and self.embedder_backend not in self.backends:
            raise InvalidConfig("remote embedder needs embedder_backend naming a backend")
        for name, spec in self.backends.items():
            if not isinstance(spec, dict):
                raise InvalidConfig(f"backend {name!r} must be a mapping")
            kind = spec.get("kind")
            if kind not in _BACKEND_KINDS:
                raise InvalidConfig(f"backend {name!r} has unknown kind {kind!r}")
            if kind == "mock" and "script" not in spec and "entries" not in spec:
                raise InvalidConfig(f"mock backend {name!r} needs 'script' or 'entries'")
            if kind == "openai_compat":
                for key in ("model", "base_url"):
                    if not spec.get(key):
                        raise InvalidConfig(f"backend {name!r} needs {key!r}")
        for role, target in self.routing.items():
            if role not in _ROUTING_KEYS:
                raise InvalidConfig(f"routing key {role!r} is not an agent role")
            if target not in self.backends:
                raise InvalidConfig(f"routing {role!r} -> unknown backend {target!r}")
        return self


def load_config(path: Optional[str] = None) -> EngineConfig:
    """Load config from a path, the AURA_CONFIG env var, or built-in defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
    if path is None:
        return EngineConfig().validate()
    file_path = Path(path)
    if not file_path.is_file():
        raise InvalidConfig(f"config file not found: {path}")
    try:
        data = yaml.safe_load(file_path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise InvalidConfig(f"config is not valid YAML/JSON: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise InvalidConfig("config root must be a mapping")

    engine = data.get("engine") or {}
    if not isinstance(engine, dict):
        raise InvalidConfig("'engine' section must be a mapping")
    unknown = set(engine) - _ENGINE_KEYS
    if unknown:
        raise InvalidConfig(f"unknown engine keys: {', '.join(sorted(unknown))}")
    paths = data.get("paths") or {}
    if not isinstance(paths, dict):
        raise InvalidConfig("'paths' section must be a mapping")

    defaults = EngineConfig()
    config = EngineConfig(
        chunk_size=engine.get("chunk_size", defaults.chunk_size),
        overlap=engine.get("overlap", defaults.overlap),
        dims=engine.get("dims", defaults.dims),
        embedder=engine.get("embedder", defaults.embedder),
        embedder_backend=engine.get("embedder_backend"),
        retrieval_k=engine.get("retrieval_k", defaults.retrieval_k),
        memory_window=engine.get("memory_window", defaults.memory_window),
        context_budget=engine.get("context_budget", defaults.context_budget),
        backends=data.get("backends") or {},
        routing=data.get("routing") or {},
        index_dir=paths.get("index_dir", defaults.index_dir),
        sessions_dir=paths.get("sessions_dir", defaults.sessions_dir),
        audit_log=paths.get("audit_log"),
        base_dir=str(file_path.resolve().parent),
    )
    return config.validate()


def build_backends(config: EngineConfig) -> dict:
    built = {}
    for name, spec in config.backends.items():
        kind = spec.get("kind")
        if kind == "mock":
            if "script" in spec:
                script = provider.load_mock_script(config.resolve(spec["script"]))
            else:
                script = {}
                for entry in spec.get("entries", ()):
                    key = (entry["agent_role"], entry.get("match_key", ""))
                    script.setdefault(key, []).extend(entry["responses"])
            built[name] = provider.MockBackend(script)
        elif kind == "openai_compat":
            api_key_env = spec.get("api_key_env", "")
            api_key = os.environ.get(api_key_env, "") if api_key_env else ""
            if api_key_env and not api_key:
                raise InvalidConfig(
                    f"backend {name!r}: environment variable {api_key_env!r} is not set"
                )
            built[name] = provider.OpenAiCompatBackend(
                name=name,
                model=spec["model"],
                base_url=spec["base_url"],
                api_key=api_key,
                timeout=spec.get("timeout", 60),
            )
    return built


def build_gateway(config: EngineConfig, backends: Optional[dict] = None):
    backends = backends if backends is not None else build_backends(config)
    if not backends:
        raise InvalidConfig("no backends configured; add a 'backends' section")
    routing = dict(config.routing)
    if "default" not in routing and len(backends) == 1:
        routing["default"] = next(iter(backends))
    audit_path = config.resolve(config.audit_log) if config.audit_log else None
    return provider.ProviderGateway(
        backends=backends,
        routing=routing,
        audit=provider.AuditLog(audit_path),
        retry=provider.RetryPolicy(),
    )


def build_embedder(config: EngineConfig, backends: Optional[dict] = None):
    if config.embedder == "hashed_trigram":
        return HashedTrigramEmbedder(dims=config.dims)
    backend = (backends or {}).get(config.embedder_backend)
    if backend is None:
        raise InvalidConfig(
            f"remote embedder backend {config.embedder_backend!r} is not built"
        )
    return RemoteEmbedder(backend, dims=config.dims)


def build_deps(config: EngineConfig, index, gateway=None, embedder=None, searcher=None) -> TurnDeps:
    """Assemble everything run_turn needs from a validated config."""
    backends = None
    if gateway is None or (embedder is None and config.embedder == "remote"):
        backends = build_backends(config)
    if gateway is None:
        gateway = build_gateway(config, backends)
    if embedder is None:
        embedder = build_embedder(config, backends)
    return TurnDeps(
        index=index,
        embedder=embedder,
        gateway=gateway,
        searcher=searcher,
        retrieval_k=config.retrieval_k,
        memory_window=config.memory_window,
        context_budget=config.context_budget,
    )

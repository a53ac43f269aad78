"""HTTP facade over the engine: sessions, turns, ingestion, evaluation.

Single-node service. Turns are sequential per session (second concurrent
turn gets 409), index writes hold a try-lock (busy writer gets 409), and
eval jobs run on a bounded worker pool. Every error is an ApiError
{code, message, stage?} whose HTTP status is derived 1:1 from the code.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

from fastapi import Depends, FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .config import EngineConfig, build_deps, load_config
from .corpus import chunk_document, ingest_report, record_body_text
from .errors import AuraError, InvalidConfig, StageError
from .evaluation import run_eval
from .extraction import ThreatEntities
from .session import SessionStore, new_session, run_turn
from .vector_store import VectorIndex, build_index

API_TOKEN_ENV_VAR = "AURA_API_TOKEN"

_UNSET = object()


class NotFound(AuraError):
    """Resource does not exist."""

    code = "not_found"


class TurnInProgress(AuraError):
    """A turn is already running on this session."""

    code = "turn_in_progress"


class IndexBusy(AuraError):
    """Another writer holds the index lock."""

    code = "index_busy"


class Unauthorized(AuraError):
    """Missing or invalid bearer token."""

    code = "unauthorized"


_STATUS_BY_CODE = {
    "invalid_config": 422,
    "decode_error": 422,
    "empty_document": 422,
    "empty_text": 422,
    "empty_context": 422,
    "empty_test_set": 422,
    "insufficient_generations": 422,
    "unknown_actor": 422,
    "invalid_logprob": 422,
    "too_few_sentences": 422,
    "empty_sequence": 422,
    "out_of_range_score": 422,
    "zero_vector": 422,
    "duplicate_id": 409,
    "empty_index": 409,
    "turn_in_progress": 409,
    "index_busy": 409,
    "not_found": 404,
    "unauthorized": 401,
    "provider_error": 502,
    "auth_error": 502,
    "rate_limited": 502,
    "timeout": 502,
    "malformed_model_output": 502,
    "script_exhausted": 502,
    "unmatched_request": 502,
    "search_provider_error": 502,
    "search_disabled": 502,
}


def _api_error(exc: AuraError):
    """(status, body) for one error; StageError resolves through its cause."""
    stage = None
    if isinstance(exc, StageError):
        stage = exc.stage
        inner = exc.cause if isinstance(exc.cause, AuraError) else exc
    else:
        inner = exc
    status = _STATUS_BY_CODE.get(inner.code, 500)
    error = {"code": inner.code, "message": str(exc)}
    if stage is not None:
        error["stage"] = stage
    if inner.details:
        error["details"] = {k: v for k, v in inner.details.items() if k != "stage"}
    return status, {"error": error}


class TurnBody(BaseModel):
    query: Optional[str] = None
    record: Optional[dict] = None


class IngestBody(BaseModel):
    documents: list
    chunk_size: Optional[int] = None
    overlap: Optional[int] = None


class EvalBody(BaseModel):
    test_set: Optional[list] = None
    test_set_ref: Optional[str] = None
    n_generations: int = 3
    pass_rank: int = 1
    pass_k: Optional[int] = None


class ServiceState:
    def __init__(self, config, deps, store, token, persist_index):
        self.config = config
        self.deps = deps
        self.store = store
        self.token = token
        self.persist_index = persist_index
        self.sessions = {}
        self.turn_locks = {}
        self.registry_lock = threading.Lock()
        self.ingest_lock = threading.Lock()
        self.executor = ThreadPoolExecutor(max_workers=2)
        self.jobs = {}


def _validate_document(doc, index: int) -> None:
    if not isinstance(doc, dict):
        raise InvalidConfig(f"document {index} must be a JSON object")
    if ("text" in doc) == ("record" in doc):
        raise InvalidConfig(
            f"document {index} needs exactly one of 'text' or 'record'",
            fields=["text", "record"],
        )
    if "text" in doc and not isinstance(doc["text"], str):
        raise InvalidConfig(f"document {index}: 'text' must be a string", fields=["text"])
    if "record" in doc and not isinstance(doc["record"], dict):
        raise InvalidConfig(f"document {index}: 'record' must be an object", fields=["record"])


def create_app(
    config: Optional[EngineConfig] = None,
    deps=None,
    store: Optional[SessionStore] = None,
    token=_UNSET,
    static_dir: Optional[str] = None,
) -> FastAPI:
    """Build the service. When deps are supplied the caller owns persistence."""
    if config is None:
        config = load_config()
    own_engine = deps is None
    if deps is None:
        index_path = config.resolve(config.index_dir)
        if (index_path / "manifest.json").is_file():
            index = VectorIndex.restore(index_path)
        else:
            index = VectorIndex(dims=config.dims, embedder_name=config.embedder)
        deps = build_deps(config, index)
        if store is None:
            store = SessionStore(config.resolve(config.sessions_dir))
    if token is _UNSET:
        token = os.environ.get(API_TOKEN_ENV_VAR)

    state = ServiceState(config, deps, store, token, persist_index=own_engine)
    app = FastAPI(title="AURA attribution service", version="0.1.0")
    app.state.engine = state

    def auth(request: Request):
        if not state.token:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {state.token}":
            raise Unauthorized("missing or invalid bearer token")

    @app.exception_handler(AuraError)
    async def on_aura_error(request: Request, exc: AuraError):
        status, body = _api_error(exc)
        return JSONResponse(status_code=status, content=body)

    @app.post("/api/sessions", status_code=201)
    async def create_session(request: Request, _=Depends(auth)):
        raw = await request.body()
        if raw:
            try:
                json.loads(raw)
            except ValueError:
                return JSONResponse(
                    status_code=400,
                    content={"error": {"code": "invalid_request", "message": "body must be JSON"}},
                )
        memory = new_session()
        with state.registry_lock:
            state.sessions[memory.session_id] = memory
            state.turn_locks[memory.session_id] = threading.Lock()
        return {"session_id": memory.session_id}

    @app.post("/api/sessions/{session_id}/turns")
    def post_turn(session_id: str, body: TurnBody, _=Depends(auth)):
        with state.registry_lock:
            memory = state.sessions.get(session_id)
            if memory is None:
                raise NotFound(f"unknown session {session_id!r}")
            lock = state.turn_locks.setdefault(session_id, threading.Lock())
        if not lock.acquire(blocking=False):
            raise TurnInProgress(f"session {session_id!r} already has a turn running")
        try:
            entities = None
            query = body.query
            if body.record is not None:
                entities = ThreatEntities.from_record(body.record)
                if query is None:
                    query = record_body_text(body.record)
            if not query or not query.strip():
                raise InvalidConfig("turn needs a non-empty 'query' or a 'record'")
            result, new_memory = run_turn(memory, query, state.deps, entities=entities)
            with state.registry_lock:
                state.sessions[session_id] = new_memory
            turn = new_memory.turns[-1]
            if state.store is not None:
                state.store.append_turn(session_id, turn)
            return {
                "session_id": session_id,
                "turn_index": turn.turn_index,
                "rewritten": turn.rewritten,
                "result": result.to_payload(),
                "stage_trace": [event.to_payload() for event in turn.stage_trace],
            }
        finally:
            lock.release()

    @app.get("/api/sessions/{session_id}/history")
    def get_history(session_id: str, _=Depends(auth)):
        with state.registry_lock:
            memory = state.sessions.get(session_id)
        if memory is None:
            raise NotFound(f"unknown session {session_id!r}")
        return {
            "session_id": session_id,
            "created_at": memory.created_at,
            "turns": [turn.to_payload() for turn in memory.turns],
        }

    @app.post("/api/ingest")
    def post_ingest(body: IngestBody, _=Depends(auth)):
        if not state.ingest_lock.acquire(blocking=False):
            raise IndexBusy("another ingest is in progress")
        try:
            chunk_size = body.chunk_size or state.config.chunk_size
            overlap = body.overlap if body.overlap is not None else state.config.overlap
            if overlap >= chunk_size:
                raise InvalidConfig(
                    f"overlap must be < chunk_size, got {overlap} >= {chunk_size}"
                )
            reports = []
            for i, doc in enumerate(body.documents):
                _validate_document(doc, i)
                metadata = {
                    key: doc[key] for key in ("id", "title", "source") if key in doc
                }
                if "text" in doc:
                    reports.append(
                        ingest_report(doc["text"].encode("utf-8"), "plain_text", metadata)
                    )
                else:
                    reports.append(
                        ingest_report(
                            json.dumps(doc["record"]).encode("utf-8"),
                            "structured_record",
                            metadata,
                        )
                    )
            index = state.deps.index
            known = index.report_ids()
            new_reports = [r for r in reports if r.id not in known]
            chunks = []
            for report in new_reports:
                chunks.extend(chunk_document(report, chunk_size, overlap))
            build_index(chunks, state.deps.embedder, index=index)
            if state.persist_index:
                index.snapshot(state.config.resolve(state.config.index_dir))
            return {
                "report_ids": [r.id for r in new_reports],
                "skipped": [r.id for r in reports if r.id in known],
                "chunks_indexed": len(chunks),
            }
        finally:
            state.ingest_lock.release()

    @app.post("/api/eval", status_code=202)
    def post_eval(body: EvalBody, _=Depends(auth)):
        if body.test_set is not None:
            records = body.test_set
        elif body.test_set_ref:
            ref = state.config.resolve(body.test_set_ref)
            if not Path(ref).is_file():
                raise InvalidConfig(f"test_set_ref not found: {body.test_set_ref}")
            records = json.loads(Path(ref).read_text(encoding="utf-8"))
        else:
            raise InvalidConfig("eval needs 'test_set' or 'test_set_ref'")
        job_id = uuid.uuid4().hex
        future = state.executor.submit(
            run_eval,
            records,
            state.deps,
            n_generations=body.n_generations,
            pass_rank=body.pass_rank,
            pass_k=body.pass_k,
        )
        state.jobs[job_id] = future
        return {"job_id": job_id, "status": "pending"}

    @app.get("/api/eval/{job_id}")
    def get_eval(job_id: str, _=Depends(auth)):
        future = state.jobs.get(job_id)
        if future is None:
            raise NotFound(f"unknown eval job {job_id!r}")
        if not future.done():
            return {"job_id": job_id, "status": "pending"}
        exc = future.exception()
        if exc is not None:
            if isinstance(exc, AuraError):
                _, body = _api_error(exc)
                return {"job_id": job_id, "status": "error", **body}
            return {
                "job_id": job_id,
                "status": "error",
                "error": {"code": "internal_error", "message": str(exc)},
            }
        return {"job_id": job_id, "status": "done", "report": future.result().to_payload()}

    if static_dir and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=static_dir, html=True), name="ui")

    return app

"""Turn orchestration and conversational memory.

One analyst turn runs the pipeline extract -> rewrite -> retrieve ->
decide -> search -> attribute -> memorize. A turn is atomic: any stage
failure aborts it with the stage name attached and leaves memory
untouched. Memory is an immutable value; updates return a new one.
"""

from __future__ import annotations

import json
import time
import uuid
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional

from . import agents
from .agents import DEFAULT_CONTEXT_BUDGET, AttributionResult
from .embedding import embed_text
from .errors import EmptyText, StageError
from .extraction import ThreatEntities, extract_entities

STAGES = ("extract", "rewrite", "retrieve", "decide", "search", "attribute", "memorize")

DEFAULT_RETRIEVAL_K = 8
DEFAULT_MEMORY_WINDOW = 5

# Memory summaries quote this many leading justification tokens.
MEMORY_HEAD_TOKENS = 25


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass(frozen=True)
class StageEvent:
    stage: str
    duration: float
    outcome: str

    def to_payload(self) -> dict:
        return {"stage": self.stage, "duration": self.duration, "outcome": self.outcome}


@dataclass(frozen=True)
class TurnRecord:
    turn_index: int
    query: str
    rewritten: str
    entities: ThreatEntities
    result: AttributionResult
    stage_trace: tuple = ()
    timestamp: str = ""

    def to_payload(self) -> dict:
        return {
            "turn_index": self.turn_index,
            "query": self.query,
            "rewritten": self.rewritten,
            "entities": self.entities.to_record(),
            "result": self.result.to_payload(),
            "stage_trace": [event.to_payload() for event in self.stage_trace],
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "TurnRecord":
        result = payload["result"]
        return cls(
            turn_index=payload["turn_index"],
            query=payload["query"],
            rewritten=payload["rewritten"],
            entities=ThreatEntities.from_record(payload.get("entities", {})),
            result=AttributionResult(
                primary_actor=result["primary_actor"],
                nation=result["nation"],
                justification=result["justification"],
                secondary_actor=result.get("secondary_actor"),
                nation_secondary=result.get("nation_secondary"),
                context_provenance=tuple(result.get("context_provenance", ())),
                low_confidence=result.get("low_confidence", False),
            ),
            stage_trace=tuple(
                StageEvent(e["stage"], e["duration"], e["outcome"])
                for e in payload.get("stage_trace", ())
            ),
            timestamp=payload.get("timestamp", ""),
        )


@dataclass(frozen=True)
class SessionMemory:
    session_id: str
    turns: tuple = ()
    created_at: str = ""

    def context_view(self, budget: int = DEFAULT_CONTEXT_BUDGET) -> str:
        return memory_context_view(self, budget)


def new_session(session_id: Optional[str] = None, created_at: Optional[str] = None) -> SessionMemory:
    return SessionMemory(
        session_id=session_id or uuid.uuid4().hex,
        turns=(),
        created_at=created_at or _utc_now(),
    )


def update_memory(
    memory: SessionMemory,
    rewritten: str,
    entities: ThreatEntities,
    result: AttributionResult,
    query: Optional[str] = None,
    stage_trace: tuple = (),
    timestamp: Optional[str] = None,
) -> SessionMemory:
    """Append one TurnRecord; prior turns are shared unchanged (f_mem)."""
    record = TurnRecord(
        turn_index=len(memory.turns),
        query=query if query is not None else rewritten,
        rewritten=rewritten,
        entities=entities,
        result=result,
        stage_trace=tuple(stage_trace),
        timestamp=timestamp or _utc_now(),
    )
    return replace(memory, turns=memory.turns + (record,))


def _justification_head(text: str, limit: int = MEMORY_HEAD_TOKENS) -> str:
    return " ".join(text.split()[:limit])


def memory_context_view(
    memory: SessionMemory,
    budget: int = DEFAULT_CONTEXT_BUDGET,
    window: int = DEFAULT_MEMORY_WINDOW,
) -> str:
    """Render most-recent-first turn summaries within a token budget.

    Whole-record granularity: a summary that does not fit entirely is
    dropped, so a budget below one summary yields empty text.
    """
    turns = memory.turns[-window:] if window else memory.turns
    lines = []
    used = 0
    for turn in reversed(turns):
        line = (
            f"[turn {turn.turn_index}] Q: {turn.query} -> "
            f"{turn.result.primary_actor} ({turn.result.nation}). "
            f"{_justification_head(turn.result.justification)}"
        )
        cost = len(line.split())
        if used + cost > budget:
            break
        lines.append(line)
        used += cost
    return "\n".join(lines)


@dataclass
class TurnDeps:
    """Everything one turn needs: index, model routing, optional searcher."""

    index: object
    embedder: object
    gateway: object
    searcher: object = None
    retrieval_k: int = DEFAULT_RETRIEVAL_K
    memory_window: int = DEFAULT_MEMORY_WINDOW
    context_budget: int = DEFAULT_CONTEXT_BUDGET
    clock: Callable = time.perf_counter
    now: Callable = _utc_now


def run_turn(memory: SessionMemory, query: str, deps: TurnDeps, entities=None):
    """Run one full analyst turn; returns (AttributionResult, grown memory)."""
    if not query or not query.strip():
        raise EmptyText("query must be non-empty")
    gateway = deps.gateway
    audit = getattr(gateway, "audit", None)
    retry = getattr(gateway, "retry", None)
    trace = []

    def guard(stage: str, fn):
        t0 = deps.clock()
        try:
            value = fn()
        except Exception as exc:
            raise StageError(stage, exc) from exc
        return value, deps.clock() - t0

    if entities is None:
        ents, dt = guard(
            "extract",
            lambda: extract_entities(
                query, gateway.backend_for("preprocessor"), audit=audit, retry=retry
            ),
        )
    else:
        ents, dt = guard(
            "extract",
            lambda: entities
            if isinstance(entities, ThreatEntities)
            else ThreatEntities.from_record(entities),
        )
    trace.append(StageEvent("extract", dt, "ok"))

    memory_view = memory_context_view(
        memory, budget=deps.context_budget, window=deps.memory_window
    )
    rewritten, dt = guard(
        "rewrite",
        lambda: agents.rewrite_query(
            query, ents, memory_view, gateway.backend_for("rewriter"), audit=audit, retry=retry
        ),
    )
    trace.append(StageEvent("rewrite", dt, "ok"))

    hits, dt = guard(
        "retrieve",
        lambda: deps.index.search_top_k(
            embed_text(rewritten, deps.embedder), k=deps.retrieval_k
        ),
    )
    trace.append(StageEvent("retrieve", dt, "ok"))

    decision, dt = guard(
        "decide",
        lambda: agents.assess_relevance(
            rewritten, hits, gateway.backend_for("decision"), audit=audit, retry=retry
        ),
    )
    trace.append(StageEvent("decide", dt, "relevant" if decision.relevant else "irrelevant"))

    context = list(hits)
    low_confidence = False
    if decision.relevant:
        trace.append(StageEvent("search", 0.0, "skipped (context relevant)"))
    elif deps.searcher is None:
        # Eval mode: no fallback available, attribute from internal context.
        low_confidence = True
        trace.append(StageEvent("search", 0.0, "skipped (disabled)"))
    else:
        snippets, dt = guard(
            "search",
            lambda: agents.web_search(
                agents.build_web_query(rewritten, ents), deps.searcher
            ),
        )
        trace.append(StageEvent("search", dt, "ok"))
        context = list(snippets) + context

    result, dt = guard(
        "attribute",
        lambda: agents.attribute(
            rewritten,
            ents,
            context,
            gateway.backend_for("attributor"),
            audit=audit,
            retry=retry,
            low_confidence=low_confidence,
            budget=deps.context_budget,
        ),
    )
    trace.append(StageEvent("attribute", dt, "ok (low confidence)" if result.low_confidence else "ok"))

    t0 = deps.clock()
    trace.append(StageEvent("memorize", deps.clock() - t0, "ok"))
    new_memory = update_memory(
        memory,
        rewritten,
        ents,
        result,
        query=query,
        stage_trace=tuple(trace),
        timestamp=deps.now(),
    )
    return result, new_memory


class SessionStore:
    """JSON-lines event logs, one file per session, one object per turn."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, session_id: str) -> Path:
        return self.root / f"{session_id}.jsonl"

    def append_turn(self, session_id: str, record: TurnRecord) -> None:
        with open(self.path(session_id), "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record.to_payload(), sort_keys=True) + "\n")

    def load(self, session_id: str) -> SessionMemory:
        path = self.path(session_id)
        turns = []
        if path.exists():
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        turns.append(TurnRecord.from_payload(json.loads(line)))
        created = turns[0].timestamp if turns else ""
        return SessionMemory(session_id=session_id, turns=tuple(turns), created_at=created)

    def list_sessions(self) -> list:
        return sorted(p.stem for p in self.root.glob("*.jsonl"))

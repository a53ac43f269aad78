"""The four reasoning agents: rewrite, relevance gate, web fallback, attribution.

Each agent is a stateless prompt-templated call through the provider;
all state arrives via parameters. Actor names in results are kept
verbatim for auditability, alias normalization happens in evaluation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

from . import provider
from .errors import (
    EmptyContext,
    MalformedModelOutput,
    SearchDisabled,
    SearchProviderError,
)
from .prompts import load_template, render

# Context is concatenated best-first until this many whitespace tokens.
DEFAULT_CONTEXT_BUDGET = 6000

# Web query template keeps at most this many entity terms.
WEB_QUERY_TERM_CAP = 8


@dataclass(frozen=True)
class RelevanceDecision:
    relevant: bool
    rationale: str = ""

    def __post_init__(self):
        if not self.relevant and not self.rationale.strip():
            raise ValueError("an irrelevant verdict requires a rationale")


@dataclass(frozen=True)
class ContextSnippet:
    """One web search result."""

    snippet_id: str
    text: str
    source_url: str


@dataclass(frozen=True)
class AttributionResult:
    primary_actor: str
    nation: str
    justification: str
    secondary_actor: Optional[str] = None
    nation_secondary: Optional[str] = None
    context_provenance: tuple = ()
    low_confidence: bool = False

    def __post_init__(self):
        if not self.primary_actor.strip():
            raise ValueError("primary_actor must be non-empty")
        if not self.justification.strip():
            raise ValueError("justification must be non-empty")
        if (
            self.secondary_actor is not None
            and self.secondary_actor.casefold() == self.primary_actor.casefold()
        ):
            raise ValueError("secondary_actor must differ from primary_actor")
        if not self.context_provenance and not self.low_confidence:
            raise ValueError("provenance may be empty only in low-confidence mode")
        object.__setattr__(self, "context_provenance", tuple(self.context_provenance))

    def ranked_actors(self) -> list:
        ranked = [self.primary_actor]
        if self.secondary_actor:
            ranked.append(self.secondary_actor)
        return ranked

    def ranked_nations(self) -> list:
        ranked = [self.nation]
        if self.nation_secondary:
            ranked.append(self.nation_secondary)
        return ranked

    def to_payload(self) -> dict:
        return {
            "primary_actor": self.primary_actor,
            "secondary_actor": self.secondary_actor,
            "nation": self.nation,
            "nation_secondary": self.nation_secondary,
            "justification": self.justification,
            "low_confidence": self.low_confidence,
            "context_provenance": list(self.context_provenance),
        }


def count_tokens(text: str) -> int:
    return len(text.split())


def provenance_id(item) -> str:
    """Stable id for a context item: report_id#seq for chunks, web:id for snippets."""
    if isinstance(item, ContextSnippet):
        return f"web:{item.snippet_id}"
    ref = item.chunk_ref
    return f"{ref[0]}#{ref[1]}"


def select_context(items: Iterable, budget: int = DEFAULT_CONTEXT_BUDGET) -> list:
    """Take items best-first until the whitespace-token budget is reached.

    The first item is always taken so a non-empty context never selects
    down to nothing.
    """
    selected = []
    used = 0
    for item in items:
        cost = count_tokens(item.text)
        if selected and used + cost > budget:
            break
        selected.append(item)
        used += cost
    return selected


def _render_context(items) -> str:
    blocks = []
    for item in items:
        if isinstance(item, ContextSnippet):
            blocks.append(f"[{provenance_id(item)}] ({item.source_url}) {item.text}")
        else:
            blocks.append(f"[{provenance_id(item)}] {item.text}")
    return "\n\n".join(blocks) if blocks else "(none)"


def _render_entities(entities) -> str:
    if entities is None or entities.is_empty():
        return "(none)"
    return json.dumps(entities.to_record(), indent=2, sort_keys=True)


def _memory_text(memory) -> str:
    if memory is None:
        return "(none)"
    if isinstance(memory, str):
        return memory or "(none)"
    view = getattr(memory, "context_view", None)
    if callable(view):
        rendered = view()
        return rendered or "(none)"
    return str(memory) or "(none)"


def rewrite_query(query: str, entities, memory, backend, audit=None, retry=None) -> str:
    """Rewrite the analyst query into a self-contained one (f_rew)."""
    if not query or not query.strip():
        raise EmptyContext("cannot rewrite an empty query")
    prompt = render(
        load_template("rewriter"),
        memory=_memory_text(memory),
        entities=_render_entities(entities),
        query=query,
    )
    request = provider.make_request("rewriter", prompt)
    response = provider.complete(backend, request, audit=audit, retry=retry)
    rewritten = response.text.strip()
    if not rewritten:
        raise MalformedModelOutput("rewriter returned an empty query")
    return rewritten


def assess_relevance(query: str, hits, backend, audit=None, retry=None) -> RelevanceDecision:
    """Decide whether retrieved context is relevant to the attribution objective."""
    hits = list(hits)
    if not hits:
        raise EmptyContext("relevance decision requires retrieved context")
    prompt = render(
        load_template("decision"),
        query=query,
        context=_render_context(select_context(hits)),
    )
    request = provider.make_request("decision", prompt, response_format="json_object")
    response = provider.complete(backend, request, audit=audit, retry=retry)
    payload = provider.parse_json_response(response)
    if not isinstance(payload, dict) or not isinstance(payload.get("relevant"), bool):
        raise MalformedModelOutput("decision must return {'relevant': bool, ...}")
    rationale = payload.get("rationale", "")
    if not isinstance(rationale, str):
        raise MalformedModelOutput("field 'rationale' must be a string")
    try:
        return RelevanceDecision(relevant=payload["relevant"], rationale=rationale)
    except ValueError as exc:
        raise MalformedModelOutput(str(exc)) from exc


def build_web_query(rewritten: str, entities) -> str:
    """Deterministic search query: entity terms appended to the rewrite."""
    if entities is None:
        return rewritten
    terms = []
    terms.extend(sorted(t.canonical() for t in entities.ttps))
    terms.extend(sorted(entities.malware_tools))
    terms.extend(sorted(entities.targets))
    terms = terms[:WEB_QUERY_TERM_CAP]
    if not terms:
        return rewritten
    return rewritten + " " + " ".join(terms)


def web_search(query: str, searcher) -> list:
    """Run the fallback web search. A null searcher means search is disabled."""
    if searcher is None:
        raise SearchDisabled("web search is disabled")
    try:
        results = searcher.search(query)
    except SearchDisabled:
        raise
    except SearchProviderError:
        raise
    except Exception as exc:
        raise SearchProviderError(
            f"web search failed: {exc}", retryable=True, cause=type(exc).__name__
        ) from exc
    snippets = []
    for i, item in enumerate(results):
        if isinstance(item, ContextSnippet):
            snippets.append(item)
        else:
            snippets.append(
                ContextSnippet(
                    snippet_id=str(item.get("snippet_id", i)),
                    text=str(item.get("text", "")),
                    source_url=str(item.get("source_url", "")),
                )
            )
    return snippets


class StubSearcher:
    """Canned-result searcher for tests and offline demos."""

    def __init__(self, snippets):
        self.snippets = list(snippets)
        self.queries = []

    def search(self, query: str):
        self.queries.append(query)
        return list(self.snippets)


def attribute(
    rewritten: str,
    entities,
    context,
    backend,
    audit=None,
    retry=None,
    low_confidence: bool = False,
    budget: int = DEFAULT_CONTEXT_BUDGET,
) -> AttributionResult:
    """Produce the attribution and its justification (f_attr, f_just)."""
    context = list(context)
    if not context and not low_confidence:
        raise EmptyContext("attribution requires context unless low-confidence mode is set")
    selected = select_context(context, budget)
    prompt = render(
        load_template("attributor"),
        query=rewritten,
        entities=_render_entities(entities),
        context=_render_context(selected),
    )
    request = provider.make_request("attributor", prompt, response_format="json_object")
    response = provider.complete(backend, request, audit=audit, retry=retry)
    payload = provider.parse_json_response(response)
    if not isinstance(payload, dict):
        raise MalformedModelOutput("attributor must return a JSON object")
    for key in ("primary_actor", "nation", "justification"):
        if not isinstance(payload.get(key), str):
            raise MalformedModelOutput(f"field {key!r} must be a string")
    secondary = payload.get("secondary_actor") or None
    nation_secondary = payload.get("nation_secondary") or None
    if secondary is not None and not isinstance(secondary, str):
        raise MalformedModelOutput("field 'secondary_actor' must be a string")
    if nation_secondary is not None and not isinstance(nation_secondary, str):
        raise MalformedModelOutput("field 'nation_secondary' must be a string")
    try:
        return AttributionResult(
            primary_actor=payload["primary_actor"],
            nation=payload["nation"],
            justification=payload["justification"],
            secondary_actor=secondary,
            nation_secondary=nation_secondary,
            context_provenance=tuple(provenance_id(item) for item in selected),
            low_confidence=low_confidence,
        )
    except ValueError as exc:
        raise MalformedModelOutput(str(exc)) from exc

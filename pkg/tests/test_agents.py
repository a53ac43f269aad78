"""Agent step tests: rewrite, relevance gate, web fallback, attribution."""

import json

import pytest

from aura.agents import (
    AttributionResult,
    ContextSnippet,
    RelevanceDecision,
    StubSearcher,
    assess_relevance,
    attribute,
    build_web_query,
    count_tokens,
    provenance_id,
    rewrite_query,
    select_context,
    web_search,
)
from aura.errors import (
    EmptyContext,
    MalformedModelOutput,
    SearchDisabled,
    SearchProviderError,
)
from aura.extraction import ThreatEntities
from aura.provider import ChatResponse, MockBackend
from aura.vector_store import SearchHit

from conftest import attributor_payload, decision_payload


def hit(report_id, seq, text, score=0.9):
    return SearchHit(chunk_ref=(report_id, seq), score=score, text=text)


class RecordingBackend:
    """Returns one canned response and keeps every request."""

    name = "recording"

    def __init__(self, text):
        self.text = text
        self.requests = []

    def invoke(self, request):
        self.requests.append(request)
        return ChatResponse(text=self.text)


class TestSelectContext:
    def test_first_item_always_taken(self):
        items = [hit("r", 0, "one two three four five")]
        assert select_context(items, budget=1) == items

    def test_budget_cuts_tail(self):
        items = [hit("r", i, "alpha beta gamma") for i in range(4)]
        selected = select_context(items, budget=7)
        assert selected == items[:2]

    def test_all_fit(self):
        items = [hit("r", i, "a b") for i in range(3)]
        assert select_context(items, budget=100) == items

    def test_counts_whitespace_tokens(self):
        assert count_tokens("  a   b\nc ") == 3


class TestProvenance:
    def test_chunk_and_snippet_ids(self):
        assert provenance_id(hit("r-apt36", 2, "x")) == "r-apt36#2"
        snippet = ContextSnippet(snippet_id="s1", text="t", source_url="http://u")
        assert provenance_id(snippet) == "web:s1"


class TestRewrite:
    def test_entities_and_memory_injected_into_prompt(self):
        backend = RecordingBackend(
            "Which actor ran the Crimson RAT phishing campaign against India?")
        entities = ThreatEntities(malware_tools={"Crimson RAT"}, targets={"India"})
        rewritten = rewrite_query("who is behind this?", entities,
                                  "[turn 0] Q: earlier -> APT36 (Pakistan).", backend)
        assert "Crimson RAT" in rewritten
        prompt = backend.requests[0].final_user_message
        assert "Crimson RAT" in prompt
        assert "[turn 0] Q: earlier -> APT36 (Pakistan)." in prompt
        assert "who is behind this?" in prompt

    def test_no_memory_renders_none(self):
        backend = RecordingBackend("rewritten")
        rewrite_query("q", None, None, backend)
        assert "(none)" in backend.requests[0].final_user_message

    def test_temperature_zero(self):
        backend = RecordingBackend("rewritten")
        rewrite_query("q", None, None, backend)
        assert backend.requests[0].temperature == 0.0

    def test_empty_query(self):
        with pytest.raises(EmptyContext):
            rewrite_query("  ", None, None, RecordingBackend("x"))

    def test_empty_rewrite_rejected(self):
        with pytest.raises(MalformedModelOutput):
            rewrite_query("q", None, None, RecordingBackend("   "))


class TestRelevance:
    def test_relevant_verdict(self):
        backend = MockBackend({("decision", ""): [decision_payload(True)]})
        decision = assess_relevance("q", [hit("r", 0, "ctx")], backend)
        assert decision == RelevanceDecision(relevant=True, rationale="scripted")

    def test_irrelevant_verdict_keeps_rationale(self):
        backend = MockBackend({("decision", ""): [
            decision_payload(False, "context is about ransomware, query about espionage"),
        ]})
        decision = assess_relevance("q", [hit("r", 0, "ctx")], backend)
        assert not decision.relevant
        assert "ransomware" in decision.rationale

    def test_irrelevant_without_rationale_rejected(self):
        backend = MockBackend({("decision", ""): [json.dumps({"relevant": False})]})
        with pytest.raises(MalformedModelOutput):
            assess_relevance("q", [hit("r", 0, "ctx")], backend)

    def test_non_bool_relevant_rejected(self):
        backend = MockBackend({("decision", ""): [json.dumps({"relevant": "yes"})]})
        with pytest.raises(MalformedModelOutput):
            assess_relevance("q", [hit("r", 0, "ctx")], backend)

    def test_no_hits(self):
        with pytest.raises(EmptyContext):
            assess_relevance("q", [], MockBackend({("decision", ""): ["{}"]}))

    def test_context_rendered_with_provenance(self):
        backend = RecordingBackend(decision_payload(True))
        assess_relevance("q", [hit("r-apt36", 0, "chunk body")], backend)
        assert "[r-apt36#0] chunk body" in backend.requests[0].final_user_message


class TestWebQuery:
    def test_terms_sorted_and_appended(self):
        entities = ThreatEntities.from_record({
            "ttps": ["T1566", "T1059.001"],
            "malware_tools": ["Poseidon", "Crimson RAT"],
            "targets": ["India"],
        })
        query = build_web_query("base query", entities)
        assert query == "base query T1059.001 T1566 Crimson RAT Poseidon India"

    def test_cap_at_eight_terms(self):
        entities = ThreatEntities(malware_tools={f"tool{i:02d}" for i in range(12)})
        query = build_web_query("base", entities)
        assert len(query.split()) == 1 + 8

    def test_identity_without_entities(self):
        assert build_web_query("base", None) == "base"
        assert build_web_query("base", ThreatEntities()) == "base"


class TestWebSearch:
    def test_disabled(self):
        with pytest.raises(SearchDisabled):
            web_search("q", None)

    def test_stub_returns_snippets_and_records_query(self):
        snippet = ContextSnippet("s1", "Pawn Storm infra reuse", "https://osint")
        searcher = StubSearcher([snippet])
        results = web_search("pawn storm", searcher)
        assert results == [snippet]
        assert searcher.queries == ["pawn storm"]

    def test_dict_results_coerced(self):
        class DictSearcher:
            def search(self, query):
                return [{"snippet_id": "a", "text": "t", "source_url": "u"}, {}]

        results = web_search("q", DictSearcher())
        assert results[0] == ContextSnippet("a", "t", "u")
        assert results[1].snippet_id == "1"

    def test_foreign_errors_wrapped(self):
        class BrokenSearcher:
            def search(self, query):
                raise ConnectionResetError("socket dropped")

        with pytest.raises(SearchProviderError) as info:
            web_search("q", BrokenSearcher())
        assert info.value.details["retryable"] is True
        assert info.value.details["cause"] == "ConnectionResetError"


class TestAttributionResult:
    def test_ranked_lists(self):
        result = AttributionResult(
            primary_actor="APT29", nation="Russia", justification="j",
            secondary_actor="APT28", nation_secondary="Russia",
            context_provenance=("r#0",))
        assert result.ranked_actors() == ["APT29", "APT28"]
        assert result.ranked_nations() == ["Russia", "Russia"]

    def test_no_secondary(self):
        result = AttributionResult(
            primary_actor="APT36", nation="Pakistan", justification="j",
            context_provenance=("r#0",))
        assert result.ranked_actors() == ["APT36"]

    def test_primary_equals_secondary_rejected(self):
        with pytest.raises(ValueError):
            AttributionResult(
                primary_actor="APT36", nation="Pakistan", justification="j",
                secondary_actor="apt36", context_provenance=("r#0",))

    def test_provenance_required_unless_low_confidence(self):
        with pytest.raises(ValueError):
            AttributionResult(primary_actor="APT36", nation="Pakistan",
                              justification="j")
        result = AttributionResult(primary_actor="APT36", nation="Pakistan",
                                   justification="j", low_confidence=True)
        assert result.context_provenance == ()


class TestAttribute:
    CONTEXT = [hit("r-apt28", 0, "Pawn Storm spear phishing against NATO"),
               hit("r-apt36", 0, "Transparent Tribe against India")]

    def test_happy_path_with_provenance(self):
        backend = MockBackend({("attributor", ""): [
            attributor_payload("APT29", "Russia", "Overlap with prior espionage.",
                               secondary="APT28", nation_secondary="Russia"),
        ]})
        result = attribute("q", None, self.CONTEXT, backend)
        assert result.primary_actor == "APT29"
        assert result.secondary_actor == "APT28"
        assert result.nation == "Russia"
        assert result.context_provenance == ("r-apt28#0", "r-apt36#0")
        assert not result.low_confidence

    def test_temperature_sampled(self):
        backend = RecordingBackend(attributor_payload("APT36", "Pakistan", "j"))
        attribute("q", None, self.CONTEXT, backend)
        assert backend.requests[0].temperature == 0.7

    def test_budget_limits_provenance(self):
        wide = [hit("r", i, "tok " * 50, score=1.0 - i / 10) for i in range(5)]
        backend = MockBackend({("attributor", ""): [
            attributor_payload("APT36", "Pakistan", "j"),
        ]})
        result = attribute("q", None, wide, backend, budget=120)
        assert result.context_provenance == ("r#0", "r#1")

    def test_snippets_render_with_source(self):
        backend = RecordingBackend(attributor_payload("APT36", "Pakistan", "j"))
        snippet = ContextSnippet("s9", "osint text", "https://example.org/p")
        attribute("q", None, [snippet], backend)
        prompt = backend.requests[0].final_user_message
        assert "[web:s9] (https://example.org/p) osint text" in prompt

    def test_empty_context_needs_low_confidence(self):
        backend = MockBackend({("attributor", ""): [
            attributor_payload("APT36", "Pakistan", "j"),
            attributor_payload("APT36", "Pakistan", "j"),
        ]})
        with pytest.raises(EmptyContext):
            attribute("q", None, [], backend)
        result = attribute("q", None, [], backend, low_confidence=True)
        assert result.low_confidence
        assert result.context_provenance == ()

    def test_missing_justification_rejected(self):
        backend = MockBackend({("attributor", ""): [
            json.dumps({"primary_actor": "APT36", "nation": "Pakistan"}),
        ]})
        with pytest.raises(MalformedModelOutput):
            attribute("q", None, self.CONTEXT, backend)

    def test_primary_equals_secondary_is_malformed(self):
        backend = MockBackend({("attributor", ""): [
            attributor_payload("APT36", "Pakistan", "j", secondary="APT36"),
        ]})
        with pytest.raises(MalformedModelOutput):
            attribute("q", None, self.CONTEXT, backend)

    def test_empty_secondary_dropped(self):
        backend = MockBackend({("attributor", ""): [
            attributor_payload("APT36", "Pakistan", "j", secondary=""),
        ]})
        result = attribute("q", None, self.CONTEXT, backend)
        assert result.secondary_actor is None
        assert result.nation_secondary is None

"""Turn orchestration tests: stage trace, memory growth, atomic failure."""

import json

import pytest

from aura.agents import AttributionResult, StubSearcher
from aura.errors import EmptyText, StageError, UnmatchedRequest
from aura.extraction import ThreatEntities
from aura.session import (
    STAGES,
    SessionMemory,
    SessionStore,
    StageEvent,
    TurnRecord,
    memory_context_view,
    new_session,
    run_turn,
    update_memory,
)

from conftest import (
    YOUTH_LAPTOP_RECORD,
    attributor_payload,
    decision_payload,
    happy_script,
    make_deps,
)

QUERY = "Who is behind the Crimson RAT phishing campaign against India?"


def make_result(actor="APT36", nation="Pakistan", justification="j " * 30):
    return AttributionResult(
        primary_actor=actor, nation=nation, justification=justification.strip(),
        context_provenance=("r#0",))


class TestRunTurnHappyPath:
    def test_full_trace_and_memory_growth(self):
        deps, backend = make_deps(happy_script())
        memory = new_session("s1")
        result, grown = run_turn(memory, QUERY, deps,
                                 entities=YOUTH_LAPTOP_RECORD)
        assert result.primary_actor == "APT36"
        assert result.secondary_actor == "APT37"
        assert result.nation == "Pakistan"
        assert not result.low_confidence
        assert len(memory.turns) == 0
        assert len(grown.turns) == 1

        trace = grown.turns[0].stage_trace
        assert tuple(e.stage for e in trace) == STAGES
        assert [e.outcome for e in trace] == [
            "ok", "ok", "ok", "relevant", "skipped (context relevant)", "ok", "ok"]

    def test_retrieval_provenance_recorded(self):
        deps, _ = make_deps(happy_script(), retrieval_k=2)
        result, _ = run_turn(new_session("s"), QUERY, deps,
                             entities=YOUTH_LAPTOP_RECORD)
        assert len(result.context_provenance) == 2
        assert all("#" in ref for ref in result.context_provenance)

    def test_turn_record_contents(self):
        deps, _ = make_deps(happy_script())
        _, grown = run_turn(new_session("s"), QUERY, deps,
                            entities=YOUTH_LAPTOP_RECORD)
        record = grown.turns[0]
        assert record.turn_index == 0
        assert record.query == QUERY
        assert record.rewritten == happy_script()[("rewriter", "")][0]
        assert record.entities.malware_tools == {"Crimson RAT", "ElizaRAT", "Poseidon"}
        assert record.timestamp

    def test_entities_object_passes_through(self):
        deps, _ = make_deps(happy_script())
        entities = ThreatEntities.from_record(YOUTH_LAPTOP_RECORD)
        result, grown = run_turn(new_session("s"), QUERY, deps, entities=entities)
        assert grown.turns[0].entities is entities
        assert result.primary_actor == "APT36"

    def test_empty_query_rejected(self):
        deps, _ = make_deps(happy_script())
        with pytest.raises(EmptyText):
            run_turn(new_session("s"), "   ", deps)


class TestSearchBranch:
    def test_irrelevant_with_searcher_runs_search(self):
        script = {
            ("rewriter", ""): [QUERY],
            ("decision", ""): [decision_payload(False, "retrieved chunks unrelated")],
            ("attributor", ""): [attributor_payload("APT28", "Russia", "web evidence")],
        }
        searcher = StubSearcher([
            {"snippet_id": "osint-1", "text": "Pawn Storm phishing wave", "source_url": "https://x"},
        ])
        deps, _ = make_deps(script, searcher=searcher)
        result, grown = run_turn(new_session("s"), QUERY, deps,
                                 entities=YOUTH_LAPTOP_RECORD)
        outcomes = {e.stage: e.outcome for e in grown.turns[0].stage_trace}
        assert outcomes["decide"] == "irrelevant"
        assert outcomes["search"] == "ok"
        assert outcomes["attribute"] == "ok"
        assert not result.low_confidence
        # web snippets are prepended, so they lead the provenance list
        assert result.context_provenance[0] == "web:osint-1"
        assert len(searcher.queries) == 1

    def test_irrelevant_without_searcher_low_confidence(self):
        script = {
            ("rewriter", ""): [QUERY],
            ("decision", ""): [decision_payload(False, "unrelated")],
            ("attributor", ""): [attributor_payload("APT28", "Russia", "weak signal")],
        }
        deps, _ = make_deps(script, searcher=None)
        result, grown = run_turn(new_session("s"), QUERY, deps,
                                 entities=YOUTH_LAPTOP_RECORD)
        outcomes = {e.stage: e.outcome for e in grown.turns[0].stage_trace}
        assert outcomes["search"] == "skipped (disabled)"
        assert outcomes["attribute"] == "ok (low confidence)"
        assert result.low_confidence

    def test_relevant_skips_search_even_with_searcher(self):
        searcher = StubSearcher([])
        deps, _ = make_deps(happy_script(), searcher=searcher)
        _, grown = run_turn(new_session("s"), QUERY, deps,
                            entities=YOUTH_LAPTOP_RECORD)
        outcomes = {e.stage: e.outcome for e in grown.turns[0].stage_trace}
        assert outcomes["search"] == "skipped (context relevant)"
        assert searcher.queries == []


class TestAtomicity:
    def test_attribute_failure_leaves_memory_unchanged(self):
        script = {
            ("rewriter", ""): [QUERY],
            ("decision", ""): [decision_payload(True)],
            # no attributor key: the stage fails with UnmatchedRequest
        }
        deps, _ = make_deps(script)
        memory = new_session("s")
        with pytest.raises(StageError) as info:
            run_turn(memory, QUERY, deps, entities=YOUTH_LAPTOP_RECORD)
        assert info.value.stage == "attribute"
        assert isinstance(info.value.cause, UnmatchedRequest)
        assert len(memory.turns) == 0

    def test_rewrite_failure_names_stage(self):
        deps, _ = make_deps({("decision", ""): [decision_payload(True)]})
        with pytest.raises(StageError) as info:
            run_turn(new_session("s"), QUERY, deps, entities=YOUTH_LAPTOP_RECORD)
        assert info.value.stage == "rewrite"

    def test_extract_failure_on_bad_record(self):
        deps, _ = make_deps(happy_script())
        with pytest.raises(StageError) as info:
            run_turn(new_session("s"), QUERY, deps, entities="not a record")
        assert info.value.stage == "extract"

    def test_mid_session_failure_preserves_prior_turns(self):
        deps, _ = make_deps(happy_script())
        _, grown = run_turn(new_session("s"), QUERY, deps,
                            entities=YOUTH_LAPTOP_RECORD)
        failing_deps, _ = make_deps({("rewriter", ""): [QUERY]})
        with pytest.raises(StageError):
            run_turn(grown, QUERY, failing_deps, entities=YOUTH_LAPTOP_RECORD)
        assert len(grown.turns) == 1


class TestMemory:
    def test_update_memory_appends_immutably(self):
        base = new_session("s", created_at="t0")
        one = update_memory(base, "rw. 1", ThreatEntities(), make_result(), query="q1")
        two = update_memory(one, "rw 2", ThreatEntities(), make_result("APT28", "Russia"))
        assert len(base.turns) == 0
        assert len(one.turns) == 1
        assert [t.turn_index for t in two.turns] == [0, 1]
        assert two.turns[0] is one.turns[0]
        assert two.turns[1].query == "rw 2"

    def test_context_view_most_recent_first(self):
        memory = new_session("s")
        for i in range(3):
            memory = update_memory(
                memory, f"query {i}", ThreatEntities(),
                make_result(f"Actor{i}", "Nowhere", f"reason {i} " * 3))
        view = memory_context_view(memory)
        lines = view.splitlines()
        assert lines[0].startswith("[turn 2] Q: query 2 -> Actor2 (Nowhere).")
        assert lines[2].startswith("[turn 0] Q: query 0 -> Actor0 (Nowhere).")

    def test_window_limits_turns(self):
        memory = new_session("s")
        for i in range(7):
            memory = update_memory(memory, f"q{i}", ThreatEntities(), make_result())
        view = memory_context_view(memory, window=5)
        assert len(view.splitlines()) == 5
        assert "[turn 6]" in view
        assert "[turn 1]" not in view

    def test_justification_head_capped_at_25_tokens(self):
        long_just = " ".join(f"w{i}" for i in range(60))
        memory = update_memory(new_session("s"), "q", ThreatEntities(),
                               make_result(justification=long_just))
        view = memory_context_view(memory)
        assert "w24" in view
        assert "w25" not in view

    def test_whole_record_budget(self):
        memory = new_session("s")
        for i in range(3):
            memory = update_memory(memory, f"q{i}", ThreatEntities(),
                                   make_result(justification="alpha beta gamma"))
        one_line = len(memory_context_view(memory).splitlines()[0].split())
        view = memory_context_view(memory, budget=one_line * 2 + 1)
        assert len(view.splitlines()) == 2
        tiny = memory_context_view(memory, budget=1)
        assert tiny == ""

    def test_context_view_flows_into_next_rewrite(self):
        deps, backend = make_deps(happy_script(n=2))
        memory = new_session("s")
        _, memory = run_turn(memory, QUERY, deps, entities=YOUTH_LAPTOP_RECORD)
        run_turn(memory, "what else did they target?", deps,
                 entities=YOUTH_LAPTOP_RECORD)
        assert "APT36 (Pakistan)" in memory.context_view()


class TestSerialization:
    def test_turn_record_round_trip(self):
        deps, _ = make_deps(happy_script())
        _, grown = run_turn(new_session("s"), QUERY, deps,
                            entities=YOUTH_LAPTOP_RECORD)
        record = grown.turns[0]
        clone = TurnRecord.from_payload(json.loads(json.dumps(record.to_payload())))
        assert clone.query == record.query
        assert clone.result.to_payload() == record.result.to_payload()
        assert clone.entities.to_record() == record.entities.to_record()
        assert [e.to_payload() for e in clone.stage_trace] == \
               [e.to_payload() for e in record.stage_trace]

    def test_session_store_round_trip(self, tmp_path):
        store = SessionStore(tmp_path / "sessions")
        deps, _ = make_deps(happy_script(n=2))
        memory = new_session("analyst-1")
        for query in (QUERY, "second question about the same campaign"):
            _, memory = run_turn(memory, query, deps, entities=YOUTH_LAPTOP_RECORD)
        for turn in memory.turns:
            store.append_turn("analyst-1", turn)
        loaded = store.load("analyst-1")
        assert len(loaded.turns) == 2
        assert loaded.turns[1].query == "second question about the same campaign"
        assert store.list_sessions() == ["analyst-1"]

    def test_load_missing_session_is_empty(self, tmp_path):
        store = SessionStore(tmp_path / "sessions")
        loaded = store.load("ghost")
        assert isinstance(loaded, SessionMemory)
        assert loaded.turns == ()


class TestDeterminism:
    def test_identical_runs_identical_results(self):
        payloads = []
        for _ in range(3):
            deps, _ = make_deps(happy_script())
            result, _ = run_turn(new_session("fixed-id", created_at="t"),
                                 QUERY, deps, entities=YOUTH_LAPTOP_RECORD)
            payloads.append(json.dumps(result.to_payload(), sort_keys=True))
        assert len(set(payloads)) == 1

    def test_stage_event_payload_shape(self):
        event = StageEvent("retrieve", 0.002, "ok")
        assert event.to_payload() == {
            "stage": "retrieve", "duration": 0.002, "outcome": "ok"}

"""Evaluation suite: attribution accuracy, justification quality, judge scoring.

Accuracy is scored at two granularities (group, nation) with alias
normalization so a prediction of "Transparent Tribe" matches a truth of
"APT36". top-k reads ranks within the first generation; pass@k reads
rank-1 across generations. The four automated justification metrics use
a pinned sentence splitter and syllable heuristic so golden values stay
stable across environments.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass, replace
from importlib import resources
from statistics import fmean
from typing import Optional, Sequence

from . import provider
from .corpus import content_id, record_body_text
from .embedding import cosine_similarity, embed_text
from .errors import (
    AuraError,
    EmptySequence,
    EmptyTestSet,
    EmptyText,
    InsufficientGenerations,
    InvalidConfig,
    InvalidLogprob,
    MalformedModelOutput,
    OutOfRangeScore,
    TooFewSentences,
    UnknownActor,
)
from .extraction import ThreatEntities
from .prompts import load_template, render
from .session import new_session, run_turn

JUDGE_DIMENSIONS = ("fluency", "clarity", "coherence", "informativeness")

# Words that end with '.' without ending a sentence.
_ABBREVIATIONS = {
    "e.g", "i.e", "etc", "vs", "cf", "al", "approx", "fig", "no",
    "mr", "mrs", "ms", "dr", "prof", "st", "jr", "sr",
}

_VOWEL_GROUPS = re.compile(r"[aeiouy]+")
_TERMINATORS = ".!?"


# --- text measurement ---------------------------------------------------------

def split_sentences(text: str) -> list:
    """Split on ., ! or ? followed by whitespace or end, with an abbreviation guard."""
    sentences = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        if text[i] not in _TERMINATORS:
            i += 1
            continue
        j = i + 1
        while j < n and text[j] in _TERMINATORS:
            j += 1
        if j < n and not text[j].isspace():
            i = j
            continue
        if text[i:j] == ".":
            head = text[start:i].split()
            last = head[-1].rstrip(".").casefold() if head else ""
            if last in _ABBREVIATIONS:
                i = j
                continue
        sentence = text[start:j].strip()
        if sentence:
            sentences.append(sentence)
        start = j
        i = j
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def syllable_count(word: str) -> int:
    """Vowel-group heuristic with the silent-e rule, minimum one per alphabetic word."""
    letters = "".join(ch for ch in word.casefold() if ch.isalpha())
    if not letters:
        return 0
    groups = len(_VOWEL_GROUPS.findall(letters))
    if letters.endswith("e") and groups > 1:
        groups -= 1
    return max(groups, 1)


def flesch_reading_ease(text: str) -> float:
    words = text.split()
    sentences = split_sentences(text)
    if not words or not sentences:
        raise EmptyText("flesch needs at least one word and one sentence")
    syllables = sum(syllable_count(w) for w in words)
    return (
        206.835
        - 1.015 * (len(words) / len(sentences))
        - 84.6 * (syllables / len(words))
    )


def type_token_ratio(text: str) -> float:
    tokens = text.split()
    if not tokens:
        raise EmptyText("type-token ratio needs at least one token")
    return len({t.casefold() for t in tokens}) / len(tokens)


def embedding_coherence(text: str, embedder, all_pairs: bool = False) -> float:
    """Mean cosine over consecutive sentence pairs (all pairs behind the flag)."""
    sentences = split_sentences(text)
    if len(sentences) < 2:
        raise TooFewSentences("embedding coherence needs at least two sentences")
    vectors = [embed_text(s, embedder) for s in sentences]
    if all_pairs:
        pairs = [
            (vectors[i], vectors[j])
            for i in range(len(vectors))
            for j in range(i + 1, len(vectors))
        ]
    else:
        pairs = list(zip(vectors, vectors[1:]))
    return fmean(cosine_similarity(a, b) for a, b in pairs)


def perplexity(logprobs: Sequence[float]) -> float:
    values = list(logprobs)
    if not values:
        raise EmptySequence("perplexity needs at least one logprob")
    for v in values:
        if not math.isfinite(v) or v > 0:
            raise InvalidLogprob(f"logprob {v!r} must be finite and <= 0")
    return math.exp(-fmean(values))


# --- LLM-as-judge ---------------------------------------------------------------

def _coerce_score(key: str, value) -> int:
    if isinstance(value, bool):
        raise OutOfRangeScore(f"{key} must be an integer 1-10, got {value!r}")
    if isinstance(value, int):
        score = value
    elif isinstance(value, float) and value.is_integer():
        score = int(value)
    else:
        raise OutOfRangeScore(f"{key} must be an integer 1-10, got {value!r}")
    if not 1 <= score <= 10:
        raise OutOfRangeScore(f"{key}={score} outside the 1-10 range")
    return score


@dataclass(frozen=True)
class JudgeScores:
    fluency: int
    clarity: int
    coherence: int
    informativeness: int

    def __post_init__(self):
        for key in JUDGE_DIMENSIONS:
            _coerce_score(key, getattr(self, key))

    def as_dict(self) -> dict:
        return {key: getattr(self, key) for key in JUDGE_DIMENSIONS}


def judge(justification: str, backend, audit=None, retry=None) -> JudgeScores:
    """Score one justification with the verbatim evaluator prompt."""
    if not justification or not justification.strip():
        raise EmptyText("judge needs a non-empty justification")
    prompt = render(load_template("judge"), paragraph=justification)
    request = provider.make_request("judge", prompt, response_format="json_object")
    response = provider.complete(backend, request, audit=audit, retry=retry)
    payload = provider.parse_json_response(response)
    if not isinstance(payload, dict):
        raise MalformedModelOutput("judge must return a JSON object")
    scores = {}
    for key in JUDGE_DIMENSIONS:
        if key not in payload:
            raise MalformedModelOutput(f"judge response missing {key!r}")
        scores[key] = _coerce_score(key, payload[key])
    return JudgeScores(**scores)


def judge_many(justifications: Sequence[str], backend, audit=None, retry=None) -> dict:
    """Score a batch and report per-item scores plus dimension means."""
    items = [judge(text, backend, audit=audit, retry=retry) for text in justifications]
    means = {
        key: fmean(getattr(s, key) for s in items) if items else None
        for key in JUDGE_DIMENSIONS
    }
    return {"per_item": [s.as_dict() for s in items], "means": means}


# --- alias normalization ---------------------------------------------------------

class ActorAliasTable:
    """Case-folded alias -> canonical actor id, plus actor -> nation."""

    def __init__(self, actors: dict, nation_aliases: Optional[dict] = None):
        self._alias_to_id = {}
        self._nation_by_id = {}
        self._nation_aliases = {}
        for canonical, info in actors.items():
            self._add_alias(canonical, canonical)
            for alias in info.get("aliases", ()):
                self._add_alias(alias, canonical)
            nation = info.get("nation")
            if nation:
                self._nation_by_id[canonical] = nation
        for alias, canonical in (nation_aliases or {}).items():
            self._nation_aliases[alias.casefold()] = canonical

    def _add_alias(self, alias: str, canonical: str) -> None:
        key = alias.strip().casefold()
        existing = self._alias_to_id.get(key)
        if existing is not None and existing != canonical:
            raise InvalidConfig(
                f"alias {alias!r} maps to both {existing!r} and {canonical!r}"
            )
        self._alias_to_id[key] = canonical

    @classmethod
    def load_default(cls) -> "ActorAliasTable":
        payload = json.loads(
            resources.files("aura").joinpath("data/aliases.json").read_text("utf-8")
        )
        return cls(payload["actors"], payload.get("nation_aliases"))

    @classmethod
    def from_file(cls, path) -> "ActorAliasTable":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        return cls(payload["actors"], payload.get("nation_aliases"))

    def canonical(self, name: str) -> Optional[str]:
        return self._alias_to_id.get(name.strip().casefold())

    def canonical_or_self(self, name: str) -> str:
        canonical = self.canonical(name)
        return canonical if canonical is not None else name.strip().casefold()

    def require_canonical(self, name: str) -> str:
        canonical = self.canonical(name)
        if canonical is None:
            raise UnknownActor(f"actor {name!r} is not in the alias table")
        return canonical

    def nation_for(self, name: str) -> Optional[str]:
        canonical = self.canonical(name)
        if canonical is None:
            return None
        return self._nation_by_id.get(canonical)

    def canonical_nation(self, name: str) -> str:
        key = name.strip().casefold()
        return self._nation_aliases.get(key, name.strip()).casefold()

    def aliases_of(self, canonical: str) -> list:
        return sorted(
            alias for alias, cid in self._alias_to_id.items() if cid == canonical
        )


# --- accuracy -------------------------------------------------------------------

@dataclass(frozen=True)
class EvalRecord:
    """One test record's truth plus every generation's ranked (actor, nation) list."""

    report_id: str
    true_group: str
    true_nation: str
    generations: tuple

    def __post_init__(self):
        if not self.generations:
            raise ValueError("EvalRecord needs at least one generation")
        object.__setattr__(
            self,
            "generations",
            tuple(tuple((a, n) for a, n in gen) for gen in self.generations),
        )


def _ranked_canonical(generation, level: str, aliases: ActorAliasTable) -> list:
    """Canonicalize one generation's ranked list, deduplicating post-alias."""
    ranked = []
    for actor, nation in generation:
        if level == "group":
            label = aliases.canonical_or_self(actor)
        else:
            resolved = nation or aliases.nation_for(actor) or ""
            if not resolved:
                continue
            label = aliases.canonical_nation(resolved)
        if label and label not in ranked:
            ranked.append(label)
    return ranked


def _true_label(record: EvalRecord, level: str, aliases: ActorAliasTable) -> str:
    if level == "group":
        return aliases.require_canonical(record.true_group)
    return aliases.canonical_nation(record.true_nation)


def _check_level(level: str) -> None:
    if level not in ("group", "nation"):
        raise ValueError(f"level must be 'group' or 'nation', got {level!r}")


def top_k_accuracy(records, k: int, level: str, aliases: ActorAliasTable) -> float:
    """Fraction of records whose truth is in the first k ranks of the FIRST generation."""
    _check_level(level)
    records = list(records)
    if not records:
        raise EmptyTestSet("top-k accuracy over zero records")
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = 0
    for record in records:
        truth = _true_label(record, level, aliases)
        ranked = _ranked_canonical(record.generations[0], level, aliases)
        if truth in ranked[:k]:
            hits += 1
    return hits / len(records)


def pass_at_k(
    records, k: int, level: str, aliases: ActorAliasTable, rank: int = 1
) -> float:
    """Fraction of records where any of the first k generations hits within `rank`."""
    _check_level(level)
    records = list(records)
    if not records:
        raise EmptyTestSet("pass@k over zero records")
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = 0
    for record in records:
        if len(record.generations) < k:
            raise InsufficientGenerations(
                f"record {record.report_id!r} has {len(record.generations)} "
                f"generations, pass@{k} needs {k}"
            )
        truth = _true_label(record, level, aliases)
        for generation in record.generations[:k]:
            if truth in _ranked_canonical(generation, level, aliases)[:rank]:
                hits += 1
                break
    return hits / len(records)


# --- batch evaluation -------------------------------------------------------------

@dataclass
class MetricReport:
    """Full evaluation output. Contains no timestamps or job ids by design."""

    n_records: int
    n_generations: int
    pass_rank: int
    pass_k: int
    accuracy: dict
    justification: dict
    details: list

    def to_payload(self) -> dict:
        return {
            "n_records": self.n_records,
            "n_generations": self.n_generations,
            "pass_rank": self.pass_rank,
            "pass_k": self.pass_k,
            "accuracy": self.accuracy,
            "justification": self.justification,
            "details": self.details,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_payload(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        def pct(value):
            return "n/a" if value is None else f"{100 * value:.2f}%"

        def num(value):
            return "n/a" if value is None else f"{value:.4f}"

        lines = [
            f"records: {self.n_records}   generations: {self.n_generations}   "
            f"pass rank: {self.pass_rank}",
            "",
            "attribution accuracy",
        ]
        for level in ("group", "nation"):
            scores = self.accuracy[level]
            lines.append(
                f"  {level:<7} top-1 {pct(scores['top1'])}   "
                f"top-2 {pct(scores['top2'])}   "
                f"pass@{self.pass_k} {pct(scores['pass_at_k'])}"
            )
        lines.append("")
        lines.append("justification quality (first generation)")
        for key in (
            "flesch_reading_ease",
            "type_token_ratio",
            "embedding_coherence",
            "perplexity",
        ):
            lines.append(f"  {key:<22} mean {num(self.justification[key]['mean'])}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        """Per-record justification metric bars for external plotting."""
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(
            [
                "report_id",
                "flesch_reading_ease",
                "type_token_ratio",
                "embedding_coherence",
                "perplexity",
            ]
        )
        for detail in self.details:
            metrics = detail["metrics"]
            writer.writerow(
                [
                    detail["report_id"],
                    *(
                        "" if metrics[key] is None else repr(metrics[key])
                        for key in (
                            "flesch_reading_ease",
                            "type_token_ratio",
                            "embedding_coherence",
                            "perplexity",
                        )
                    ),
                ]
            )
        return out.getvalue()


_RECORD_LIST_FIELDS = ("malware_tools", "ttps", "iocs", "targets")


def validate_test_record(record, index: int) -> None:
    bad = []
    if not isinstance(record, dict):
        raise InvalidConfig(f"test record {index} must be a JSON object")
    for key in ("true_group", "true_nation"):
        value = record.get(key)
        if not isinstance(value, str) or not value.strip():
            bad.append(key)
    for key in _RECORD_LIST_FIELDS:
        if key in record:
            value = record[key]
            if not isinstance(value, list) or any(not isinstance(v, str) for v in value):
                bad.append(key)
    if "timeline" in record and not isinstance(record["timeline"], str):
        bad.append("timeline")
    if bad:
        raise InvalidConfig(
            f"test record {index} has invalid fields: {', '.join(sorted(bad))}",
            fields=sorted(bad),
        )


class _AttributorTap:
    """Backend proxy capturing the last attributor response (for logprobs)."""

    def __init__(self):
        self.inner = None
        self.name = "attributor-tap"
        self.last = None

    def invoke(self, request):
        response = self.inner.invoke(request)
        self.last = response
        return response


class _TapGateway:
    """Gateway wrapper routing attributor calls through a response tap."""

    def __init__(self, inner, tap: _AttributorTap):
        self.inner = inner
        self.tap = tap
        self.audit = getattr(inner, "audit", None)
        self.retry = getattr(inner, "retry", None)

    def backend_for(self, agent_role: str):
        backend = self.inner.backend_for(agent_role)
        if agent_role == "attributor":
            self.tap.inner = backend
            return self.tap
        return backend


def _generation_ranked(result) -> list:
    ranked = [(result.primary_actor, result.nation)]
    if result.secondary_actor:
        ranked.append((result.secondary_actor, result.nation_secondary))
    return ranked


def _record_metrics(justification, logprobs, embedder) -> dict:
    metrics = {
        "flesch_reading_ease": None,
        "type_token_ratio": None,
        "embedding_coherence": None,
        "perplexity": None,
    }
    if justification:
        for key, fn in (
            ("flesch_reading_ease", flesch_reading_ease),
            ("type_token_ratio", type_token_ratio),
        ):
            try:
                metrics[key] = fn(justification)
            except AuraError:
                pass
        try:
            metrics["embedding_coherence"] = embedding_coherence(justification, embedder)
        except AuraError:
            pass
    if logprobs:
        try:
            metrics["perplexity"] = perplexity(logprobs)
        except AuraError:
            pass
    return metrics


def run_eval(
    test_set: Sequence[dict],
    deps,
    n_generations: int = 3,
    pass_rank: int = 1,
    pass_k: Optional[int] = None,
    aliases: Optional[ActorAliasTable] = None,
) -> MetricReport:
    """Run the pipeline over a held-out test set and fold metrics.

    Web search is forcibly disabled; every generation runs in a fresh
    ephemeral session; errored generations score as incorrect. The
    report is a deterministic fold over records sorted by id.
    """
    records = list(test_set)
    if not records:
        raise EmptyTestSet("evaluation needs at least one test record")
    if n_generations < 1:
        raise InvalidConfig("n_generations must be >= 1")
    if pass_rank < 1:
        raise InvalidConfig("pass_rank must be >= 1")
    if pass_k is None:
        pass_k = n_generations
    if pass_k < 1:
        raise InvalidConfig("pass_k must be >= 1")
    if aliases is None:
        aliases = ActorAliasTable.load_default()

    prepared = []
    for i, record in enumerate(records):
        validate_test_record(record, i)
        body = record_body_text(record)
        report_id = str(record.get("id") or record.get("report_id") or content_id(body))
        prepared.append((report_id, record, body))
    prepared.sort(key=lambda item: item[0])

    tap = _AttributorTap()
    eval_deps = replace(deps, searcher=None, gateway=_TapGateway(deps.gateway, tap))

    details = []
    eval_records = []
    for report_id, record, body in prepared:
        entities = ThreatEntities.from_record(record)
        generations = []
        errors = []
        first_justification = None
        first_logprobs = None
        for g in range(n_generations):
            tap.last = None
            try:
                result, _ = run_turn(
                    new_session(f"eval-{report_id}-{g}"), body, eval_deps, entities=entities
                )
            except AuraError as exc:
                generations.append([])
                errors.append(str(exc))
                continue
            generations.append(_generation_ranked(result))
            errors.append(None)
            if g == 0:
                first_justification = result.justification
                if tap.last is not None and tap.last.token_logprobs:
                    first_logprobs = [lp for _, lp in tap.last.token_logprobs]
        eval_records.append(
            EvalRecord(
                report_id=report_id,
                true_group=record["true_group"],
                true_nation=record["true_nation"],
                generations=tuple(generations),
            )
        )
        details.append(
            {
                "report_id": report_id,
                "true_group": record["true_group"],
                "true_nation": record["true_nation"],
                "status": "ok" if not any(errors) else "errored",
                "errors": errors,
                "generations": [[list(pair) for pair in gen] for gen in generations],
                "justification": first_justification,
                "metrics": _record_metrics(first_justification, first_logprobs, deps.embedder),
            }
        )

    accuracy = {}
    for level in ("group", "nation"):
        accuracy[level] = {
            "top1": top_k_accuracy(eval_records, 1, level, aliases),
            "top2": top_k_accuracy(eval_records, 2, level, aliases),
            "pass_at_k": pass_at_k(eval_records, pass_k, level, aliases, rank=pass_rank),
        }

    justification = {}
    for key in (
        "flesch_reading_ease",
        "type_token_ratio",
        "embedding_coherence",
        "perplexity",
    ):
        values = [d["metrics"][key] for d in details if d["metrics"][key] is not None]
        justification[key] = {
            "mean": fmean(values) if values else None,
            "scored": len(values),
        }

    return MetricReport(
        n_records=len(prepared),
        n_generations=n_generations,
        pass_rank=pass_rank,
        pass_k=pass_k,
        accuracy=accuracy,
        justification=justification,
        details=details,
    )

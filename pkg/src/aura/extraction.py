"""Defang-aware extraction of threat entities from analyst text.

Deterministic scanners find IoCs and ATT&CK technique ids; an LLM pass
fills in the fields a grammar cannot catch (malware names, actors,
targets, timeline). Scan results always win on conflict so a model
cannot displace a literal indicator.

IoC grammars are applied to the refanged view of the text while raw
spans are reported from the original, so defanged notation such as
``88[.]222[.]245[.]211`` survives round-trips untouched.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

from . import provider
from .errors import EmptyText, MalformedModelOutput
from .prompts import load_template, render

# Exact defang tokens, case-sensitive. hxxps precedes hxxp so the
# longest token wins at a given position.
REFANG_RULES = (
    ("hxxps", "https"),
    ("hxxp", "http"),
    ("[dot]", "."),
    ("[.]", "."),
    ("(.)", "."),
    ("[:]", ":"),
    ("[@]", "@"),
)

IOC_KINDS = ("ipv4", "domain", "url", "hash_md5", "hash_sha1", "hash_sha256", "email")

_DOMAIN_BODY = r"(?:[a-z0-9-]+\.)+[a-z]{2,}"
_OCTET = r"(?:25[0-5]|2[0-4][0-9]|1[0-9][0-9]|[1-9]?[0-9])"

_URL_RE = re.compile(r"https?://[^\s<>\"']+")
_EMAIL_RE = re.compile(
    r"(?<![A-Za-z0-9._%+-])[A-Za-z0-9._%+-]+@" + _DOMAIN_BODY + r"(?![a-zA-Z0-9-])"
)
# Lookarounds reject runs of more than four octets: 1.2.3.4.5 is not an ip.
_IPV4_RE = re.compile(r"(?<![\w.])" + _OCTET + r"(?:\." + _OCTET + r"){3}(?![\w.])")
_DOMAIN_RE = re.compile(r"(?<![A-Za-z0-9.-])" + _DOMAIN_BODY + r"(?![a-zA-Z0-9-])")
_HASH_RE = re.compile(
    r"(?<![0-9a-zA-Z])(?:[0-9a-fA-F]{64}|[0-9a-fA-F]{40}|[0-9a-fA-F]{32})(?![0-9a-zA-Z])"
)
_TTP_RE = re.compile(r"\bT(\d{4})(?:\.(\d{3}))?\b")

_HASH_KIND_BY_LENGTH = {32: "hash_md5", 40: "hash_sha1", 64: "hash_sha256"}
_URL_TRAILING = ".,;:!?\"')]"


def _refang_spans(text: str):
    """Refang text and map every output char to its source span."""
    out = []
    spans = []
    i = 0
    n = len(text)
    while i < n:
        for token, repl in REFANG_RULES:
            if text.startswith(token, i):
                end = i + len(token)
                for ch in repl:
                    out.append(ch)
                    spans.append((i, end))
                i = end
                break
        else:
            out.append(text[i])
            spans.append((i, i + 1))
            i += 1
    return "".join(out), spans


def refang(text: str) -> str:
    """Replace defang tokens with their plain forms. Total and idempotent."""
    refanged, _ = _refang_spans(text)
    return refanged


@dataclass(frozen=True)
class Ioc:
    """One indicator of compromise.

    ``raw`` is the text as found, possibly defanged; ``refanged`` is the
    canonical form (hashes lowercased, everything else verbatim after
    refanging).
    """

    kind: str
    raw: str
    refanged: str

    def __post_init__(self):
        if self.kind not in IOC_KINDS:
            raise ValueError(f"unknown ioc kind: {self.kind!r}")


@dataclass(frozen=True, order=True)
class TechniqueId:
    """MITRE ATT&CK technique id, optionally with a sub-technique."""

    technique: str
    sub_technique: Optional[str] = None

    def __post_init__(self):
        if not re.fullmatch(r"T\d{4}", self.technique):
            raise ValueError(f"bad technique id: {self.technique!r}")
        if self.sub_technique is not None and not re.fullmatch(r"\d{3}", self.sub_technique):
            raise ValueError(f"bad sub-technique: {self.sub_technique!r}")

    def canonical(self) -> str:
        if self.sub_technique is None:
            return self.technique
        return f"{self.technique}.{self.sub_technique}"

    @classmethod
    def parse(cls, text: str) -> "TechniqueId":
        m = _TTP_RE.fullmatch(text.strip())
        if m is None:
            raise ValueError(f"not a technique id: {text!r}")
        return cls(technique="T" + m.group(1), sub_technique=m.group(2))


def _overlaps(a: int, b: int, claimed) -> bool:
    return any(a < end and start < b for start, end in claimed)


def scan_iocs(text: str) -> list:
    """Scan for IoCs on the refanged view, reporting raw source spans.

    Classification priority is url > email > ipv4 > domain > hash;
    a higher-priority match claims its span and suppresses overlapping
    lower-priority candidates.
    """
    refanged, spans = _refang_spans(text)
    claimed = []
    found = []
    for kind, regex in (
        ("url", _URL_RE),
        ("email", _EMAIL_RE),
        ("ipv4", _IPV4_RE),
        ("domain", _DOMAIN_RE),
        ("hash", _HASH_RE),
    ):
        for m in regex.finditer(refanged):
            a, b = m.span()
            if kind == "url":
                while b > a and refanged[b - 1] in _URL_TRAILING:
                    b -= 1
                if b == a:
                    continue
            if _overlaps(a, b, claimed):
                continue
            claimed.append((a, b))
            canonical = refanged[a:b]
            if kind == "hash":
                resolved = _HASH_KIND_BY_LENGTH[b - a]
                canonical = canonical.lower()
            else:
                resolved = kind
            raw = text[spans[a][0] : spans[b - 1][1]]
            found.append((a, Ioc(kind=resolved, raw=raw, refanged=canonical)))
    found.sort(key=lambda item: item[0])
    return [ioc for _, ioc in found]


def classify_ioc(text: str) -> Optional[Ioc]:
    """Classify a lone indicator string, or return None if it is not one whole IoC."""
    stripped = text.strip()
    if not stripped:
        return None
    matches = scan_iocs(stripped)
    if len(matches) == 1 and matches[0].raw == stripped:
        return matches[0]
    return None


def scan_ttps(text: str) -> set:
    """All technique ids in the text, canonicalized and deduplicated."""
    return {
        TechniqueId(technique="T" + m.group(1), sub_technique=m.group(2))
        for m in _TTP_RE.finditer(text)
    }


def dedup_iocs(iocs: Iterable[Ioc]) -> list:
    """Drop repeat indicators, keyed by (kind, refanged), keeping first occurrence."""
    seen = set()
    out = []
    for ioc in iocs:
        key = (ioc.kind, ioc.refanged)
        if key in seen:
            continue
        seen.add(key)
        out.append(ioc)
    return out


@dataclass
class ThreatEntities:
    """Structured entities extracted from one query or report."""

    ttps: set = field(default_factory=set)
    iocs: list = field(default_factory=list)
    malware_tools: set = field(default_factory=set)
    actors_mentioned: set = field(default_factory=set)
    targets: set = field(default_factory=set)
    timeline: Optional[str] = None

    def __post_init__(self):
        self.ttps = set(self.ttps)
        self.iocs = dedup_iocs(self.iocs)
        self.malware_tools = set(self.malware_tools)
        self.actors_mentioned = set(self.actors_mentioned)
        self.targets = set(self.targets)
        if self.timeline is not None and not self.timeline.strip():
            self.timeline = None

    def is_empty(self) -> bool:
        return not (
            self.ttps
            or self.iocs
            or self.malware_tools
            or self.actors_mentioned
            or self.targets
            or self.timeline
        )

    def to_record(self) -> dict:
        """Serialize to the structured test-record interchange format."""
        return {
            "malware_tools": sorted(self.malware_tools),
            "ttps": sorted(t.canonical() for t in self.ttps),
            "iocs": [ioc.raw for ioc in self.iocs],
            "targets": sorted(self.targets),
            "timeline": self.timeline or "",
            "actors_mentioned": sorted(self.actors_mentioned),
        }

    @classmethod
    def from_record(cls, record: dict) -> "ThreatEntities":
        ttps = set()
        for entry in record.get("ttps", ()):
            ttps |= scan_ttps(str(entry))
        iocs = []
        for entry in record.get("iocs", ()):
            ioc = classify_ioc(str(entry))
            if ioc is not None:
                iocs.append(ioc)
        timeline = record.get("timeline") or None
        return cls(
            ttps=ttps,
            iocs=iocs,
            malware_tools={str(v) for v in record.get("malware_tools", ())},
            actors_mentioned={str(v) for v in record.get("actors_mentioned", ())},
            targets={str(v) for v in record.get("targets", ())},
            timeline=timeline,
        )


def _string_list(value, key: str) -> list:
    if value is None:
        return []
    if not isinstance(value, list) or any(not isinstance(v, str) for v in value):
        raise MalformedModelOutput(f"field {key!r} must be a list of strings")
    return value


def extract_entities(text: str, backend, audit=None, retry=None) -> ThreatEntities:
    """Fuse deterministic scans with an LLM extraction pass.

    Scans populate ttps and iocs; the model supplies the rest plus any
    indicators the scans missed. Scan results take precedence.
    """
    if not text or not text.strip():
        raise EmptyText("cannot extract entities from empty text")
    iocs = scan_iocs(text)
    ttps = scan_ttps(text)

    prompt = render(load_template("preprocessor"), input=text)
    request = provider.make_request("preprocessor", prompt, response_format="json_object")
    response = provider.complete(backend, request, audit=audit, retry=retry)
    payload = provider.parse_json_response(response)
    if not isinstance(payload, dict):
        raise MalformedModelOutput("entity extraction must return a JSON object")

    for entry in _string_list(payload.get("ttps"), "ttps"):
        ttps |= scan_ttps(entry)
    seen = {(ioc.kind, ioc.refanged) for ioc in iocs}
    for entry in _string_list(payload.get("iocs"), "iocs"):
        ioc = classify_ioc(entry)
        if ioc is not None and (ioc.kind, ioc.refanged) not in seen:
            iocs.append(ioc)
            seen.add((ioc.kind, ioc.refanged))

    timeline = payload.get("timeline")
    if timeline is not None and not isinstance(timeline, str):
        raise MalformedModelOutput("field 'timeline' must be a string")

    return ThreatEntities(
        ttps=ttps,
        iocs=iocs,
        malware_tools=set(_string_list(payload.get("malware_tools"), "malware_tools")),
        actors_mentioned=set(_string_list(payload.get("actors_mentioned"), "actors_mentioned")),
        targets=set(_string_list(payload.get("targets"), "targets")),
        timeline=timeline or None,
    )

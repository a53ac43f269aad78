"""Report ingestion and overlap chunking for the knowledge base.

Reports are normalized to plain text (whitespace runs collapsed, input
lines preserved as sentence boundaries) and split into overlapping token
chunks. Tokens are whitespace-delimited words throughout the engine.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Iterable, Optional

from .errors import DecodeError, DuplicateId, EmptyDocument, InvalidConfig

DEFAULT_CHUNK_SIZE = 512
DEFAULT_OVERLAP = 50

_SENTENCE_END = (".", "!", "?")

# Row labels for rendering structured records to text; order is fixed so
# serialization is deterministic.
_RECORD_FIELDS = (
    ("malware_tools", "Malware/Tools"),
    ("ttps", "Key TTPs"),
    ("iocs", "IOCs"),
    ("targets", "Targets"),
    ("timeline", "Campaign Timeline"),
)


@dataclass(frozen=True)
class ThreatReport:
    """One ingested intelligence document."""

    id: str
    title: str
    source: str
    body_text: str
    published_date: Optional[str] = None
    label_group: Optional[str] = None
    label_nation: Optional[str] = None

    def tokens(self) -> list[str]:
        return self.body_text.split()


@dataclass(frozen=True)
class Chunk:
    """A contiguous token span of one report."""

    report_id: str
    seq_index: int
    text: str
    token_start: int
    token_end: int

    @property
    def ref(self) -> tuple[str, int]:
        return (self.report_id, self.seq_index)


def normalize_text(raw: str) -> str:
    """Collapse whitespace runs; keep each input line as one sentence.

    Non-empty lines lacking terminal punctuation get a period so that
    downstream sentence splitting sees the original line structure.
    Idempotent.
    """
    sentences = []
    for line in raw.splitlines():
        line = " ".join(line.split())
        if not line:
            continue
        if not line.endswith(_SENTENCE_END):
            line += "."
        sentences.append(line)
    return " ".join(sentences)


def record_body_text(record: dict) -> str:
    """Render a structured test record to its canonical body text.

    Ground-truth labels (true_group / true_nation) are deliberately not
    rendered: the body must not leak the answer to the pipeline.
    """
    lines = []
    for key, label in _RECORD_FIELDS:
        value = record.get(key)
        if value is None or value == [] or value == "":
            continue
        if isinstance(value, (list, tuple)):
            rendered = ", ".join(str(v) for v in value)
        else:
            rendered = str(value)
        lines.append(f"{label}: {rendered}")
    return normalize_text("\n".join(lines))


def content_id(body_text: str) -> str:
    """Deterministic report id: SHA-256 digest prefix of the normalized body."""
    return hashlib.sha256(body_text.encode("utf-8")).hexdigest()[:16]


def ingest_report(raw_bytes: bytes, format: str = "plain_text",
                  metadata: Optional[dict] = None) -> ThreatReport:
    """Decode, normalize and wrap one document as a ThreatReport.

    ``format`` is one of plain_text, pdf_extracted_text (already-extracted
    text; no binary parsing here) or structured_record (JSON object with
    the test-record field inventory).
    """
    metadata = dict(metadata or {})
    if format not in ("plain_text", "pdf_extracted_text", "structured_record"):
        raise InvalidConfig(f"unknown ingest format: {format!r}")

    try:
        text = raw_bytes.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DecodeError(f"payload is not UTF-8 text: {exc}") from exc

    label_group = metadata.get("label_group")
    label_nation = metadata.get("label_nation")

    if format == "structured_record":
        try:
            record = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DecodeError(f"structured_record is not valid JSON: {exc}") from exc
        if not isinstance(record, dict):
            raise DecodeError("structured_record must be a JSON object")
        body = record_body_text(record)
        label_group = record.get("true_group", label_group)
        label_nation = record.get("true_nation", label_nation)
        metadata.setdefault("title", record.get("title", ""))
        metadata.setdefault("id", record.get("id") or record.get("report_id"))
    else:
        body = normalize_text(text)

    if not body:
        raise EmptyDocument("document is empty after normalization")

    report_id = metadata.get("id") or content_id(body)
    return ThreatReport(
        id=str(report_id),
        title=str(metadata.get("title") or ""),
        source=str(metadata.get("source") or ""),
        body_text=body,
        published_date=metadata.get("published_date"),
        label_group=label_group,
        label_nation=label_nation,
    )


def chunk_document(report: ThreatReport, chunk_size: int = DEFAULT_CHUNK_SIZE,
                   overlap: int = DEFAULT_OVERLAP) -> list[Chunk]:
    """Split a report into overlapping token chunks.

    Chunk i covers tokens [i*stride, i*stride + chunk_size) with
    stride = chunk_size - overlap; the final chunk may be shorter but is
    never clamped backwards, so consecutive chunks always share exactly
    ``overlap`` tokens.
    """
    if chunk_size <= 0:
        raise InvalidConfig("chunk_size must be positive")
    if overlap < 0:
        raise InvalidConfig("overlap must be non-negative")
    if overlap >= chunk_size:
        raise InvalidConfig(f"overlap ({overlap}) must be smaller than chunk_size ({chunk_size})")

    tokens = report.tokens()
    n = len(tokens)
    if n == 0:
        raise EmptyDocument(f"report {report.id} has no tokens")

    stride = chunk_size - overlap
    chunks = []
    start = 0
    seq = 0
    while True:
        end = min(start + chunk_size, n)
        chunks.append(Chunk(
            report_id=report.id,
            seq_index=seq,
            text=" ".join(tokens[start:end]),
            token_start=start,
            token_end=end,
        ))
        if end >= n:
            break
        start += stride
        seq += 1
    return chunks


class Corpus:
    """An id-keyed collection of reports with manifest rendering."""

    def __init__(self):
        self._reports: dict[str, ThreatReport] = {}

    def __len__(self) -> int:
        return len(self._reports)

    def __contains__(self, report_id: str) -> bool:
        return report_id in self._reports

    def get(self, report_id: str) -> ThreatReport:
        return self._reports[report_id]

    def reports(self) -> list[ThreatReport]:
        return [self._reports[rid] for rid in sorted(self._reports)]

    def add(self, report: ThreatReport) -> ThreatReport:
        if report.id in self._reports:
            raise DuplicateId(f"report id {report.id!r} already ingested")
        self._reports[report.id] = report
        return report

    def ingest(self, raw_bytes: bytes, format: str = "plain_text",
               metadata: Optional[dict] = None) -> ThreatReport:
        return self.add(ingest_report(raw_bytes, format, metadata))

    def manifest(self, chunk_size: int = DEFAULT_CHUNK_SIZE,
                 overlap: int = DEFAULT_OVERLAP) -> dict:
        """Corpus manifest: report ids, titles, chunk counts."""
        entries = []
        for report in self.reports():
            entries.append({
                "id": report.id,
                "title": report.title,
                "chunks": len(chunk_document(report, chunk_size, overlap)),
            })
        return {
            "report_count": len(entries),
            "chunk_size": chunk_size,
            "overlap": overlap,
            "reports": entries,
        }


def chunk_corpus(corpus: Corpus | Iterable[ThreatReport],
                 chunk_size: int = DEFAULT_CHUNK_SIZE,
                 overlap: int = DEFAULT_OVERLAP) -> list[Chunk]:
    reports = corpus.reports() if isinstance(corpus, Corpus) else list(corpus)
    out: list[Chunk] = []
    for report in reports:
        out.extend(chunk_document(report, chunk_size, overlap))
    return out

"""Exact-scan vector index over chunk embeddings, with snapshot persistence.

The index is the correctness reference: search is a full cosine scan with
a deterministic tie-break (score desc, then (report_id, seq_index) asc).
Snapshots are a versioned JSON manifest plus a little-endian float32 blob
and a chunks.jsonl sidecar; restore is bit-exact because the live index
also holds float32.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .embedding import EmbeddingVector
from .errors import (
    DimensionMismatch,
    EmptyIndex,
    IndexIoError,
    ManifestVersionMismatch,
    ZeroVector,
)

MANIFEST_VERSION = 1

MANIFEST_FILE = "manifest.json"
VECTORS_FILE = "vectors.bin"
CHUNKS_FILE = "chunks.jsonl"


@dataclass(frozen=True)
class IndexedChunk:
    """A chunk plus its embedding, keyed by (report_id, seq_index)."""

    chunk_ref: tuple[str, int]
    vector: EmbeddingVector
    text: str


@dataclass(frozen=True)
class SearchHit:
    """One scored retrieval result."""

    chunk_ref: tuple[str, int]
    score: float
    text: str


class VectorIndex:
    """In-memory exact-scan index; one writer or many readers at a time."""

    def __init__(self, dims: int, embedder_name: str = ""):
        if dims <= 0:
            raise DimensionMismatch("index dims must be positive")
        self.dims = dims
        self.embedder_name = embedder_name
        self._lock = threading.RLock()
        self._refs: list[tuple[str, int]] = []
        self._texts: list[str] = []
        self._vectors: list[np.ndarray] = []          # float32 rows
        self._positions: dict[tuple[str, int], int] = {}

    def __len__(self) -> int:
        return len(self._refs)

    @property
    def write_lock(self) -> threading.RLock:
        return self._lock

    def report_ids(self) -> set[str]:
        with self._lock:
            return {ref[0] for ref in self._refs}

    def upsert(self, items: Sequence[IndexedChunk]) -> int:
        """Insert or replace chunks; returns how many were touched."""
        for item in items:
            if item.vector.dims != self.dims:
                raise DimensionMismatch(
                    f"chunk {item.chunk_ref} has {item.vector.dims} dims, index has {self.dims}")
        with self._lock:
            count = 0
            for item in items:
                row = item.vector.values.astype(np.float32)
                ref = (str(item.chunk_ref[0]), int(item.chunk_ref[1]))
                pos = self._positions.get(ref)
                if pos is None:
                    self._positions[ref] = len(self._refs)
                    self._refs.append(ref)
                    self._texts.append(item.text)
                    self._vectors.append(row)
                else:
                    self._vectors[pos] = row
                    self._texts[pos] = item.text
                count += 1
            return count

    def search_top_k(self, query_vector: EmbeddingVector, k: int) -> list[SearchHit]:
        """Exactly the k best cosine scores, deterministic order."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if query_vector.dims != self.dims:
            raise DimensionMismatch(
                f"query has {query_vector.dims} dims, index has {self.dims}")
        q = query_vector.values
        q_norm = float(np.linalg.norm(q))
        if q_norm == 0.0:
            raise ZeroVector("query vector is all zeros")
        with self._lock:
            if not self._refs:
                raise EmptyIndex("search against empty index")
            matrix = np.stack(self._vectors).astype(np.float64)
            refs = list(self._refs)
            texts = list(self._texts)
        norms = np.linalg.norm(matrix, axis=1)
        scores = (matrix @ q) / (norms * q_norm)
        scores = np.clip(scores, -1.0, 1.0)
        order = sorted(range(len(refs)), key=lambda i: (-scores[i], refs[i]))
        return [
            SearchHit(chunk_ref=refs[i], score=float(scores[i]), text=texts[i])
            for i in order[:min(k, len(refs))]
        ]

    def snapshot(self, path: str | Path) -> dict:
        """Write manifest.json + vectors.bin + chunks.jsonl; returns the manifest."""
        directory = Path(path)
        try:
            directory.mkdir(parents=True, exist_ok=True)
            with self._lock:
                refs = list(self._refs)
                texts = list(self._texts)
                blob = (np.stack(self._vectors) if self._vectors
                        else np.zeros((0, self.dims), dtype=np.float32))
            manifest = {
                "version": MANIFEST_VERSION,
                "dims": self.dims,
                "count": len(refs),
                "embedder": self.embedder_name,
                "dtype": "float32-le",
            }
            (directory / VECTORS_FILE).write_bytes(
                blob.astype("<f4").tobytes(order="C"))
            with (directory / CHUNKS_FILE).open("w", encoding="utf-8") as fh:
                for ref, text in zip(refs, texts):
                    fh.write(json.dumps(
                        {"report_id": ref[0], "seq_index": ref[1], "text": text},
                        ensure_ascii=False) + "\n")
            (directory / MANIFEST_FILE).write_text(
                json.dumps(manifest, indent=2), encoding="utf-8")
        except OSError as exc:
            raise IndexIoError(f"snapshot to {directory} failed: {exc}") from exc
        return manifest

    @classmethod
    def restore(cls, path: str | Path) -> "VectorIndex":
        directory = Path(path)
        manifest_path = directory / MANIFEST_FILE
        try:
            raw = manifest_path.read_text(encoding="utf-8")
        except OSError as exc:
            raise IndexIoError(f"cannot read {manifest_path}: {exc}") from exc
        try:
            manifest = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ManifestVersionMismatch(f"manifest is not valid JSON: {exc}") from exc
        if not isinstance(manifest, dict) or manifest.get("version") != MANIFEST_VERSION:
            raise ManifestVersionMismatch(
                f"unsupported manifest version: {manifest.get('version')!r}")

        dims = int(manifest["dims"])
        count = int(manifest["count"])
        index = cls(dims, embedder_name=manifest.get("embedder", ""))
        try:
            blob = (directory / VECTORS_FILE).read_bytes()
            rows = np.frombuffer(blob, dtype="<f4")
            if rows.size != count * dims:
                raise ManifestVersionMismatch(
                    f"vector blob holds {rows.size} floats, manifest expects {count * dims}")
            rows = rows.reshape((count, dims))
            with (directory / CHUNKS_FILE).open(encoding="utf-8") as fh:
                for i, line in enumerate(fh):
                    entry = json.loads(line)
                    ref = (str(entry["report_id"]), int(entry["seq_index"]))
                    index._positions[ref] = len(index._refs)
                    index._refs.append(ref)
                    index._texts.append(str(entry["text"]))
                    index._vectors.append(rows[i].copy())
        except OSError as exc:
            raise IndexIoError(f"cannot read snapshot files in {directory}: {exc}") from exc
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise ManifestVersionMismatch(f"snapshot sidecar corrupt: {exc}") from exc
        if len(index._refs) != count:
            raise ManifestVersionMismatch(
                f"chunks.jsonl holds {len(index._refs)} rows, manifest expects {count}")
        return index


def build_index(chunks, embedder, index: Optional[VectorIndex] = None) -> VectorIndex:
    """Embed corpus chunks and upsert them into an index (new one by default)."""
    if index is None:
        index = VectorIndex(embedder.dims, embedder_name=embedder.name)
    items = [
        IndexedChunk(chunk_ref=chunk.ref, vector=embedder.embed(chunk.text), text=chunk.text)
        for chunk in chunks
    ]
    index.upsert(items)
    return index

"""Dense text embeddings and cosine similarity.

Two embedders share one interface: a remote provider-backed embedder and
a deterministic offline fallback (hashed character trigrams) so the whole
pipeline runs and tests without network access. Vectors are stored raw;
normalization happens inside the cosine.
"""

from __future__ import annotations

import math
from typing import Protocol, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyText, ZeroVector

_FNV64_OFFSET = 0xCBF29CE484222325
_FNV64_PRIME = 0x100000001B3

# Boundary marker padded once on each side before trigram extraction.
BOUNDARY = "\x00"

DEFAULT_DIMS = 256


class EmbeddingVector:
    """A fixed-dimensionality vector of finite reals."""

    __slots__ = ("values",)

    def __init__(self, values: Sequence[float] | np.ndarray):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise DimensionMismatch("embedding must be a non-empty 1-D vector")
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding contains non-finite values")
        self.values = arr

    @property
    def dims(self) -> int:
        return int(self.values.size)

    def tolist(self) -> list[float]:
        return self.values.tolist()

    def __repr__(self) -> str:
        return f"EmbeddingVector(dims={self.dims})"


def fnv1a_64(data: bytes) -> int:
    """FNV-1a 64-bit hash; the published bucket-hash for the fallback embedder."""
    h = _FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV64_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


class Embedder(Protocol):
    """Anything that maps text to a vector of a declared dimensionality."""

    name: str
    dims: int

    def embed(self, text: str) -> EmbeddingVector: ...


class HashedTrigramEmbedder:
    """Deterministic offline embedder: hashed character-trigram bag.

    Lowercase the text, pad one boundary marker (NUL) on each side, hash
    every trigram with FNV-1a/64 into ``dims`` buckets with +1 counts,
    then L2-normalize. Similar texts share trigrams and so score higher
    under cosine, which is all retrieval tests need.
    """

    name = "hashed_trigram"

    def __init__(self, dims: int = DEFAULT_DIMS):
        if dims <= 0:
            raise DimensionMismatch("dims must be positive")
        self.dims = dims

    def trigrams(self, text: str) -> list[str]:
        padded = BOUNDARY + text.strip().lower() + BOUNDARY
        return [padded[i:i + 3] for i in range(len(padded) - 2)]

    def embed(self, text: str) -> EmbeddingVector:
        if not text or not text.strip():
            raise EmptyText("cannot embed empty text")
        counts = np.zeros(self.dims, dtype=np.float64)
        for gram in self.trigrams(text):
            counts[fnv1a_64(gram.encode("utf-8")) % self.dims] += 1.0
        norm = math.sqrt(float(np.dot(counts, counts)))
        return EmbeddingVector(counts / norm)


class RemoteEmbedder:
    """Provider-backed embedder; lazily calls the configured backend.

    The backend is any object exposing ``embed(text) -> list[float]``
    (see provider.OpenAiCompatBackend). Dimensionality is declared up
    front and enforced on every response.
    """

    name = "remote"

    def __init__(self, backend, dims: int):
        self._backend = backend
        self.dims = dims

    def embed(self, text: str) -> EmbeddingVector:
        if not text or not text.strip():
            raise EmptyText("cannot embed empty text")
        values = self._backend.embed(text)
        vec = EmbeddingVector(values)
        if vec.dims != self.dims:
            raise DimensionMismatch(
                f"remote embedder returned {vec.dims} dims, declared {self.dims}")
        return vec


def embed_text(text: str, embedder: Embedder) -> EmbeddingVector:
    """Embed one text through the given embedder handle."""
    return embedder.embed(text)


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """(a.b) / (|a||b|), clamped to [-1, 1] against float drift."""
    if a.dims != b.dims:
        raise DimensionMismatch(f"dims differ: {a.dims} vs {b.dims}")
    norm_a = float(np.linalg.norm(a.values))
    norm_b = float(np.linalg.norm(b.values))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVector("cosine undefined for all-zero vector")
    value = float(np.dot(a.values, b.values)) / (norm_a * norm_b)
    return max(-1.0, min(1.0, value))

"""Chunking, hashed bag-of-words embeddings and cosine top-k retrieval."""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

EMBED_DIM = 256
DEFAULT_CHUNK_SIZE = 1000
DEFAULT_OVERLAP = 200
DEFAULT_K = 4

_TOKEN = re.compile(r"[^\W_]+")

Embedder = Callable[[str], np.ndarray]


@dataclass(frozen=True)
class Chunk:
    index: int
    text: str
    char_span: tuple[int, int]


def chunk_document(
    text: str, chunk_size: int = DEFAULT_CHUNK_SIZE, overlap: int = DEFAULT_OVERLAP
) -> list[Chunk]:
    """Fixed-width sliding window over characters.

    Consecutive chunks share exactly ``overlap`` characters; the final chunk
    may be shorter than ``chunk_size``.
    """
    if chunk_size <= 0 or not 0 <= overlap < chunk_size:
        raise ValueError(f"need 0 <= overlap < chunk_size, got {overlap=} {chunk_size=}")
    chunks: list[Chunk] = []
    stride = chunk_size - overlap
    start = 0
    while start < len(text):
        end = min(start + chunk_size, len(text))
        chunks.append(Chunk(len(chunks), text[start:end], (start, end)))
        if end == len(text):
            break
        start += stride
    return chunks


def reconstruct(chunks: Sequence[Chunk]) -> str:
    """Inverse of :func:`chunk_document`: drop each chunk's overlap with its predecessor."""
    parts = []
    prev_end = 0
    for c in chunks:
        start, _ = c.char_span
        parts.append(c.text[prev_end - start :] if parts else c.text)
        prev_end = c.char_span[1]
    return "".join(parts)


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def _bucket(token: str, dim: int) -> int:
    # stable across processes, unlike hash()
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % dim


def embed_text(text: str, dim: int = EMBED_DIM) -> np.ndarray:
    """Hashed token counts, L2-normalized. Text without tokens maps to zeros."""
    vec = np.zeros(dim)
    for tok in tokenize(text):
        vec[_bucket(tok, dim)] += 1.0
    norm = math.sqrt(math.fsum(vec * vec))
    return vec / norm if norm > 0 else vec


@dataclass(frozen=True)
class VectorStore:
    chunks: tuple[Chunk, ...]
    vectors: np.ndarray
    embedder: Embedder = embed_text

    def __post_init__(self):
        if self.vectors.ndim != 2 or len(self.vectors) != len(self.chunks):
            raise ValueError("need exactly one embedding row per chunk")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("embeddings must be finite")

    def __len__(self) -> int:
        return len(self.chunks)


def build_store(chunks: Iterable[Chunk], embedder: Embedder = embed_text) -> VectorStore:
    chunks = tuple(chunks)
    rows = [np.asarray(embedder(c.text), dtype=float) for c in chunks]
    dims = {len(r) for r in rows}
    if len(dims) > 1:
        raise ValueError(f"embedder returned mixed dimensions {sorted(dims)}")
    vectors = np.vstack(rows) if rows else np.zeros((0, EMBED_DIM))
    vectors.setflags(write=False)
    return VectorStore(chunks, vectors, embedder)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    # fsum keeps scores correctly rounded, so equal scores tie exactly
    na = math.sqrt(math.fsum(a * a))
    nb = math.sqrt(math.fsum(b * b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return math.fsum(a * b) / (na * nb)


def retrieve_top_k(store: VectorStore, query: str, k: int = DEFAULT_K) -> list[tuple[Chunk, float]]:
    """Best ``k`` chunks by cosine similarity to ``query``.

    Ties go to the lower chunk index. A query without any tokens scores every
    chunk 0 and so returns the first ``k`` chunks.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(store) == 0:
        raise ValueError("cannot retrieve from an empty store")
    q = np.asarray(store.embedder(query), dtype=float)
    scored = [(cosine(q, row), c) for c, row in zip(store.chunks, store.vectors)]
    scored.sort(key=lambda sc: (-sc[0], sc[1].index))
    return [(c, s) for s, c in scored[:k]]

"""Hybrid retrieval index: hashed-bag embeddings plus BM25 lexical scoring.

The embedder is a deterministic local substitute for a neural sentence
encoder: token and token-pair counts are hashed into a fixed 256-dim
vector and L2-normalized. Both scoring legs are fused with min-max
normalization so results are reproducible bit-for-bit on any machine.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .corpus import Chunk, SourceDocument
from .errors import EmptyIndex, EmptyText, UnknownChunk
from .textops import fnv1a64_text, tokenize

EMBED_DIM = 256
UNIGRAM_WEIGHT = 1.0
BIGRAM_WEIGHT = 0.5
BM25_K1 = 1.2
BM25_B = 0.75
DEFAULT_TOP_K = 5
CACHE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]

    def dot(self, other: "EmbeddingVector") -> float:
        return sum(a * b for a, b in zip(self.values, other.values))


def embed_text(text: str) -> EmbeddingVector:
    """Deterministic 256-dim unit vector from hashed uni/bigram counts."""
    tokens = tokenize(text)
    if not tokens:
        raise EmptyText("no alphanumeric tokens in text")
    values = [0.0] * EMBED_DIM
    for token in tokens:
        values[fnv1a64_text(token) % EMBED_DIM] += UNIGRAM_WEIGHT
    for left, right in zip(tokens, tokens[1:]):
        values[fnv1a64_text(left + " " + right) % EMBED_DIM] += BIGRAM_WEIGHT
    norm = math.sqrt(sum(v * v for v in values))
    if norm == 0.0:
        raise EmptyText("text produced a zero embedding")
    return EmbeddingVector(tuple(v / norm for v in values))


@dataclass(frozen=True)
class LexicalStats:
    doc_freq: Mapping[str, int]
    term_freqs: Mapping[str, Counter]
    chunk_lengths: Mapping[str, int]
    avg_chunk_length: float
    n_chunks: int


def bm25_score(query_terms: list[str], chunk_id: str, stats: LexicalStats) -> float:
    """Okapi BM25 with k1=1.2, b=0.75 and idf = ln((N-df+0.5)/(df+0.5)+1)."""
    if chunk_id not in stats.term_freqs:
        raise UnknownChunk(f"chunk '{chunk_id}' is not indexed")
    tf_map = stats.term_freqs[chunk_id]
    length = stats.chunk_lengths[chunk_id]
    score = 0.0
    for term in query_terms:
        tf = tf_map.get(term, 0)
        if tf == 0:
            continue
        df = stats.doc_freq[term]
        idf = math.log((stats.n_chunks - df + 0.5) / (df + 0.5) + 1.0)
        norm_len = 1.0 - BM25_B + BM25_B * length / stats.avg_chunk_length
        score += idf * (tf * (BM25_K1 + 1.0)) / (tf + BM25_K1 * norm_len)
    return score


@dataclass(frozen=True)
class RetrievalQuery:
    text: str
    top_k: int = DEFAULT_TOP_K
    doc_kind_filter: frozenset[str] | None = None

    def __post_init__(self) -> None:
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")


@dataclass(frozen=True)
class Evidence:
    chunk_id: str
    doc_id: str
    rank: int
    lexical_score: float
    vector_score: float
    fused_score: float
    text: str


@dataclass(frozen=True)
class IndexedChunk:
    chunk_id: str
    doc_id: str
    kind: str
    text: str
    vector: EmbeddingVector


def _minmax_normalize(scores: dict[str, float], pool: list[str]) -> dict[str, float]:
    values = [scores[cid] for cid in pool]
    lo, hi = min(values), max(values)
    if hi == lo:
        flat = 1.0 if hi > 0 else 0.0
        return {cid: flat for cid in pool}
    return {cid: (scores[cid] - lo) / (hi - lo) for cid in pool}


class Index:
    """Immutable in-memory retrieval index over corpus chunks."""

    def __init__(self, entries: list[IndexedChunk], stats: LexicalStats, fingerprint: str):
        self.entries = list(entries)
        self.stats = stats
        self.fingerprint = fingerprint
        self._by_id = {e.chunk_id: e for e in self.entries}

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def build(
        cls, documents: Iterable[SourceDocument], chunks: Iterable[Chunk]
    ) -> "Index":
        """Index every embeddable chunk; chunks with no tokens are skipped."""
        documents = list(documents)
        kinds = {doc.doc_id: doc.kind for doc in documents}
        fingerprint = corpus_fingerprint(documents)
        entries: list[IndexedChunk] = []
        term_freqs: dict[str, Counter] = {}
        chunk_lengths: dict[str, int] = {}
        doc_freq: Counter = Counter()
        for chunk in sorted(chunks, key=lambda c: c.chunk_id):
            tokens = tokenize(chunk.text)
            if not tokens:
                continue
            entries.append(
                IndexedChunk(
                    chunk_id=chunk.chunk_id,
                    doc_id=chunk.doc_id,
                    kind=kinds.get(chunk.doc_id, ""),
                    text=chunk.text,
                    vector=embed_text(chunk.text),
                )
            )
            counts = Counter(tokens)
            term_freqs[chunk.chunk_id] = counts
            chunk_lengths[chunk.chunk_id] = len(tokens)
            doc_freq.update(counts.keys())
        n = len(entries)
        avg = sum(chunk_lengths.values()) / n if n else 0.0
        stats = LexicalStats(
            doc_freq=dict(doc_freq),
            term_freqs=term_freqs,
            chunk_lengths=chunk_lengths,
            avg_chunk_length=avg,
            n_chunks=n,
        )
        return cls(entries, stats, fingerprint)

    def get_chunk(self, chunk_id: str) -> IndexedChunk:
        try:
            return self._by_id[chunk_id]
        except KeyError:
            raise UnknownChunk(f"chunk '{chunk_id}' is not indexed") from None

    def retrieve(self, query: RetrievalQuery) -> list[Evidence]:
        """Top-k evidence by fused lexical+vector score.

        The candidate pool is the union of the top-2k chunks of each leg;
        each leg is min-max normalized inside the pool and fused with
        equal weight. Ties break on ascending chunk id.
        """
        tokens = tokenize(query.text)
        if not tokens:
            raise EmptyText("query has no alphanumeric tokens")
        candidates = [
            e
            for e in self.entries
            if query.doc_kind_filter is None or e.kind in query.doc_kind_filter
        ]
        if not candidates:
            raise EmptyIndex("no indexed chunk passes the query filter")

        query_vector = embed_text(query.text)
        lexical = {e.chunk_id: bm25_score(tokens, e.chunk_id, self.stats) for e in candidates}
        vector = {e.chunk_id: query_vector.dot(e.vector) for e in candidates}

        pool_depth = 2 * query.top_k
        ids = [e.chunk_id for e in candidates]
        top_lexical = sorted(ids, key=lambda c: (-lexical[c], c))[:pool_depth]
        top_vector = sorted(ids, key=lambda c: (-vector[c], c))[:pool_depth]
        pool = sorted(set(top_lexical) | set(top_vector))

        norm_lexical = _minmax_normalize(lexical, pool)
        norm_vector = _minmax_normalize(vector, pool)
        fused = {c: 0.5 * norm_lexical[c] + 0.5 * norm_vector[c] for c in pool}

        ranked = sorted(pool, key=lambda c: (-fused[c], c))[: query.top_k]
        return [
            Evidence(
                chunk_id=cid,
                doc_id=self._by_id[cid].doc_id,
                rank=i + 1,
                lexical_score=lexical[cid],
                vector_score=vector[cid],
                fused_score=fused[cid],
                text=self._by_id[cid].text,
            )
            for i, cid in enumerate(ranked)
        ]

    def save(self, path: str | Path) -> None:
        """Write a cache that round-trips bit-exactly through load()."""
        payload = {
            "version": CACHE_FORMAT_VERSION,
            "fingerprint": self.fingerprint,
            "dim": EMBED_DIM,
            "doc_freq": self.stats.doc_freq,
            "avg_chunk_length": self.stats.avg_chunk_length,
            "entries": [
                {
                    "chunk_id": e.chunk_id,
                    "doc_id": e.doc_id,
                    "kind": e.kind,
                    "text": e.text,
                    "length": self.stats.chunk_lengths[e.chunk_id],
                    "tf": dict(self.stats.term_freqs[e.chunk_id]),
                    "vector": list(e.vector.values),
                }
                for e in self.entries
            ],
        }
        Path(path).write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Index":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("version") != CACHE_FORMAT_VERSION or payload.get("dim") != EMBED_DIM:
            raise ValueError("incompatible index cache format")
        entries = [
            IndexedChunk(
                chunk_id=item["chunk_id"],
                doc_id=item["doc_id"],
                kind=item["kind"],
                text=item["text"],
                vector=EmbeddingVector(tuple(item["vector"])),
            )
            for item in payload["entries"]
        ]
        stats = LexicalStats(
            doc_freq=payload["doc_freq"],
            term_freqs={item["chunk_id"]: Counter(item["tf"]) for item in payload["entries"]},
            chunk_lengths={item["chunk_id"]: item["length"] for item in payload["entries"]},
            avg_chunk_length=payload["avg_chunk_length"],
            n_chunks=len(entries),
        )
        return cls(entries, stats, payload["fingerprint"])


def corpus_fingerprint(documents: Iterable[SourceDocument]) -> str:
    """Stable digest of (doc_id, checksum) pairs; drives cache invalidation."""
    parts = sorted(f"{d.doc_id}:{d.checksum:016x}" for d in documents)
    return f"{fnv1a64_text(';'.join(parts)):016x}"

"""Corpus ingestion and chunking.

Documents arrive as front-matter text files, are normalized, checksummed,
and split into retrieval chunks. Chunking is deterministic: same file
bytes and policy always produce identical chunks.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import (
    DuplicateDocIdWithDifferentChecksum,
    EmptyBody,
    MissingFrontMatter,
    UnknownKind,
)
from .textops import estimate_tokens, fnv1a64_text, normalize_body, slugify

DOC_KINDS = ("survey", "tool-documentation", "guideline", "empirical-study")

_DOC_ID_RE = re.compile(r"^[a-z0-9-]+$")
_PARAGRAPH_SEP_RE = re.compile(r"\n{2,}")
_SENTENCE_CUT_RE = re.compile(r"[.!?]\s")


@dataclass(frozen=True)
class SourceDocument:
    doc_id: str
    title: str
    authors: tuple[str, ...]
    year: int
    kind: str
    body: str
    checksum: int


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    ordinal: int
    text: str
    char_start: int
    char_end: int
    token_estimate: int


@dataclass(frozen=True)
class ChunkingPolicy:
    """Splitting prefers paragraph breaks, then sentence ends, then a hard
    cut; overlap applies only to hard cuts, where no natural boundary
    exists."""

    max_chunk_tokens: int = 256
    overlap_tokens: int = 32

    def __post_init__(self) -> None:
        if not 0 <= self.overlap_tokens < self.max_chunk_tokens:
            raise ValueError(
                "require 0 <= overlap_tokens < max_chunk_tokens, got "
                f"{self.overlap_tokens}/{self.max_chunk_tokens}"
            )

    @property
    def max_chars(self) -> int:
        return self.max_chunk_tokens * 4

    @property
    def overlap_chars(self) -> int:
        return self.overlap_tokens * 4


def chunk_id_for(doc_id: str, ordinal: int) -> str:
    return f"{doc_id}#{ordinal:04d}"


def parse_front_matter(text: str) -> tuple[dict[str, str], str]:
    """Split a ``---``-delimited front-matter block from the body.

    Returns (metadata, raw body). Raises MissingFrontMatter when the block
    is absent or unterminated.
    """
    lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    if not lines or lines[0].strip() != "---":
        raise MissingFrontMatter("file must start with a '---' front-matter line")
    meta: dict[str, str] = {}
    for i, line in enumerate(lines[1:], start=1):
        if line.strip() == "---":
            body = "\n".join(lines[i + 1 :])
            return meta, body
        if not line.strip():
            continue
        if ":" not in line:
            raise MissingFrontMatter(f"malformed front-matter line: {line!r}")
        key, value = line.split(":", 1)
        meta[key.strip().lower()] = value.strip()
    raise MissingFrontMatter("front-matter block never closed with '---'")


def parse_document(text: str) -> SourceDocument:
    """Build a SourceDocument from front-matter file contents."""
    meta, raw_body = parse_front_matter(text)

    for key in ("title", "authors", "year", "kind"):
        if not meta.get(key):
            raise MissingFrontMatter(f"front matter is missing required key '{key}'")

    kind = meta["kind"]
    if kind not in DOC_KINDS:
        raise UnknownKind(f"unknown kind '{kind}'; expected one of {', '.join(DOC_KINDS)}")

    try:
        year = int(meta["year"])
    except ValueError:
        raise MissingFrontMatter(f"year must be an integer, got {meta['year']!r}") from None

    authors = tuple(a.strip() for a in meta["authors"].split(",") if a.strip())
    if not authors:
        raise MissingFrontMatter("authors must list at least one name")

    body = normalize_body(raw_body)
    if not body:
        raise EmptyBody("document body is empty after whitespace normalization")

    doc_id = meta.get("doc_id") or slugify(meta["title"])
    if not _DOC_ID_RE.match(doc_id):
        raise MissingFrontMatter(f"doc_id must match [a-z0-9-]+, got {doc_id!r}")

    return SourceDocument(
        doc_id=doc_id,
        title=meta["title"],
        authors=authors,
        year=year,
        kind=kind,
        body=body,
        checksum=fnv1a64_text(body),
    )


@dataclass
class Corpus:
    """In-memory document registry with idempotent ingestion."""

    documents: dict[str, SourceDocument] = field(default_factory=dict)

    def ingest(self, text: str) -> SourceDocument:
        doc = parse_document(text)
        existing = self.documents.get(doc.doc_id)
        if existing is not None:
            if existing.checksum != doc.checksum:
                raise DuplicateDocIdWithDifferentChecksum(
                    f"document '{doc.doc_id}' already ingested with different content"
                )
            return existing
        self.documents[doc.doc_id] = doc
        return doc

    def get(self, doc_id: str) -> SourceDocument:
        return self.documents[doc_id]

    def __len__(self) -> int:
        return len(self.documents)


def _find_cut(body: str, pos: int, window_end: int) -> tuple[int, bool]:
    """Best cut point in (pos, window_end]; True when it was a hard cut."""
    best_para = -1
    for match in _PARAGRAPH_SEP_RE.finditer(body, pos, window_end + 1):
        if pos < match.end() <= window_end:
            best_para = match.end()
    if best_para > 0:
        return best_para, False

    best_sent = -1
    for match in _SENTENCE_CUT_RE.finditer(body, pos, window_end + 1):
        if pos < match.end() <= window_end:
            best_sent = match.end()
    if best_sent > 0:
        return best_sent, False

    return window_end, True


def chunk_document(doc: SourceDocument, policy: ChunkingPolicy | None = None) -> list[Chunk]:
    """Split a document body into overlapping retrieval chunks.

    A body that fits one chunk yields exactly one chunk; spans always
    cover the whole body and every chunk respects the policy's token cap.
    """
    policy = policy or ChunkingPolicy()
    body = doc.body
    chunks: list[Chunk] = []
    pos = 0
    ordinal = 0
    while True:
        if len(body) - pos <= policy.max_chars:
            chunks.append(_make_chunk(doc.doc_id, ordinal, body, pos, len(body)))
            break
        cut, hard = _find_cut(body, pos, pos + policy.max_chars)
        chunks.append(_make_chunk(doc.doc_id, ordinal, body, pos, cut))
        pos = cut - policy.overlap_chars if hard else cut
        ordinal += 1
    return chunks


def _make_chunk(doc_id: str, ordinal: int, body: str, start: int, end: int) -> Chunk:
    text = body[start:end]
    return Chunk(
        chunk_id=chunk_id_for(doc_id, ordinal),
        doc_id=doc_id,
        ordinal=ordinal,
        text=text,
        char_start=start,
        char_end=end,
        token_estimate=estimate_tokens(text),
    )


def reconstruct_body(chunks: list[Chunk]) -> str:
    """Drop overlap windows and concatenate chunk texts back into the body."""
    pieces: list[str] = []
    prev_end = 0
    for chunk in sorted(chunks, key=lambda c: c.ordinal):
        skip = prev_end - chunk.char_start
        pieces.append(chunk.text[skip:] if skip > 0 else chunk.text)
        prev_end = chunk.char_end
    return "".join(pieces)

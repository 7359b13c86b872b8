"""Small deterministic text primitives used across the pipeline.

Everything here is bit-exact by construction: the content hash, the token
estimator, and the tokenizer are shared by the corpus, the index, the
prompt assembler, and the mock provider, so all layers agree on the same
numbers.
"""

from __future__ import annotations

import re

FNV_OFFSET_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_SENTENCE_END_RE = re.compile(r"[.!?]")
_SLUG_STRIP_RE = re.compile(r"[^a-z0-9]+")


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash of raw bytes."""
    h = FNV_OFFSET_BASIS
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def fnv1a64_text(text: str) -> int:
    return fnv1a64(text.encode("utf-8"))


def estimate_tokens(text: str) -> int:
    """Token estimate fixed as ceil(chars/4); tokenizer-free and exact."""
    return -(-len(text) // 4)


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric word tokens."""
    return _TOKEN_RE.findall(text.lower())


def slugify(text: str) -> str:
    slug = _SLUG_STRIP_RE.sub("-", text.lower()).strip("-")
    return slug


def normalize_body(text: str) -> str:
    """Canonical body form: LF line endings, outer whitespace stripped."""
    return text.replace("\r\n", "\n").replace("\r", "\n").strip()


def first_sentence(text: str) -> str:
    """Text up to and including the first sentence terminator."""
    stripped = text.strip()
    match = _SENTENCE_END_RE.search(stripped)
    if match is None:
        return stripped
    return stripped[: match.end()].strip()

from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bita.config import AppConfig
from bita.corpus import ChunkingPolicy, chunk_document, parse_document
from bita.index import Index
from bita.store import Store
from bita.tasks import Assistant

REPO_ROOT = Path(__file__).resolve().parent.parent
SAMPLE_CORPUS_DIR = REPO_ROOT / "sample_corpus"
FIXTURES_DIR = REPO_ROOT / "fixtures"


def make_document(doc_id: str, body: str, kind: str = "survey", title: str | None = None):
    text = (
        "---\n"
        f"title: {title or doc_id}\n"
        "authors: Test Author\n"
        "year: 2024\n"
        f"kind: {kind}\n"
        f"doc_id: {doc_id}\n"
        "---\n"
        f"{body}\n"
    )
    return parse_document(text)


def build_index_from_texts(texts: dict[str, str]) -> Index:
    """Index over one single-chunk document per (doc_id, body) entry."""
    docs = [make_document(doc_id, body) for doc_id, body in texts.items()]
    chunks = [c for doc in docs for c in chunk_document(doc, ChunkingPolicy())]
    return Index.build(docs, chunks)


@pytest.fixture()
def tmp_config(tmp_path) -> AppConfig:
    config = AppConfig()
    config.store_path = str(tmp_path / "bita.db")
    config.corpus_dir = str(SAMPLE_CORPUS_DIR)
    return config


@pytest.fixture()
def assistant(tmp_config) -> Assistant:
    """Assistant over the shipped sample corpus, mock provider, tmp store."""
    helper = Assistant(tmp_config)
    helper.sync_corpus_dir()
    return helper


@pytest.fixture()
def empty_store(tmp_path) -> Store:
    return Store(tmp_path / "empty.db")

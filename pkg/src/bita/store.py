"""Relational persistence for corpus, sessions, messages, and artifacts.

Backed by an embedded single-file SQLite database. Artifacts (system
descriptions and test plans) are versioned, never overwritten; every
message's evidence ids are checked against stored chunks, so replay can
always resolve citations from storage alone.
"""

from __future__ import annotations

import json
import sqlite3
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable

from .corpus import Chunk, SourceDocument
from .errors import (
    DuplicateDocIdWithDifferentChecksum,
    StorageFailure,
    UnknownChunk,
    UnknownSession,
)
from .schemas import SystemDescription, TestCase, TestPlan, describe_plan, describe_system
from .textops import estimate_tokens

HISTORY_BUDGET_SHARE = 0.4

MESSAGE_ROLES = ("user", "assistant", "system-note")

_MIGRATIONS = [
    """
    CREATE TABLE documents (
        doc_id TEXT PRIMARY KEY,
        title TEXT NOT NULL,
        authors TEXT NOT NULL,
        year INTEGER NOT NULL,
        kind TEXT NOT NULL,
        body TEXT NOT NULL,
        checksum TEXT NOT NULL
    );
    CREATE TABLE chunks (
        chunk_id TEXT PRIMARY KEY,
        doc_id TEXT NOT NULL REFERENCES documents(doc_id),
        ordinal INTEGER NOT NULL,
        text TEXT NOT NULL,
        char_start INTEGER NOT NULL,
        char_end INTEGER NOT NULL,
        token_estimate INTEGER NOT NULL
    );
    CREATE TABLE sessions (
        session_id TEXT PRIMARY KEY,
        created_at TEXT NOT NULL,
        title TEXT NOT NULL
    );
    CREATE TABLE artifacts (
        artifact_id INTEGER PRIMARY KEY AUTOINCREMENT,
        session_id TEXT NOT NULL REFERENCES sessions(session_id),
        kind TEXT NOT NULL,
        version INTEGER NOT NULL,
        payload TEXT NOT NULL,
        created_at TEXT NOT NULL,
        UNIQUE(session_id, kind, version)
    );
    CREATE TABLE messages (
        message_id TEXT PRIMARY KEY,
        session_id TEXT NOT NULL REFERENCES sessions(session_id),
        seq INTEGER NOT NULL,
        role TEXT NOT NULL,
        task_kind TEXT,
        content TEXT NOT NULL,
        created_at TEXT NOT NULL,
        feedback TEXT,
        UNIQUE(session_id, seq)
    );
    CREATE TABLE evidence_links (
        message_id TEXT NOT NULL REFERENCES messages(message_id),
        chunk_id TEXT NOT NULL REFERENCES chunks(chunk_id),
        position INTEGER NOT NULL,
        PRIMARY KEY(message_id, position)
    );
    """,
]


@dataclass(frozen=True)
class Session:
    session_id: str
    created_at: str
    title: str


@dataclass(frozen=True)
class Message:
    message_id: str
    session_id: str
    seq: int
    role: str
    content: str
    created_at: str
    task_kind: str | None = None
    evidence_ids: tuple[str, ...] = ()
    feedback: str | None = None


class Store:
    """SQLite-backed store; safe for concurrent sessions.

    Writes within one session are serialized by a per-session lock; all
    statements go through a short global lock around the shared connection.
    """

    def __init__(self, path: str | Path):
        self.path = str(path)
        try:
            self._conn = sqlite3.connect(self.path, check_same_thread=False)
        except sqlite3.Error as exc:
            raise StorageFailure(f"cannot open store at {self.path}: {exc}") from exc
        self._conn.execute("PRAGMA foreign_keys = ON")
        self._lock = threading.RLock()
        self._session_locks: dict[str, threading.RLock] = {}
        self._session_locks_guard = threading.Lock()
        self._migrate()

    def close(self) -> None:
        self._conn.close()

    def _migrate(self) -> None:
        with self._lock:
            self._conn.execute(
                "CREATE TABLE IF NOT EXISTS schema_version (version INTEGER NOT NULL)"
            )
            row = self._conn.execute("SELECT version FROM schema_version").fetchone()
            version = row[0] if row else 0
            for script in _MIGRATIONS[version:]:
                self._conn.executescript(script)
                version += 1
            self._conn.execute("DELETE FROM schema_version")
            self._conn.execute("INSERT INTO schema_version (version) VALUES (?)", (version,))
            self._conn.commit()

    def session_lock(self, session_id: str) -> threading.RLock:
        with self._session_locks_guard:
            lock = self._session_locks.get(session_id)
            if lock is None:
                lock = threading.RLock()
                self._session_locks[session_id] = lock
            return lock

    # --- corpus ---------------------------------------------------------------

    def add_document(
        self, doc: SourceDocument, chunks: Iterable[Chunk]
    ) -> tuple[SourceDocument, bool]:
        """Persist a document with its chunks; idempotent on identical content.

        Returns (document, created). Re-adding the same content is a no-op;
        the same doc_id with different content is an error.
        """
        with self._lock:
            row = self._conn.execute(
                "SELECT checksum FROM documents WHERE doc_id = ?", (doc.doc_id,)
            ).fetchone()
            if row is not None:
                if row[0] != f"{doc.checksum:016x}":
                    raise DuplicateDocIdWithDifferentChecksum(
                        f"document '{doc.doc_id}' already stored with different content"
                    )
                return self.get_document(doc.doc_id), False
            self._conn.execute(
                "INSERT INTO documents (doc_id, title, authors, year, kind, body, checksum)"
                " VALUES (?, ?, ?, ?, ?, ?, ?)",
                (
                    doc.doc_id,
                    doc.title,
                    json.dumps(list(doc.authors), ensure_ascii=False),
                    doc.year,
                    doc.kind,
                    doc.body,
                    f"{doc.checksum:016x}",
                ),
            )
            self._conn.executemany(
                "INSERT INTO chunks (chunk_id, doc_id, ordinal, text, char_start,"
                " char_end, token_estimate) VALUES (?, ?, ?, ?, ?, ?, ?)",
                [
                    (c.chunk_id, c.doc_id, c.ordinal, c.text, c.char_start, c.char_end, c.token_estimate)
                    for c in chunks
                ],
            )
            self._conn.commit()
            return doc, True

    def list_documents(self) -> list[SourceDocument]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT doc_id, title, authors, year, kind, body, checksum"
                " FROM documents ORDER BY doc_id"
            ).fetchall()
        return [self._document_from_row(row) for row in rows]

    def get_document(self, doc_id: str) -> SourceDocument:
        with self._lock:
            row = self._conn.execute(
                "SELECT doc_id, title, authors, year, kind, body, checksum"
                " FROM documents WHERE doc_id = ?",
                (doc_id,),
            ).fetchone()
        if row is None:
            raise StorageFailure(f"no document '{doc_id}'")
        return self._document_from_row(row)

    @staticmethod
    def _document_from_row(row) -> SourceDocument:
        return SourceDocument(
            doc_id=row[0],
            title=row[1],
            authors=tuple(json.loads(row[2])),
            year=row[3],
            kind=row[4],
            body=row[5],
            checksum=int(row[6], 16),
        )

    def all_chunks(self) -> list[Chunk]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT chunk_id, doc_id, ordinal, text, char_start, char_end,"
                " token_estimate FROM chunks ORDER BY doc_id, ordinal"
            ).fetchall()
        return [Chunk(*row) for row in rows]

    def get_chunk_with_doc(self, chunk_id: str) -> tuple[Chunk, SourceDocument]:
        with self._lock:
            row = self._conn.execute(
                "SELECT chunk_id, doc_id, ordinal, text, char_start, char_end,"
                " token_estimate FROM chunks WHERE chunk_id = ?",
                (chunk_id,),
            ).fetchone()
        if row is None:
            raise UnknownChunk(f"no stored chunk '{chunk_id}'")
        chunk = Chunk(*row)
        return chunk, self.get_document(chunk.doc_id)

    # --- sessions and messages --------------------------------------------------

    def create_session(self, title: str) -> Session:
        session = Session(
            session_id=str(uuid.uuid4()),
            created_at=_utc_now_iso(),
            title=title,
        )
        with self._lock:
            self._conn.execute(
                "INSERT INTO sessions (session_id, created_at, title) VALUES (?, ?, ?)",
                (session.session_id, session.created_at, session.title),
            )
            self._conn.commit()
        return session

    def get_session(self, session_id: str) -> Session:
        with self._lock:
            row = self._conn.execute(
                "SELECT session_id, created_at, title FROM sessions WHERE session_id = ?",
                (session_id,),
            ).fetchone()
        if row is None:
            raise UnknownSession(f"no session '{session_id}'")
        return Session(*row)

    def list_sessions(self) -> list[tuple[Session, int]]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT s.session_id, s.created_at, s.title, COUNT(m.message_id)"
                " FROM sessions s LEFT JOIN messages m ON m.session_id = s.session_id"
                " GROUP BY s.session_id ORDER BY s.created_at, s.session_id"
            ).fetchall()
        return [(Session(r[0], r[1], r[2]), r[3]) for r in rows]

    def append_message(
        self,
        session_id: str,
        role: str,
        content: str,
        task_kind: str | None = None,
        evidence_ids: Iterable[str] = (),
        feedback: str | None = None,
    ) -> Message:
        """Durably append a message; seq numbers stay contiguous per session."""
        if role not in MESSAGE_ROLES:
            raise StorageFailure(f"unknown message role '{role}'")
        evidence_ids = tuple(evidence_ids)
        with self.session_lock(session_id):
            self.get_session(session_id)
            self._require_chunks(evidence_ids)
            with self._lock:
                row = self._conn.execute(
                    "SELECT COALESCE(MAX(seq) + 1, 0), MAX(created_at) FROM messages"
                    " WHERE session_id = ?",
                    (session_id,),
                ).fetchone()
                seq = row[0]
                created_at = _monotone_timestamp(row[1])
                message = Message(
                    message_id=str(uuid.uuid4()),
                    session_id=session_id,
                    seq=seq,
                    role=role,
                    content=content,
                    created_at=created_at,
                    task_kind=task_kind,
                    evidence_ids=evidence_ids,
                    feedback=feedback,
                )
                self._conn.execute(
                    "INSERT INTO messages (message_id, session_id, seq, role, task_kind,"
                    " content, created_at, feedback) VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
                    (
                        message.message_id,
                        message.session_id,
                        message.seq,
                        message.role,
                        message.task_kind,
                        message.content,
                        message.created_at,
                        message.feedback,
                    ),
                )
                self._conn.executemany(
                    "INSERT INTO evidence_links (message_id, chunk_id, position)"
                    " VALUES (?, ?, ?)",
                    [(message.message_id, cid, i) for i, cid in enumerate(evidence_ids)],
                )
                self._conn.commit()
        return message

    def _require_chunks(self, chunk_ids: tuple[str, ...]) -> None:
        for cid in chunk_ids:
            with self._lock:
                row = self._conn.execute(
                    "SELECT 1 FROM chunks WHERE chunk_id = ?", (cid,)
                ).fetchone()
            if row is None:
                raise UnknownChunk(f"message references unknown evidence id '{cid}'")

    def messages(self, session_id: str) -> list[Message]:
        self.get_session(session_id)
        with self._lock:
            rows = self._conn.execute(
                "SELECT message_id, session_id, seq, role, task_kind, content,"
                " created_at, feedback FROM messages WHERE session_id = ? ORDER BY seq",
                (session_id,),
            ).fetchall()
            links = self._conn.execute(
                "SELECT message_id, chunk_id FROM evidence_links WHERE message_id IN"
                f" ({','.join('?' * len(rows))}) ORDER BY message_id, position",
                [r[0] for r in rows],
            ).fetchall() if rows else []
        by_message: dict[str, list[str]] = {}
        for message_id, chunk_id in links:
            by_message.setdefault(message_id, []).append(chunk_id)
        return [
            Message(
                message_id=r[0],
                session_id=r[1],
                seq=r[2],
                role=r[3],
                task_kind=r[4],
                content=r[5],
                created_at=r[6],
                feedback=r[7],
                evidence_ids=tuple(by_message.get(r[0], ())),
            )
            for r in rows
        ]

    # --- artifacts ---------------------------------------------------------------

    def set_artifact(self, session_id: str, kind: str, payload: dict) -> int:
        """Store a new artifact version; prior versions are retained."""
        if kind not in ("system", "plan"):
            raise StorageFailure(f"unknown artifact kind '{kind}'")
        with self.session_lock(session_id):
            self.get_session(session_id)
            with self._lock:
                row = self._conn.execute(
                    "SELECT COALESCE(MAX(version) + 1, 1) FROM artifacts"
                    " WHERE session_id = ? AND kind = ?",
                    (session_id, kind),
                ).fetchone()
                version = row[0]
                self._conn.execute(
                    "INSERT INTO artifacts (session_id, kind, version, payload, created_at)"
                    " VALUES (?, ?, ?, ?, ?)",
                    (
                        session_id,
                        kind,
                        version,
                        json.dumps(payload, ensure_ascii=False),
                        _utc_now_iso(),
                    ),
                )
                self._conn.commit()
        return version

    def current_artifact(self, session_id: str, kind: str) -> tuple[int, dict] | None:
        self.get_session(session_id)
        with self._lock:
            row = self._conn.execute(
                "SELECT version, payload FROM artifacts WHERE session_id = ? AND kind = ?"
                " ORDER BY version DESC LIMIT 1",
                (session_id, kind),
            ).fetchone()
        if row is None:
            return None
        return row[0], json.loads(row[1])

    def has_artifacts(self, session_id: str) -> bool:
        self.get_session(session_id)
        with self._lock:
            row = self._conn.execute(
                "SELECT 1 FROM artifacts WHERE session_id = ? LIMIT 1", (session_id,)
            ).fetchone()
        return row is not None

    def current_system(self, session_id: str) -> SystemDescription | None:
        found = self.current_artifact(session_id, "system")
        if found is None:
            return None
        return system_from_payload(found[1])

    def current_plan(self, session_id: str) -> TestPlan | None:
        found = self.current_artifact(session_id, "plan")
        if found is None:
            return None
        return plan_from_payload(found[1])

    # --- context and replay --------------------------------------------------------

    def load_context(self, session_id: str, budget: int) -> tuple[list[str], list[Message]]:
        """Artifact summaries plus the newest messages fitting the history
        share of the budget, returned in chronological order."""
        summaries: list[str] = []
        sysdesc = self.current_system(session_id)
        if sysdesc is not None:
            summaries.append(describe_system(sysdesc))
        plan = self.current_plan(session_id)
        if plan is not None:
            summaries.append(describe_plan(plan))

        history_budget = int(budget * HISTORY_BUDGET_SHARE)
        kept: list[Message] = []
        used = 0
        for message in reversed(self.messages(session_id)):
            cost = estimate_tokens(message.content)
            if used + cost > history_budget:
                break
            kept.append(message)
            used += cost
        kept.reverse()
        return summaries, kept

    def replay(self, session_id: str) -> str:
        """Render the full transcript from storage alone; byte-stable."""
        session = self.get_session(session_id)
        lines = [
            f"# Session {session.session_id} — {session.title}",
            f"Created: {session.created_at}",
        ]
        for message in self.messages(session_id):
            suffix = f" (task: {message.task_kind})" if message.task_kind else ""
            lines.append("")
            lines.append(f"## Turn {message.seq} — {message.role}{suffix}")
            lines.append(message.content)
            if message.evidence_ids:
                lines.append("")
                lines.append("Evidence:")
                for cid in message.evidence_ids:
                    chunk, doc = self.get_chunk_with_doc(cid)
                    lines.append(f"- [{cid}] {doc.title}: {chunk.text}")
        return "\n".join(lines) + "\n"


def system_from_payload(payload: dict) -> SystemDescription:
    return SystemDescription(
        name=payload["name"],
        purpose=payload["purpose"],
        inputs=tuple(payload["inputs"]),
        outputs=tuple(payload["outputs"]),
        target_users=tuple(payload.get("target_users", ())),
        context_notes=payload.get("context_notes"),
    )


def plan_from_payload(payload: dict) -> TestPlan:
    return TestPlan(
        plan_id=payload["plan_id"],
        cases=tuple(
            TestCase(
                case_id=c["case_id"],
                title=c["title"],
                steps=tuple(c.get("steps", ())),
                attributes_covered=tuple(c.get("attributes_covered", ())),
            )
            for c in payload["cases"]
        ),
    )


def _utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


def _monotone_timestamp(previous: str | None) -> str:
    """Real clock, nudged forward so per-session timestamps never regress."""
    now = datetime.now(timezone.utc)
    if previous is not None:
        prev = datetime.fromisoformat(previous)
        if now <= prev:
            now = prev + timedelta(microseconds=1)
    return now.isoformat(timespec="microseconds")

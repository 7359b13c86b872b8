"""HTTP API over the assistant pipeline, consumed by the web client.

All endpoints live under /api/v1 and exchange JSON. Guardrail refusals on
chat are successful outcomes (HTTP 200 with a refusal payload), not
transport errors; every failing response carries exactly one error object
with a stable code.
"""

from __future__ import annotations

from contextlib import asynccontextmanager
from dataclasses import asdict
from pathlib import Path
from typing import Any

import uvicorn
from fastapi import APIRouter, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, model_validator

from .config import AppConfig
from .errors import (
    BindFailure,
    BitaError,
    ConfigInvalid,
    ContextOverflow,
    CountOutOfRange,
    GuardrailRefused,
    InvalidArtifact,
    MissingCredentials,
    ProviderRejected,
    ProviderTimeout,
    SchemaParseFailure,
    UngroundedOutput,
    UnknownChunk,
    UnknownProviderKind,
    UnknownSession,
)
from .schemas import SystemDescription, TestCase, TestPlan
from .store import Message
from .tasks import Assistant

_ERROR_STATUS: list[tuple[type[BitaError], int, str]] = [
    (UnknownSession, 404, "unknown-session"),
    (UnknownChunk, 404, "schema-invalid"),
    (InvalidArtifact, 422, "schema-invalid"),
    (CountOutOfRange, 422, "schema-invalid"),
    (GuardrailRefused, 403, "guardrail-refused"),
    (UngroundedOutput, 502, "ungrounded-output"),
    (SchemaParseFailure, 502, "provider-error"),
    (ProviderTimeout, 502, "provider-error"),
    (ProviderRejected, 502, "provider-error"),
    (ContextOverflow, 502, "provider-error"),
    (MissingCredentials, 502, "provider-error"),
    (UnknownProviderKind, 422, "schema-invalid"),
]


# --- request / response models -------------------------------------------------


class CreateSessionRequest(BaseModel):
    title: str = "Untitled session"


class SessionModel(BaseModel):
    session_id: str
    created_at: str
    title: str
    message_count: int = 0


class MessageModel(BaseModel):
    message_id: str
    session_id: str
    seq: int
    role: str
    content: str
    created_at: str
    task_kind: str | None = None
    evidence_ids: list[str] = Field(default_factory=list)


class EvidenceModel(BaseModel):
    chunk_id: str
    doc_id: str
    rank: int
    lexical_score: float
    vector_score: float
    fused_score: float
    text: str


class ChatRequest(BaseModel):
    text: str
    provider_kind: str | None = None


class ChatResponse(BaseModel):
    refused: bool
    reason: str | None = None
    message: MessageModel | None = None
    evidence: list[EvidenceModel] = Field(default_factory=list)


class SystemDescriptionModel(BaseModel):
    name: str = Field(min_length=1)
    purpose: str = Field(min_length=1)
    inputs: list[str] = Field(min_length=1)
    outputs: list[str] = Field(min_length=1)
    target_users: list[str] = Field(default_factory=list)
    context_notes: str | None = None

    def to_domain(self) -> SystemDescription:
        return SystemDescription(
            name=self.name,
            purpose=self.purpose,
            inputs=tuple(self.inputs),
            outputs=tuple(self.outputs),
            target_users=tuple(self.target_users),
            context_notes=self.context_notes,
        )


class TestCaseModel(BaseModel):
    case_id: str = Field(min_length=1)
    title: str = Field(min_length=1)
    steps: list[str] = Field(default_factory=list)
    attributes_covered: list[str] = Field(default_factory=list)


class TestPlanModel(BaseModel):
    plan_id: str = Field(min_length=1)
    cases: list[TestCaseModel] = Field(min_length=1)

    @model_validator(mode="after")
    def unique_case_ids(self) -> "TestPlanModel":
        ids = [c.case_id for c in self.cases]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise ValueError(f"duplicate case_ids: {', '.join(dupes)}")
        return self

    def to_domain(self) -> TestPlan:
        return TestPlan(
            plan_id=self.plan_id,
            cases=tuple(
                TestCase(
                    case_id=c.case_id,
                    title=c.title,
                    steps=tuple(c.steps),
                    attributes_covered=tuple(c.attributes_covered),
                )
                for c in self.cases
            ),
        )


class ArtifactResponse(BaseModel):
    kind: str
    version: int


class TaskRequest(BaseModel):
    provider_kind: str | None = None


class ChartersRequest(BaseModel):
    count: int = Field(ge=1, le=10)
    provider_kind: str | None = None


class FindingModel(BaseModel):
    category: str
    description: str
    affected_groups: list[str]
    severity: str
    evidence_ids: list[str]


class GapModel(BaseModel):
    gap_kind: str
    description: str
    related_case_ids: list[str]
    suggested_cases: list[str]
    evidence_ids: list[str]


class CharterModel(BaseModel):
    mission: str
    target_areas: list[str]
    fairness_risks: list[str]
    resources_setup: list[str]
    guiding_questions: list[str]
    timebox_minutes: int
    evidence_ids: list[str]


class BiasDetectResponse(BaseModel):
    findings: list[FindingModel]
    evidence: list[EvidenceModel]
    message: MessageModel


class PlanCheckResponse(BaseModel):
    gaps: list[GapModel]
    evidence: list[EvidenceModel]
    message: MessageModel


class ChartersResponse(BaseModel):
    charters: list[CharterModel]
    evidence: list[EvidenceModel]
    message: MessageModel


class SessionDetailResponse(BaseModel):
    session: SessionModel
    messages: list[MessageModel]


class SessionListResponse(BaseModel):
    sessions: list[SessionModel]


class ReplayResponse(BaseModel):
    transcript: str


class EvidenceDetailResponse(BaseModel):
    chunk_id: str
    doc_id: str
    doc_title: str
    doc_kind: str
    ordinal: int
    text: str


def _message_model(message: Message) -> MessageModel:
    return MessageModel(
        message_id=message.message_id,
        session_id=message.session_id,
        seq=message.seq,
        role=message.role,
        content=message.content,
        created_at=message.created_at,
        task_kind=message.task_kind,
        evidence_ids=list(message.evidence_ids),
    )


def _error_response(status: int, code: str, message: str, details: Any = None) -> JSONResponse:
    body: dict[str, Any] = {"error": {"code": code, "message": message}}
    if details is not None:
        body["error"]["details"] = details
    return JSONResponse(status_code=status, content=body)


def create_app(config: AppConfig, assistant: Assistant | None = None) -> FastAPI:
    """Build the API app; the index is ready before the app reports healthy."""
    assistant = assistant or Assistant(config)
    state = {"ready": False}

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        assistant.sync_corpus_dir()
        assistant.ensure_index()
        state["ready"] = True
        yield

    app = FastAPI(title="bita", lifespan=lifespan)
    app.state.assistant = assistant
    if config.cors_origin:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=[config.cors_origin],
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.exception_handler(BitaError)
    async def bita_error_handler(_request: Request, exc: BitaError):
        for exc_type, status, code in _ERROR_STATUS:
            if isinstance(exc, exc_type):
                return _error_response(status, code, str(exc))
        return _error_response(500, "internal", str(exc))

    @app.exception_handler(RequestValidationError)
    async def validation_error_handler(_request: Request, exc: RequestValidationError):
        details = [
            {"loc": [str(part) for part in err.get("loc", ())], "msg": str(err.get("msg", ""))}
            for err in exc.errors()
        ]
        return _error_response(422, "schema-invalid", "request body failed validation", details)

    @app.exception_handler(Exception)
    async def fallback_error_handler(_request: Request, exc: Exception):
        return _error_response(500, "internal", f"unexpected failure: {exc}")

    api = APIRouter(prefix="/api/v1")

    @api.get("/healthz")
    def healthz():
        if not state["ready"]:
            return JSONResponse(status_code=503, content={"status": "starting"})
        return {"status": "ready", "indexed_chunks": len(assistant.ensure_index())}

    @api.post("/sessions", response_model=SessionModel)
    def create_session(body: CreateSessionRequest):
        session = assistant.create_session(body.title)
        return SessionModel(
            session_id=session.session_id,
            created_at=session.created_at,
            title=session.title,
        )

    @api.get("/sessions", response_model=SessionListResponse)
    def list_sessions():
        return SessionListResponse(
            sessions=[
                SessionModel(
                    session_id=s.session_id,
                    created_at=s.created_at,
                    title=s.title,
                    message_count=count,
                )
                for s, count in assistant.store.list_sessions()
            ]
        )

    @api.get("/sessions/{session_id}", response_model=SessionDetailResponse)
    def get_session(session_id: str):
        session = assistant.store.get_session(session_id)
        messages = assistant.store.messages(session_id)
        return SessionDetailResponse(
            session=SessionModel(
                session_id=session.session_id,
                created_at=session.created_at,
                title=session.title,
                message_count=len(messages),
            ),
            messages=[_message_model(m) for m in messages],
        )

    @api.post("/sessions/{session_id}/messages", response_model=ChatResponse)
    def post_message(session_id: str, body: ChatRequest):
        outcome = assistant.chat(session_id, body.text, provider_kind=body.provider_kind)
        return ChatResponse(
            refused=outcome.refused,
            reason=outcome.reason,
            message=_message_model(outcome.message) if outcome.message else None,
            evidence=[EvidenceModel(**asdict(ev)) for ev in outcome.evidence],
        )

    @api.put("/sessions/{session_id}/system", response_model=ArtifactResponse)
    def put_system(session_id: str, body: SystemDescriptionModel):
        version = assistant.set_system(session_id, body.to_domain())
        return ArtifactResponse(kind="system", version=version)

    @api.put("/sessions/{session_id}/plan", response_model=ArtifactResponse)
    def put_plan(session_id: str, body: TestPlanModel):
        version = assistant.set_plan(session_id, body.to_domain())
        return ArtifactResponse(kind="plan", version=version)

    @api.post("/sessions/{session_id}/tasks/bias-detect", response_model=BiasDetectResponse)
    def run_bias_detect(session_id: str, body: TaskRequest | None = None):
        body = body or TaskRequest()
        result = assistant.detect_bias(session_id, provider_kind=body.provider_kind)
        return BiasDetectResponse(
            findings=[FindingModel(**asdict(f)) for f in result.outputs],
            evidence=[EvidenceModel(**asdict(ev)) for ev in result.evidence],
            message=_message_model(result.message),
        )

    @api.post("/sessions/{session_id}/tasks/plan-check", response_model=PlanCheckResponse)
    def run_plan_check(session_id: str, body: TaskRequest | None = None):
        body = body or TaskRequest()
        result = assistant.check_plan(session_id, provider_kind=body.provider_kind)
        return PlanCheckResponse(
            gaps=[GapModel(**asdict(g)) for g in result.outputs],
            evidence=[EvidenceModel(**asdict(ev)) for ev in result.evidence],
            message=_message_model(result.message),
        )

    @api.post("/sessions/{session_id}/tasks/charters", response_model=ChartersResponse)
    def run_charters(session_id: str, body: ChartersRequest):
        result = assistant.generate_charters(
            session_id, body.count, provider_kind=body.provider_kind
        )
        return ChartersResponse(
            charters=[CharterModel(**asdict(c)) for c in result.outputs],
            evidence=[EvidenceModel(**asdict(ev)) for ev in result.evidence],
            message=_message_model(result.message),
        )

    @api.get("/sessions/{session_id}/replay", response_model=ReplayResponse)
    def replay_session(session_id: str):
        return ReplayResponse(transcript=assistant.replay(session_id))

    @api.get("/evidence/{chunk_id}", response_model=EvidenceDetailResponse)
    def get_evidence(chunk_id: str):
        chunk, doc = assistant.store.get_chunk_with_doc(chunk_id)
        return EvidenceDetailResponse(
            chunk_id=chunk.chunk_id,
            doc_id=chunk.doc_id,
            doc_title=doc.title,
            doc_kind=doc.kind,
            ordinal=chunk.ordinal,
            text=chunk.text,
        )

    app.include_router(api)

    if config.static_dir:
        static_root = Path(config.static_dir)
        if static_root.is_dir():
            from fastapi.staticfiles import StaticFiles

            app.mount("/", StaticFiles(directory=static_root, html=True), name="ui")

    return app


def parse_bind(bind: str) -> tuple[str, int]:
    host, sep, port = bind.rpartition(":")
    if not sep or not host or not port.isdigit():
        raise BindFailure(f"bind address must be host:port, got {bind!r}")
    return host, int(port)


def serve(config: AppConfig) -> None:
    """Validate config, build the app, and block serving HTTP."""
    host, port = parse_bind(config.bind)
    try:
        assistant = Assistant(config)
    except BitaError as exc:
        raise ConfigInvalid(f"store is unreachable: {exc}") from exc
    app = create_app(config, assistant)
    uvicorn.run(app, host=host, port=port, log_level="info")

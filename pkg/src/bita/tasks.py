"""The assistant pipeline: chat plus the three fairness-testing tasks.

Every invocation follows the same path: scope guardrail, retrieval,
budgeted prompt assembly, provider call, structured parsing (with one
schema-repair retry), and an evidence-grounding check before anything is
stored or returned. The CLI and the HTTP API both call this module, so
their outputs are identical by construction.
"""

from __future__ import annotations

import threading
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

from . import provider as provider_mod
from .config import AppConfig
from .corpus import ChunkingPolicy, SourceDocument, chunk_document, parse_document
from .errors import (
    CountOutOfRange,
    GuardrailRefused,
    InvalidArtifact,
    SchemaParseFailure,
    UngroundedOutput,
    UnknownCaseReference,
)
from .index import Evidence, Index, RetrievalQuery, corpus_fingerprint
from .prompting import (
    AssembledPrompt,
    HistoryItem,
    assemble_prompt,
    check_scope,
    default_templates,
    evidence_ids_in,
    load_lexicon,
)
from .provider import Completion, ProviderConfig, select_provider
from .schemas import (
    SystemDescription,
    TestPlan,
    describe_plan,
    describe_system,
    parse_structured_text,
)
from .store import Message, Session, Store
from .textops import estimate_tokens

MAX_CHARTER_COUNT = 10

_REPAIR_INSTRUCTION = (
    "### Repair\n"
    "Your previous reply failed schema validation: {error}\n"
    "Reply again with only a corrected fenced json block for this task."
)


def parse_structured(completion: Completion, task_kind: str) -> list:
    """Typed task outputs from a completion's fenced json block."""
    return parse_structured_text(completion.text, task_kind)


def check_grounding(objects: Sequence, retrieved: Sequence[Evidence]) -> None:
    """Every cited evidence id must come from this invocation's retrieval set."""
    known = {ev.chunk_id for ev in retrieved}
    offending = [
        cid
        for obj in objects
        for cid in obj.evidence_ids
        if cid not in known
    ]
    if offending:
        raise UngroundedOutput(sorted(set(offending)))


def build_bias_query(sysdesc: SystemDescription) -> str:
    return " ".join([sysdesc.purpose, *sysdesc.inputs, *sysdesc.target_users])


def build_plan_query(sysdesc: SystemDescription, plan: TestPlan) -> str:
    case_terms = [case.title for case in plan.cases]
    for case in plan.cases:
        case_terms.extend(case.attributes_covered)
    return " ".join([build_bias_query(sysdesc), *case_terms])


@dataclass(frozen=True)
class ChatOutcome:
    refused: bool
    reason: str | None
    message: Message | None
    evidence: tuple[Evidence, ...]
    prompt: AssembledPrompt | None


@dataclass(frozen=True)
class TaskResult:
    outputs: tuple
    evidence: tuple[Evidence, ...]
    message: Message
    prompt: AssembledPrompt


class Assistant:
    """Facade wiring store, index, templates, guardrails, and provider."""

    def __init__(
        self,
        config: AppConfig,
        store: Store | None = None,
        complete_fn: Callable[[AssembledPrompt, ProviderConfig], Completion] | None = None,
    ):
        self.config = config
        self.store = store or Store(config.store_path)
        self.templates = default_templates()
        self.lexicon = load_lexicon()
        self._complete = complete_fn or provider_mod.complete
        self._index: Index | None = None
        self._index_lock = threading.Lock()

    # --- corpus and index -------------------------------------------------------

    def ingest_file(self, path: str | Path) -> tuple[SourceDocument, bool]:
        text = Path(path).read_text(encoding="utf-8")
        doc = parse_document(text)
        chunks = chunk_document(doc, ChunkingPolicy())
        return self.store.add_document(doc, chunks)

    def sync_corpus_dir(self) -> int:
        """Ingest every .md/.txt file from the configured corpus directory."""
        if not self.config.corpus_dir:
            return 0
        added = 0
        for path in sorted(Path(self.config.corpus_dir).iterdir()):
            if path.suffix not in (".md", ".txt"):
                continue
            _, created = self.ingest_file(path)
            added += int(created)
        return added

    def index_cache_path(self) -> Path | None:
        if self.store.path == ":memory:":
            return None
        return Path(self.store.path + ".index.json")

    def ensure_index(self) -> Index:
        """Current index; rebuilt (or loaded from a fresh cache) when any
        document checksum changed. Swap is atomic for concurrent readers."""
        documents = self.store.list_documents()
        fingerprint = corpus_fingerprint(documents)
        index = self._index
        if index is not None and index.fingerprint == fingerprint:
            return index
        with self._index_lock:
            if self._index is not None and self._index.fingerprint == fingerprint:
                return self._index
            cache = self.index_cache_path()
            if cache is not None and cache.exists():
                try:
                    loaded = Index.load(cache)
                except (ValueError, KeyError, OSError):
                    loaded = None
                if loaded is not None and loaded.fingerprint == fingerprint:
                    self._index = loaded
                    return loaded
            self._index = Index.build(documents, self.store.all_chunks())
            return self._index

    def build_index_cache(self) -> tuple[Index, Path | None]:
        index = self.ensure_index()
        cache = self.index_cache_path()
        if cache is not None:
            index.save(cache)
        return index, cache

    # --- sessions and artifacts ---------------------------------------------------

    def create_session(self, title: str) -> Session:
        return self.store.create_session(title)

    def set_system(self, session_id: str, sysdesc: SystemDescription) -> int:
        """Register a system description; unchanged content is not re-versioned."""
        with self.store.session_lock(session_id):
            current = self.store.current_system(session_id)
            if current == sysdesc:
                version, _ = self.store.current_artifact(session_id, "system")
                return version
            version = self.store.set_artifact(session_id, "system", asdict(sysdesc))
            self.store.append_message(
                session_id,
                "system-note",
                f"System description '{sysdesc.name}' registered (v{version}).",
            )
            return version

    def set_plan(self, session_id: str, plan: TestPlan) -> int:
        with self.store.session_lock(session_id):
            current = self.store.current_plan(session_id)
            if current == plan:
                version, _ = self.store.current_artifact(session_id, "plan")
                return version
            version = self.store.set_artifact(session_id, "plan", asdict(plan))
            self.store.append_message(
                session_id,
                "system-note",
                f"Test plan '{plan.plan_id}' registered (v{version}) with {len(plan.cases)} case(s).",
            )
            return version

    # --- chat ----------------------------------------------------------------------

    def chat(
        self, session_id: str, text: str, provider_kind: str | None = None
    ) -> ChatOutcome:
        """Scope-guarded, evidence-grounded chat turn.

        Out-of-scope requests are refused before any retrieval or provider
        call and recorded as system-notes.
        """
        with self.store.session_lock(session_id):
            self.store.get_session(session_id)
            verdict = check_scope(text, self.store.has_artifacts(session_id), self.lexicon)
            if not verdict.in_scope:
                self.store.append_message(session_id, "user", text)
                note = self.store.append_message(
                    session_id,
                    "system-note",
                    f"Request refused by the scope guardrail: {verdict.reason}",
                )
                return ChatOutcome(
                    refused=True,
                    reason=verdict.reason,
                    message=note,
                    evidence=(),
                    prompt=None,
                )

            evidence = self.ensure_index().retrieve(
                RetrievalQuery(text=text, top_k=self.config.top_k)
            )
            prompt = self._assemble("chat", text, evidence, session_id)
            completion = self._complete(prompt, self._provider_config(provider_kind))
            cited = evidence_ids_in(completion.text)
            known = {ev.chunk_id for ev in evidence}
            foreign = sorted(set(cited) - known)
            if foreign:
                raise UngroundedOutput(foreign)

            self.store.append_message(session_id, "user", text)
            message = self.store.append_message(
                session_id,
                "assistant",
                completion.text,
                task_kind="chat",
                evidence_ids=cited,
            )
            by_id = {ev.chunk_id: ev for ev in evidence}
            return ChatOutcome(
                refused=False,
                reason=None,
                message=message,
                evidence=tuple(by_id[cid] for cid in cited),
                prompt=prompt,
            )

    # --- the three tasks -------------------------------------------------------------

    def detect_bias(
        self,
        session_id: str,
        sysdesc: SystemDescription | None = None,
        provider_kind: str | None = None,
    ) -> TaskResult:
        with self.store.session_lock(session_id):
            sysdesc = self._resolve_system(session_id, sysdesc)
            query_section = (
                describe_system(sysdesc)
                + "\n\nIdentify potential bias sources in this system under test."
            )
            return self._run_task(
                session_id,
                task_kind="bias-detect",
                retrieval_text=build_bias_query(sysdesc),
                query_section=query_section,
                provider_kind=provider_kind,
                empty_note="No potential bias sources were identified for this system.",
            )

    def check_plan(
        self,
        session_id: str,
        sysdesc: SystemDescription | None = None,
        plan: TestPlan | None = None,
        provider_kind: str | None = None,
    ) -> TaskResult:
        with self.store.session_lock(session_id):
            sysdesc = self._resolve_system(session_id, sysdesc)
            if plan is not None:
                self.set_plan(session_id, plan)
            else:
                plan = self.store.current_plan(session_id)
                if plan is None:
                    raise InvalidArtifact("no test plan registered for this session")
            query_section = (
                describe_system(sysdesc)
                + "\n\n"
                + describe_plan(plan)
                + "\n\nReview this test plan for fairness coverage gaps."
            )
            return self._run_task(
                session_id,
                task_kind="plan-check",
                retrieval_text=build_plan_query(sysdesc, plan),
                query_section=query_section,
                provider_kind=provider_kind,
                empty_note="No fairness coverage gaps were identified in this plan.",
                plan=plan,
            )

    def generate_charters(
        self,
        session_id: str,
        count: int,
        sysdesc: SystemDescription | None = None,
        provider_kind: str | None = None,
    ) -> TaskResult:
        if not 1 <= count <= MAX_CHARTER_COUNT:
            raise CountOutOfRange(
                f"charter count must be between 1 and {MAX_CHARTER_COUNT}, got {count}"
            )
        with self.store.session_lock(session_id):
            sysdesc = self._resolve_system(session_id, sysdesc)
            query_section = (
                describe_system(sysdesc)
                + f"\n\nCharter count: {count}\nPropose exactly {count} exploratory"
                " testing charters probing fairness risks of this system."
            )
            return self._run_task(
                session_id,
                task_kind="charter-gen",
                retrieval_text=build_bias_query(sysdesc),
                query_section=query_section,
                provider_kind=provider_kind,
                empty_note="No charters were generated.",
                expected_count=count,
            )

    # --- shared pipeline ----------------------------------------------------------------

    def _resolve_system(
        self, session_id: str, sysdesc: SystemDescription | None
    ) -> SystemDescription:
        self.store.get_session(session_id)
        if sysdesc is not None:
            self.set_system(session_id, sysdesc)
            return sysdesc
        current = self.store.current_system(session_id)
        if current is None:
            raise InvalidArtifact("no system description registered for this session")
        return current

    def _provider_config(self, override_kind: str | None) -> ProviderConfig:
        return select_provider(self.config.provider, override_kind)

    def _assemble(
        self,
        task_kind: str,
        query_section: str,
        evidence: Sequence[Evidence],
        session_id: str,
    ) -> AssembledPrompt:
        summaries, recent = self.store.load_context(session_id, self.config.budget_tokens)
        history = [
            HistoryItem(item_id=f"artifact:{i}", role="system-note", content=summary)
            for i, summary in enumerate(summaries)
        ] + [
            HistoryItem(item_id=m.message_id, role=m.role, content=m.content)
            for m in recent
        ]
        return assemble_prompt(
            self.templates[task_kind],
            query_section,
            evidence,
            history,
            self.config.budget_tokens,
        )

    def _run_task(
        self,
        session_id: str,
        task_kind: str,
        retrieval_text: str,
        query_section: str,
        provider_kind: str | None,
        empty_note: str,
        plan: TestPlan | None = None,
        expected_count: int | None = None,
    ) -> TaskResult:
        verdict = check_scope(retrieval_text, True, self.lexicon)
        if not verdict.in_scope:
            raise GuardrailRefused(verdict.reason)

        evidence = self.ensure_index().retrieve(
            RetrievalQuery(text=retrieval_text, top_k=self.config.top_k)
        )
        prompt = self._assemble(task_kind, query_section, evidence, session_id)
        pconfig = self._provider_config(provider_kind)
        outputs, completion = self._complete_structured(
            prompt, pconfig, task_kind, plan, expected_count
        )
        check_grounding(outputs, evidence)

        self.store.append_message(session_id, "user", query_section, task_kind=task_kind)
        cited: list[str] = []
        for obj in outputs:
            for cid in obj.evidence_ids:
                if cid not in cited:
                    cited.append(cid)
        content = completion.text if outputs else completion.text + "\n\n" + empty_note
        message = self.store.append_message(
            session_id,
            "assistant",
            content,
            task_kind=task_kind,
            evidence_ids=cited,
        )
        return TaskResult(
            outputs=tuple(outputs),
            evidence=tuple(evidence),
            message=message,
            prompt=prompt,
        )

    def _complete_structured(
        self,
        prompt: AssembledPrompt,
        pconfig: ProviderConfig,
        task_kind: str,
        plan: TestPlan | None,
        expected_count: int | None,
    ) -> tuple[list, Completion]:
        """Call the provider and parse; one schema-repair retry on failure."""
        completion = self._complete(prompt, pconfig)
        try:
            return self._parse_and_validate(completion, task_kind, plan, expected_count), completion
        except SchemaParseFailure as first_error:
            repair_text = prompt.final_text + "\n\n" + _REPAIR_INSTRUCTION.format(
                error=first_error
            )
            repair_prompt = AssembledPrompt(
                final_text=repair_text,
                task_kind=prompt.task_kind,
                included_evidence_ids=prompt.included_evidence_ids,
                included_message_ids=prompt.included_message_ids,
                dropped_sections=prompt.dropped_sections,
                token_estimate=estimate_tokens(repair_text),
            )
            completion = self._complete(repair_prompt, pconfig)
            return self._parse_and_validate(completion, task_kind, plan, expected_count), completion

    def _parse_and_validate(
        self,
        completion: Completion,
        task_kind: str,
        plan: TestPlan | None,
        expected_count: int | None,
    ) -> list:
        outputs = parse_structured(completion, task_kind)
        if plan is not None:
            valid_ids = plan.case_ids()
            for gap in outputs:
                unknown = [cid for cid in gap.related_case_ids if cid not in valid_ids]
                if unknown:
                    raise UnknownCaseReference(
                        f"gap references case ids not in plan '{plan.plan_id}': "
                        + ", ".join(sorted(unknown))
                    )
        if expected_count is not None and len(outputs) != expected_count:
            raise SchemaParseFailure(
                f"expected exactly {expected_count} charters, got {len(outputs)}"
            )
        return outputs

    def replay(self, session_id: str) -> str:
        return self.store.replay(session_id)

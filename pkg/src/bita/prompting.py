"""Prompt templates, the scope guardrail, and budgeted prompt assembly.

A prompt is built from six sections in fixed order: role preamble,
instruction block, few-shot examples, retrieved evidence, conversation
history, and the request. When the token budget is exceeded, content is
dropped in a fixed priority: few-shot examples (last first), history
(oldest first), then evidence (weakest rank first). The role, instruction,
and request are never dropped.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

from .errors import BudgetTooSmall
from .index import Evidence
from .textops import estimate_tokens

TASK_KINDS = ("chat", "bias-detect", "plan-check", "charter-gen")
DEFAULT_PROMPT_BUDGET = 8000

EVIDENCE_MARKER_RE = re.compile(r"\[EV:([^\]\s]+)\]")


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    task_kind: str
    role_preamble: str
    instruction_block: str
    few_shot_examples: tuple[tuple[str, str], ...] = ()
    evidence_slot: str = "{evidence}"
    history_slot: str = "{history}"
    query_slot: str = "{query}"

    def __post_init__(self) -> None:
        if self.task_kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind '{self.task_kind}'")
        if not self.role_preamble.strip():
            raise ValueError("role_preamble is mandatory")
        if not self.instruction_block.strip():
            raise ValueError("instruction_block is mandatory")
        slots = (self.evidence_slot, self.history_slot, self.query_slot)
        if len(set(slots)) != 3 or not all(slots):
            raise ValueError("evidence/history/query slots must be distinct and non-empty")


@dataclass(frozen=True)
class HistoryItem:
    """One unit of conversational context fed into prompt assembly."""

    item_id: str
    role: str
    content: str


@dataclass(frozen=True)
class AssembledPrompt:
    final_text: str
    task_kind: str
    included_evidence_ids: tuple[str, ...]
    included_message_ids: tuple[str, ...]
    dropped_sections: tuple[str, ...]
    token_estimate: int


@dataclass(frozen=True)
class GuardrailVerdict:
    in_scope: bool
    matched_terms: tuple[str, ...]
    reason: str


def check_scope(
    query_text: str, session_has_artifacts: bool, lexicon: Sequence[str]
) -> GuardrailVerdict:
    """Accept a query iff it touches the fairness-testing lexicon or the
    session already holds artifacts. Empty queries are always refused."""
    if not lexicon:
        raise ValueError("lexicon must not be empty")
    lowered = query_text.lower()
    if not lowered.strip():
        return GuardrailVerdict(in_scope=False, matched_terms=(), reason="empty")
    matched = tuple(
        term
        for term in lexicon
        if re.search(r"\b" + re.escape(term.lower()) + r"\b", lowered)
    )
    if matched:
        return GuardrailVerdict(
            in_scope=True,
            matched_terms=matched,
            reason="query matches fairness-testing vocabulary",
        )
    if session_has_artifacts:
        return GuardrailVerdict(
            in_scope=True,
            matched_terms=(),
            reason="session already holds fairness-testing artifacts",
        )
    return GuardrailVerdict(
        in_scope=False,
        matched_terms=(),
        reason="query matches no fairness-testing vocabulary and the session has no artifacts",
    )


def _neutralize_markers(text: str) -> str:
    # Live [EV:...] markers may only appear in the evidence section;
    # citations quoted in history or requests are rewritten.
    return EVIDENCE_MARKER_RE.sub(r"[cited:\1]", text)


def _render_sections(
    template: PromptTemplate,
    query: str,
    few_shot: Sequence[tuple[str, str]],
    evidence: Sequence[Evidence],
    history: Sequence[HistoryItem],
) -> str:
    sections = [template.role_preamble, template.instruction_block]
    if few_shot:
        lines = ["### Examples"]
        for inp, out in few_shot:
            lines.append(f"Input: {_neutralize_markers(inp)}")
            lines.append(f"Output: {_neutralize_markers(out)}")
        sections.append("\n".join(lines))
    if evidence:
        lines = ["### Evidence"]
        for ev in evidence:
            lines.append(f"[EV:{ev.chunk_id}] {ev.text}")
        sections.append("\n".join(lines))
    if history:
        lines = ["### Conversation so far"]
        for item in history:
            lines.append(f"[{item.role}] {_neutralize_markers(item.content)}")
        sections.append("\n".join(lines))
    sections.append(f"### Request\n{_neutralize_markers(query)}")
    return "\n\n".join(sections)


def assemble_prompt(
    template: PromptTemplate,
    query: str,
    evidence: Sequence[Evidence],
    history: Sequence[HistoryItem],
    budget: int = DEFAULT_PROMPT_BUDGET,
) -> AssembledPrompt:
    """Render the prompt, dropping optional content until it fits the budget.

    Raises BudgetTooSmall when role + instruction + request alone exceed
    the budget; otherwise the returned token_estimate is always <= budget.
    """
    core = _render_sections(template, query, (), (), ())
    if estimate_tokens(core) > budget:
        raise BudgetTooSmall(
            f"mandatory core needs {estimate_tokens(core)} tokens, budget is {budget}"
        )

    kept_few_shot = list(template.few_shot_examples)
    kept_history = list(history)
    kept_evidence = list(sorted(evidence, key=lambda e: e.rank))
    dropped: list[str] = []

    text = _render_sections(template, query, kept_few_shot, kept_evidence, kept_history)
    while estimate_tokens(text) > budget:
        if kept_few_shot:
            kept_few_shot.pop()
            section = "few-shot"
        elif kept_history:
            kept_history.pop(0)
            section = "history"
        else:
            kept_evidence.pop()
            section = "evidence"
        if section not in dropped:
            dropped.append(section)
        text = _render_sections(template, query, kept_few_shot, kept_evidence, kept_history)

    return AssembledPrompt(
        final_text=text,
        task_kind=template.task_kind,
        included_evidence_ids=tuple(e.chunk_id for e in kept_evidence),
        included_message_ids=tuple(h.item_id for h in kept_history),
        dropped_sections=tuple(dropped),
        token_estimate=estimate_tokens(text),
    )


def evidence_ids_in(text: str) -> list[str]:
    """Evidence ids cited in text, in order of first appearance."""
    seen: list[str] = []
    for match in EVIDENCE_MARKER_RE.finditer(text):
        cid = match.group(1)
        if cid not in seen:
            seen.append(cid)
    return seen


# --- template and lexicon files ----------------------------------------------

_HEADER_RE = re.compile(r"^([a-z_]+):\s*(.*)$")
_SECTION_RE = re.compile(r"^\[([a-z_.]+)\]$")


def parse_template(text: str) -> PromptTemplate:
    """Parse the sectioned template file format.

    Header lines (``id:``, ``task:``) come first, then ``[role]``,
    ``[instruction]``, and repeatable ``[few_shot.input]``/
    ``[few_shot.output]`` pairs.
    """
    header: dict[str, str] = {}
    sections: list[tuple[str, list[str]]] = []
    current: list[str] | None = None
    for line in text.splitlines():
        section_match = _SECTION_RE.match(line.strip())
        if section_match:
            current = []
            sections.append((section_match.group(1), current))
            continue
        if current is None:
            if not line.strip():
                continue
            header_match = _HEADER_RE.match(line.strip())
            if not header_match:
                raise ValueError(f"unexpected line before first section: {line!r}")
            header[header_match.group(1)] = header_match.group(2)
        else:
            current.append(line)

    def section_text(name: str) -> str | None:
        for sec_name, lines in sections:
            if sec_name == name:
                return "\n".join(lines).strip()
        return None

    role = section_text("role")
    instruction = section_text("instruction")
    if role is None or instruction is None:
        raise ValueError("template needs [role] and [instruction] sections")

    few_shot: list[tuple[str, str]] = []
    pending_input: str | None = None
    for name, lines in sections:
        body = "\n".join(lines).strip()
        if name == "few_shot.input":
            if pending_input is not None:
                raise ValueError("few_shot.input without matching few_shot.output")
            pending_input = body
        elif name == "few_shot.output":
            if pending_input is None:
                raise ValueError("few_shot.output without preceding few_shot.input")
            few_shot.append((pending_input, body))
            pending_input = None
    if pending_input is not None:
        raise ValueError("few_shot.input without matching few_shot.output")

    if "id" not in header or "task" not in header:
        raise ValueError("template header needs 'id' and 'task'")
    return PromptTemplate(
        template_id=header["id"],
        task_kind=header["task"],
        role_preamble=role,
        instruction_block=instruction,
        few_shot_examples=tuple(few_shot),
    )


def default_templates() -> dict[str, PromptTemplate]:
    """Shipped templates, one per task kind."""
    templates: dict[str, PromptTemplate] = {}
    root = resources.files("bita").joinpath("data/templates")
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if not entry.name.endswith(".txt"):
            continue
        template = parse_template(entry.read_text(encoding="utf-8"))
        if template.task_kind in templates:
            raise ValueError(f"duplicate template for task '{template.task_kind}'")
        templates[template.task_kind] = template
    missing = [kind for kind in TASK_KINDS if kind not in templates]
    if missing:
        raise ValueError(f"no template shipped for: {', '.join(missing)}")
    return templates


def parse_lexicon(text: str) -> tuple[str, ...]:
    terms: list[str] = []
    for line in text.splitlines():
        term = line.split("#", 1)[0].strip().lower()
        if term and term not in terms:
            terms.append(term)
    return tuple(terms)


def load_lexicon(path: str | Path | None = None) -> tuple[str, ...]:
    """Scope lexicon: one term per line, '#' starts a comment."""
    if path is not None:
        return parse_lexicon(Path(path).read_text(encoding="utf-8"))
    return parse_lexicon(
        resources.files("bita").joinpath("data/lexicon.txt").read_text(encoding="utf-8")
    )

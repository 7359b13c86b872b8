"""Structured task inputs and outputs.

Task results travel as a fenced ```json block inside the completion text;
render_structured and parse_structured_text are exact inverses on every
valid object, which is what lets the CLI, API, and provider mock share one
wire format.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass
from pathlib import Path

from .corpus import parse_front_matter
from .errors import InvalidArtifact, SchemaParseFailure
from .textops import slugify

BIAS_CATEGORIES = (
    "sensitive-attribute",
    "proxy-correlation",
    "neglected-subgroup",
    "data-imbalance",
    "fairness-bug",
)
SEVERITIES = ("low", "medium", "high")
GAP_KINDS = (
    "missing-demographic-coverage",
    "untested-scenario",
    "hidden-correlation",
)
DEFAULT_SEVERITY = "medium"
DEFAULT_TIMEBOX_MINUTES = 60

_FENCED_JSON_RE = re.compile(r"```json\s*\n(.*?)\n```", re.DOTALL)


@dataclass(frozen=True)
class SystemDescription:
    name: str
    purpose: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    target_users: tuple[str, ...] = ()
    context_notes: str | None = None

    def __post_init__(self) -> None:
        if not self.name.strip():
            raise InvalidArtifact("system description needs a name")
        if not self.purpose.strip():
            raise InvalidArtifact("system description needs a non-empty purpose")
        if not self.inputs:
            raise InvalidArtifact("system description needs at least one input")
        if not self.outputs:
            raise InvalidArtifact("system description needs at least one output")


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # domain type, not a pytest class

    case_id: str
    title: str
    steps: tuple[str, ...] = ()
    attributes_covered: tuple[str, ...] = ()


@dataclass(frozen=True)
class TestPlan:
    __test__ = False  # domain type, not a pytest class

    plan_id: str
    cases: tuple[TestCase, ...]

    def __post_init__(self) -> None:
        if not self.cases:
            raise InvalidArtifact("test plan needs at least one case")
        ids = [c.case_id for c in self.cases]
        if len(ids) != len(set(ids)):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise InvalidArtifact(f"duplicate case_ids in plan: {', '.join(dupes)}")

    def case_ids(self) -> set[str]:
        return {c.case_id for c in self.cases}


@dataclass(frozen=True)
class BiasFinding:
    category: str
    description: str
    affected_groups: tuple[str, ...]
    severity: str
    evidence_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.category not in BIAS_CATEGORIES:
            raise ValueError(f"unknown bias category '{self.category}'")
        if self.severity not in SEVERITIES:
            raise ValueError(f"unknown severity '{self.severity}'")
        if not self.description.strip():
            raise ValueError("finding description must be non-empty")
        if not self.evidence_ids:
            raise ValueError("finding must cite at least one evidence id")


@dataclass(frozen=True)
class PlanGap:
    gap_kind: str
    description: str
    related_case_ids: tuple[str, ...]
    suggested_cases: tuple[str, ...]
    evidence_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.gap_kind not in GAP_KINDS:
            raise ValueError(f"unknown gap kind '{self.gap_kind}'")
        if not self.description.strip():
            raise ValueError("gap description must be non-empty")
        if not self.evidence_ids:
            raise ValueError("gap must cite at least one evidence id")


@dataclass(frozen=True)
class Charter:
    mission: str
    target_areas: tuple[str, ...]
    fairness_risks: tuple[str, ...]
    resources_setup: tuple[str, ...]
    guiding_questions: tuple[str, ...]
    timebox_minutes: int = DEFAULT_TIMEBOX_MINUTES
    evidence_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.mission.strip():
            raise ValueError("charter mission must be non-empty")
        if not self.guiding_questions:
            raise ValueError("charter needs at least one guiding question")
        if not self.evidence_ids:
            raise ValueError("charter must cite at least one evidence id")
        if self.timebox_minutes < 1:
            raise ValueError("timebox_minutes must be positive")


TASK_PAYLOAD_KEYS = {
    "bias-detect": "findings",
    "plan-check": "gaps",
    "charter-gen": "charters",
}


def render_structured(objects: list, task_kind: str) -> str:
    """Canonical fenced JSON block for a task output list."""
    key = TASK_PAYLOAD_KEYS[task_kind]
    payload = {key: [asdict(obj) for obj in objects]}
    return "```json\n" + json.dumps(payload, indent=2, ensure_ascii=False) + "\n```"


def _require(item: dict, field_name: str, kind: type, where: str):
    value = item.get(field_name)
    if not isinstance(value, kind) or isinstance(value, bool):
        raise SchemaParseFailure(f"{where}: field '{field_name}' missing or not {kind.__name__}")
    return value


def _string_list(item: dict, field_name: str, where: str, required: bool) -> tuple[str, ...]:
    value = item.get(field_name)
    if value is None and not required:
        return ()
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise SchemaParseFailure(f"{where}: field '{field_name}' must be a list of strings")
    if required and not value:
        raise SchemaParseFailure(f"{where}: field '{field_name}' must be non-empty")
    return tuple(value)


def parse_structured_text(text: str, task_kind: str) -> list:
    """Parse the first fenced ```json block into typed task outputs.

    Raises SchemaParseFailure on a missing block, malformed JSON, missing
    fields, or out-of-enum values.
    """
    if task_kind not in TASK_PAYLOAD_KEYS:
        raise SchemaParseFailure(f"task '{task_kind}' has no structured output schema")
    match = _FENCED_JSON_RE.search(text)
    if not match:
        raise SchemaParseFailure("no fenced json block found in completion")
    try:
        payload = json.loads(match.group(1))
    except json.JSONDecodeError as exc:
        raise SchemaParseFailure(f"fenced block is not valid JSON: {exc}") from exc
    key = TASK_PAYLOAD_KEYS[task_kind]
    items = payload.get(key)
    if not isinstance(items, list):
        raise SchemaParseFailure(f"payload must contain a '{key}' list")

    out = []
    for i, item in enumerate(items):
        where = f"{key}[{i}]"
        if not isinstance(item, dict):
            raise SchemaParseFailure(f"{where}: expected an object")
        try:
            if task_kind == "bias-detect":
                out.append(
                    BiasFinding(
                        category=_require(item, "category", str, where),
                        description=_require(item, "description", str, where),
                        affected_groups=_string_list(item, "affected_groups", where, False),
                        severity=item.get("severity", DEFAULT_SEVERITY),
                        evidence_ids=_string_list(item, "evidence_ids", where, True),
                    )
                )
            elif task_kind == "plan-check":
                out.append(
                    PlanGap(
                        gap_kind=_require(item, "gap_kind", str, where),
                        description=_require(item, "description", str, where),
                        related_case_ids=_string_list(item, "related_case_ids", where, False),
                        suggested_cases=_string_list(item, "suggested_cases", where, False),
                        evidence_ids=_string_list(item, "evidence_ids", where, True),
                    )
                )
            else:
                timebox = item.get("timebox_minutes", DEFAULT_TIMEBOX_MINUTES)
                if not isinstance(timebox, int) or isinstance(timebox, bool):
                    raise SchemaParseFailure(f"{where}: timebox_minutes must be an integer")
                out.append(
                    Charter(
                        mission=_require(item, "mission", str, where),
                        target_areas=_string_list(item, "target_areas", where, False),
                        fairness_risks=_string_list(item, "fairness_risks", where, False),
                        resources_setup=_string_list(item, "resources_setup", where, False),
                        guiding_questions=_string_list(item, "guiding_questions", where, True),
                        timebox_minutes=timebox,
                        evidence_ids=_string_list(item, "evidence_ids", where, True),
                    )
                )
        except ValueError as exc:
            raise SchemaParseFailure(f"{where}: {exc}") from exc
    return out


# --- artifact serialization into prompt text ---------------------------------


def describe_system(sysdesc: SystemDescription) -> str:
    lines = [
        f"System under test: {sysdesc.name}",
        f"Purpose: {sysdesc.purpose}",
        f"Inputs: {'; '.join(sysdesc.inputs)}",
        f"Outputs: {'; '.join(sysdesc.outputs)}",
        f"Target users: {'; '.join(sysdesc.target_users)}",
    ]
    if sysdesc.context_notes:
        lines.append(f"Notes: {sysdesc.context_notes}")
    return "\n".join(lines)


def describe_plan(plan: TestPlan) -> str:
    lines = [f"Test plan {plan.plan_id}:"]
    for case in plan.cases:
        lines.append(f"- Case {case.case_id}: {case.title}")
        if case.steps:
            lines.append(f"  Steps: {' | '.join(case.steps)}")
        if case.attributes_covered:
            lines.append(f"  Covers: {', '.join(case.attributes_covered)}")
    return "\n".join(lines)


# --- artifact file formats ----------------------------------------------------


def _split_list(value: str | None) -> tuple[str, ...]:
    if not value:
        return ()
    return tuple(part.strip() for part in value.split(",") if part.strip())


def parse_system_description(text: str) -> SystemDescription:
    """Front-matter file: name, purpose, inputs, outputs, target_users keys
    (lists comma-separated); the body becomes the context notes."""
    try:
        meta, body = parse_front_matter(text)
    except Exception as exc:
        raise InvalidArtifact(f"system description file: {exc}") from exc
    for key in ("name", "purpose", "inputs", "outputs"):
        if not meta.get(key):
            raise InvalidArtifact(f"system description is missing '{key}'")
    notes = body.strip() or None
    return SystemDescription(
        name=meta["name"],
        purpose=meta["purpose"],
        inputs=_split_list(meta.get("inputs")),
        outputs=_split_list(meta.get("outputs")),
        target_users=_split_list(meta.get("target_users")),
        context_notes=notes,
    )


def load_system_description(path: str | Path) -> SystemDescription:
    return parse_system_description(Path(path).read_text(encoding="utf-8"))


_CASE_HEADER_RE = re.compile(r"^##\s+([a-z0-9][a-z0-9_-]*)\s*:\s*(.+)$")


def parse_test_plan(text: str, default_plan_id: str = "plan") -> TestPlan:
    """Front-matter file whose body lists ``## case-id: title`` blocks with
    ``- step`` lines and an optional ``covers:`` line.

    A body with no case blocks is treated as a free-text plan and mapped to
    a single synthetic case.
    """
    try:
        meta, body = parse_front_matter(text)
    except Exception as exc:
        raise InvalidArtifact(f"test plan file: {exc}") from exc
    plan_id = meta.get("plan_id") or slugify(default_plan_id) or "plan"

    cases: list[TestCase] = []
    current_id: str | None = None
    current_title = ""
    steps: list[str] = []
    covers: tuple[str, ...] = ()

    def flush() -> None:
        nonlocal current_id, steps, covers
        if current_id is not None:
            cases.append(
                TestCase(
                    case_id=current_id,
                    title=current_title,
                    steps=tuple(steps),
                    attributes_covered=covers,
                )
            )
        current_id = None
        steps = []
        covers = ()

    for line in body.splitlines():
        header = _CASE_HEADER_RE.match(line.strip())
        if header:
            flush()
            current_id = header.group(1)
            current_title = header.group(2).strip()
            continue
        if current_id is None:
            continue
        stripped = line.strip()
        if stripped.startswith("- "):
            steps.append(stripped[2:].strip())
        elif stripped.lower().startswith("covers:"):
            covers = _split_list(stripped.split(":", 1)[1])
    flush()

    if not cases:
        body_text = body.strip()
        if not body_text:
            raise InvalidArtifact("test plan has neither case blocks nor free text")
        first_line = body_text.splitlines()[0].strip()
        cases = [
            TestCase(
                case_id="free-text",
                title=first_line[:80],
                steps=(body_text,),
                attributes_covered=(),
            )
        ]
    return TestPlan(plan_id=plan_id, cases=tuple(cases))


def load_test_plan(path: str | Path) -> TestPlan:
    path = Path(path)
    return parse_test_plan(path.read_text(encoding="utf-8"), default_plan_id=path.stem)

"""Chat-completion backends, selectable at runtime.

Three kinds are supported: two remote HTTP adapters (an OpenAI-compatible
wire format and a Gemini-style one, named remote-a and remote-b so no
vendor is hard-coded) and a mock. The mock is a first-class deliverable,
not a test double: it is a pure function of the prompt text, emits
schema-valid structured output, and only ever cites evidence ids that
appear in the prompt, which makes the whole pipeline reproducible offline.
"""

from __future__ import annotations

import os
import re
import threading
import time
from dataclasses import dataclass

import requests

from .config import ProviderSettings
from .errors import (
    ContextOverflow,
    MissingCredentials,
    ProviderRejected,
    ProviderTimeout,
    UnknownProviderKind,
)
from .prompting import AssembledPrompt
from .schemas import (
    SEVERITIES,
    BiasFinding,
    Charter,
    PlanGap,
    render_structured,
)
from .textops import estimate_tokens, first_sentence, fnv1a64_text

PROVIDER_KINDS = ("remote-a", "remote-b", "mock")
MOCK_MODEL_DEFAULT = "mock-grounded"
MOCK_MODEL_EMPTY = "mock-empty"
MOCK_CITATION_LIMIT = 3

_DEFAULT_CREDENTIAL_ENV = {
    "remote-a": "BITA_REMOTE_A_KEY",
    "remote-b": "BITA_REMOTE_B_KEY",
}
_DEFAULT_BASE_URL = {
    "remote-a": "https://api.openai.com/v1",
    "remote-b": "https://generativelanguage.googleapis.com/v1beta",
}

_RETRY_BACKOFF_SECONDS = 0.5
_TRANSIENT_STATUS = {408, 429, 500, 502, 503, 504}


@dataclass(frozen=True)
class ProviderConfig:
    kind: str
    model_name: str
    temperature: float = 0.0
    max_output_tokens: int = 2048
    timeout_seconds: float = 30.0
    credentials_env: str = ""
    base_url: str = ""
    context_limit_tokens: int = 120000
    max_inflight: int = 4

    def __post_init__(self) -> None:
        if self.kind not in PROVIDER_KINDS:
            raise UnknownProviderKind(f"unknown provider kind '{self.kind}'")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")


@dataclass(frozen=True)
class Completion:
    text: str
    provider_kind: str
    model_name: str
    latency_seconds: float
    prompt_tokens: int
    output_tokens: int


def select_provider(
    settings: ProviderSettings, override_kind: str | None = None
) -> ProviderConfig:
    """Resolve the active provider; a per-request override wins over config.

    Remote kinds require their credential env var; without it the call
    fails unless the config explicitly allows falling back to the mock.
    """
    kind = override_kind or settings.kind
    if kind not in PROVIDER_KINDS:
        raise UnknownProviderKind(f"unknown provider kind '{kind}'")

    if kind == "mock":
        model = settings.model if settings.kind == "mock" and settings.model else MOCK_MODEL_DEFAULT
        return ProviderConfig(kind="mock", model_name=model)

    env_name = settings.credentials_env or _DEFAULT_CREDENTIAL_ENV[kind]
    if not os.environ.get(env_name):
        if settings.allow_mock_fallback:
            return ProviderConfig(kind="mock", model_name=MOCK_MODEL_DEFAULT)
        raise MissingCredentials(
            f"provider '{kind}' needs credentials in env var {env_name}"
        )
    return ProviderConfig(
        kind=kind,
        model_name=settings.model,
        temperature=settings.temperature,
        max_output_tokens=settings.max_output_tokens,
        timeout_seconds=settings.timeout_ms / 1000.0,
        credentials_env=env_name,
        base_url=settings.base_url or _DEFAULT_BASE_URL[kind],
        context_limit_tokens=settings.context_limit_tokens,
        max_inflight=settings.max_inflight,
    )


def complete(prompt: AssembledPrompt, config: ProviderConfig) -> Completion:
    """One chat completion for an assembled prompt."""
    if prompt.token_estimate > config.context_limit_tokens:
        raise ContextOverflow(
            f"prompt needs {prompt.token_estimate} tokens, context limit is "
            f"{config.context_limit_tokens}"
        )
    started = time.monotonic()
    if config.kind == "mock":
        text = mock_completion_text(prompt.final_text, prompt.task_kind, config.model_name)
        latency = 0.0
    else:
        with _inflight_slot(config.max_inflight):
            text = _complete_remote(prompt.final_text, config)
        latency = time.monotonic() - started
    if not text:
        raise ProviderRejected("provider returned an empty completion")
    return Completion(
        text=text,
        provider_kind=config.kind,
        model_name=config.model_name,
        latency_seconds=latency,
        prompt_tokens=prompt.token_estimate,
        output_tokens=estimate_tokens(text),
    )


# --- mock provider ------------------------------------------------------------

_TASK_LINE_RE = re.compile(r"^Task: (chat|bias-detect|plan-check|charter-gen)$", re.MULTILINE)
_EVIDENCE_SECTION_RE = re.compile(r"### Evidence\n(.*?)(?=\n\n### |\Z)", re.DOTALL)
_EVIDENCE_MARKER_RE = re.compile(r"\[EV:([^\]\s]+)\]")
_SYSTEM_NAME_RE = re.compile(r"^System under test: (.+)$", re.MULTILINE)
_CHARTER_COUNT_RE = re.compile(r"^Charter count: (\d+)$", re.MULTILINE)
_PLAN_CASE_RE = re.compile(r"^- Case ([a-z0-9][a-z0-9_-]*):", re.MULTILINE)

# Keyword families, checked in order; first hit decides the enum value.
_CATEGORY_KEYWORDS = (
    ("neglected-subgroup", ("subgroup", "older", "regional", "dialect", "diversity", "underrepresented", "neglected")),
    ("sensitive-attribute", ("sensitive attribute", "skin tone", "gender", "race", "disability", "age")),
    ("data-imbalance", ("imbalanc", "skew", "training data", "majority group")),
    ("proxy-correlation", ("proxy", "correlat")),
    ("fairness-bug", ("fairness bug", "systematic failure", "defect")),
)
_GAP_KEYWORDS = (
    ("missing-demographic-coverage", ("demographic", "older", "age", "subgroup", "diversity", "skin tone", "signers")),
    ("untested-scenario", ("lighting", "camera", "resolution", "scenario", "condition", "environment")),
    ("hidden-correlation", ("proxy", "correlat")),
)
_GROUP_KEYWORDS = (
    ("older", "older adults"),
    ("age", "age-diverse users"),
    ("skin", "people with darker skin tones"),
    ("dialect", "regional signing communities"),
    ("regional", "regional signing communities"),
    ("motor", "users with limited motor control"),
    ("disab", "users with disabilities"),
    ("gender", "gender minorities"),
)
_FOCUS_KEYWORDS = (
    ("demographic coverage across user subgroups", ("demographic", "subgroup", "older", "age", "diversity")),
    ("robustness across capture conditions", ("lighting", "camera", "resolution", "scenario", "condition")),
    ("proxy correlations between attributes", ("proxy", "correlat")),
    ("support for users with distinct physical abilities", ("motor", "abilit", "accessib")),
)
_FOCUS_FALLBACK = "fairness-sensitive behaviour"


def _has_keyword(lowered: str, needle: str) -> bool:
    # Word-boundary at the start, prefix match at the end: "age" must not
    # fire inside "image", while "imbalanc" still covers "imbalanced".
    return re.search(r"\b" + re.escape(needle), lowered) is not None


def _keyword_pick(snippet: str, table, seed: int, salt: int, options) -> str:
    lowered = snippet.lower()
    for value, needles in table:
        if any(_has_keyword(lowered, needle) for needle in needles):
            return value
    return options[(seed + salt) % len(options)]


def _groups_for(snippet: str) -> tuple[str, ...]:
    lowered = snippet.lower()
    groups: list[str] = []
    for needle, group in _GROUP_KEYWORDS:
        if _has_keyword(lowered, needle) and group not in groups:
            groups.append(group)
    return tuple(groups) if groups else ("underrepresented user groups",)


def _focus_for(snippet: str) -> str:
    lowered = snippet.lower()
    for phrase, needles in _FOCUS_KEYWORDS:
        if any(_has_keyword(lowered, needle) for needle in needles):
            return phrase
    return _FOCUS_FALLBACK


def _parse_evidence(prompt_text: str) -> list[tuple[str, str]]:
    """(chunk_id, snippet) pairs from the evidence section, in order."""
    section_match = _EVIDENCE_SECTION_RE.search(prompt_text)
    if not section_match:
        return []
    section = section_match.group(1)
    markers = list(_EVIDENCE_MARKER_RE.finditer(section))
    items: list[tuple[str, str]] = []
    for i, marker in enumerate(markers):
        end = markers[i + 1].start() if i + 1 < len(markers) else len(section)
        items.append((marker.group(1), section[marker.end() : end].strip()))
    return items


def _request_section(prompt_text: str) -> str:
    pos = prompt_text.rfind("### Request\n")
    return prompt_text[pos + len("### Request\n") :] if pos >= 0 else prompt_text


def mock_completion_text(prompt_text: str, fallback_task: str, model_name: str) -> str:
    """Deterministic completion derived entirely from the prompt text.

    Cites at most the first three evidence ids found in the prompt's
    evidence section and fills free-text fields from the first sentence of
    each cited snippet; enum picks fall back to an FNV-seeded choice when
    no keyword family matches.
    """
    task_match = _TASK_LINE_RE.search(prompt_text)
    task = task_match.group(1) if task_match else fallback_task
    seed = fnv1a64_text(prompt_text)
    evidence = _parse_evidence(prompt_text)
    cited = evidence[:MOCK_CITATION_LIMIT]
    request = _request_section(prompt_text)

    if task == "chat":
        return _mock_chat(cited)
    if model_name == MOCK_MODEL_EMPTY:
        cited = []

    if task == "bias-detect":
        objects: list = [
            BiasFinding(
                category=_keyword_pick(snippet, _CATEGORY_KEYWORDS, seed, i, _enum_values(_CATEGORY_KEYWORDS)),
                description=first_sentence(snippet),
                affected_groups=_groups_for(snippet),
                severity=SEVERITIES[(seed + i) % len(SEVERITIES)],
                evidence_ids=(chunk_id,),
            )
            for i, (chunk_id, snippet) in enumerate(cited)
        ]
        preamble = _preamble(len(objects), "potential bias source")
    elif task == "plan-check":
        case_ids = _PLAN_CASE_RE.findall(request)
        objects = [
            PlanGap(
                gap_kind=_keyword_pick(snippet, _GAP_KEYWORDS, seed, i, _enum_values(_GAP_KEYWORDS)),
                description=first_sentence(snippet),
                related_case_ids=(case_ids[0],) if i == 0 and case_ids else (),
                suggested_cases=(f"Add a test case covering {_focus_for(snippet)}",),
                evidence_ids=(chunk_id,),
            )
            for i, (chunk_id, snippet) in enumerate(cited)
        ]
        preamble = _preamble(len(objects), "coverage gap")
    else:
        count_match = _CHARTER_COUNT_RE.search(request)
        count = int(count_match.group(1)) if count_match else 1
        name_match = _SYSTEM_NAME_RE.search(request)
        system_name = name_match.group(1).strip() if name_match else "the system under test"
        objects = []
        for i in range(count):
            if not cited:
                break
            chunk_id, snippet = cited[i % len(cited)]
            focus = _focus_for(snippet)
            objects.append(
                Charter(
                    mission=f"Charter {i + 1}: explore {focus} in {system_name}",
                    target_areas=(focus,),
                    fairness_risks=(first_sentence(snippet),),
                    resources_setup=(
                        "Representative test data spanning the target user groups",
                        "Instrumented build of the system under test",
                    ),
                    guiding_questions=(
                        f"Which user groups could be disadvantaged by gaps in {focus}?",
                        "What observation would demonstrate an unfair outcome here?",
                    ),
                    timebox_minutes=60,
                    evidence_ids=(chunk_id,),
                )
            )
        preamble = _preamble(len(objects), "exploratory charter")

    return preamble + "\n\n" + render_structured(objects, task)


def _enum_values(table) -> tuple[str, ...]:
    return tuple(value for value, _ in table)


def _preamble(count: int, noun: str) -> str:
    if count == 0:
        return f"No {noun}s are reported for this request."
    plural = "" if count == 1 else "s"
    return f"Identified {count} {noun}{plural}, each grounded in retrieved evidence."


def _mock_chat(cited: list[tuple[str, str]]) -> str:
    if not cited:
        return (
            "No supporting evidence was retrieved from the fairness literature "
            "for this request, so no grounded answer can be given. Try describing "
            "the system under test or asking about a fairness-testing concept."
        )
    lines = ["Grounded answer from the retrieved fairness literature:"]
    for chunk_id, snippet in cited:
        lines.append(f"- [EV:{chunk_id}] {first_sentence(snippet)}")
    lines.append("These sources indicate where to focus fairness testing for this request.")
    return "\n".join(lines)


# --- remote adapters ----------------------------------------------------------

_semaphores: dict[int, threading.BoundedSemaphore] = {}
_semaphores_lock = threading.Lock()


def _inflight_slot(max_inflight: int) -> threading.BoundedSemaphore:
    with _semaphores_lock:
        sem = _semaphores.get(max_inflight)
        if sem is None:
            sem = threading.BoundedSemaphore(max_inflight)
            _semaphores[max_inflight] = sem
        return sem


def _complete_remote(prompt_text: str, config: ProviderConfig) -> str:
    """One HTTP chat-completion call with a single retry on transient failure."""
    last_error: Exception | None = None
    for attempt in range(2):
        if attempt:
            time.sleep(_RETRY_BACKOFF_SECONDS * (2 ** (attempt - 1)))
        try:
            if config.kind == "remote-a":
                return _call_remote_a(prompt_text, config)
            return _call_remote_b(prompt_text, config)
        except ProviderRejected:
            raise
        except (requests.Timeout, requests.ConnectionError) as exc:
            last_error = exc
        except _TransientHttpError as exc:
            last_error = exc
    if isinstance(last_error, requests.Timeout):
        raise ProviderTimeout(f"provider '{config.kind}' timed out twice") from last_error
    raise ProviderTimeout(f"provider '{config.kind}' unavailable: {last_error}") from last_error


class _TransientHttpError(Exception):
    pass


def _check_status(response: requests.Response, kind: str) -> None:
    if response.status_code in _TRANSIENT_STATUS:
        raise _TransientHttpError(f"{kind} returned {response.status_code}")
    if response.status_code >= 400:
        raise ProviderRejected(
            f"{kind} rejected the request ({response.status_code}): {response.text[:300]}"
        )


def _call_remote_a(prompt_text: str, config: ProviderConfig) -> str:
    key = os.environ.get(config.credentials_env, "")
    response = requests.post(
        f"{config.base_url}/chat/completions",
        headers={"Authorization": f"Bearer {key}"},
        json={
            "model": config.model_name,
            "temperature": config.temperature,
            "max_tokens": config.max_output_tokens,
            "messages": [{"role": "user", "content": prompt_text}],
        },
        timeout=config.timeout_seconds,
    )
    _check_status(response, "remote-a")
    body = response.json()
    try:
        return body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise ProviderRejected(f"remote-a returned an unexpected payload: {exc}") from exc


def _call_remote_b(prompt_text: str, config: ProviderConfig) -> str:
    key = os.environ.get(config.credentials_env, "")
    response = requests.post(
        f"{config.base_url}/models/{config.model_name}:generateContent",
        params={"key": key},
        json={
            "contents": [{"parts": [{"text": prompt_text}]}],
            "generationConfig": {
                "temperature": config.temperature,
                "maxOutputTokens": config.max_output_tokens,
            },
        },
        timeout=config.timeout_seconds,
    )
    _check_status(response, "remote-b")
    body = response.json()
    try:
        parts = body["candidates"][0]["content"]["parts"]
        return "".join(part.get("text", "") for part in parts)
    except (KeyError, IndexError, TypeError) as exc:
        raise ProviderRejected(f"remote-b returned an unexpected payload: {exc}") from exc

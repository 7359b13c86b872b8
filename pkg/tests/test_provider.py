import pytest
import requests

from bita import provider
from bita.config import ProviderSettings
from bita.errors import (
    ContextOverflow,
    MissingCredentials,
    ProviderRejected,
    ProviderTimeout,
    UnknownProviderKind,
)
from bita.prompting import AssembledPrompt, evidence_ids_in
from bita.provider import (
    MOCK_MODEL_EMPTY,
    ProviderConfig,
    complete,
    mock_completion_text,
    select_provider,
)
from bita.schemas import parse_structured_text
from bita.textops import estimate_tokens

MOCK = ProviderConfig(kind="mock", model_name="mock-grounded")


def _prompt(text: str, task_kind: str = "chat") -> AssembledPrompt:
    return AssembledPrompt(
        final_text=text,
        task_kind=task_kind,
        included_evidence_ids=tuple(evidence_ids_in(text)),
        included_message_ids=(),
        dropped_sections=(),
        token_estimate=estimate_tokens(text),
    )


def _task_prompt(task: str, evidence_lines: list[str], request: str) -> AssembledPrompt:
    text = (
        "ROLE\n\n"
        f"Task: {task}\nINSTR\n\n"
        "### Evidence\n" + "\n".join(evidence_lines) + "\n\n"
        "### Request\n" + request
    )
    return _prompt(text, task)


EVIDENCE_LINES = [
    "[EV:a#0000] Older signers are missing from most training sets. Second sentence.",
    "[EV:b#0000] Lighting conditions change detection quality.",
    "[EV:c#0000] Proxy correlations hide discrimination.",
    "[EV:d#0000] A fourth snippet that must never be cited.",
]


# --- selection ------------------------------------------------------------------


def test_select_mock_needs_no_credentials():
    config = select_provider(ProviderSettings(kind="mock"))
    assert config.kind == "mock"


def test_select_remote_without_credentials_fails(monkeypatch):
    monkeypatch.delenv("BITA_REMOTE_A_KEY", raising=False)
    with pytest.raises(MissingCredentials):
        select_provider(ProviderSettings(kind="remote-a", model="m"))


def test_select_remote_with_credentials(monkeypatch):
    monkeypatch.setenv("BITA_REMOTE_A_KEY", "sk-test")
    config = select_provider(ProviderSettings(kind="remote-a", model="m"))
    assert config.kind == "remote-a"
    assert config.credentials_env == "BITA_REMOTE_A_KEY"


def test_select_falls_back_to_mock_only_when_allowed(monkeypatch):
    monkeypatch.delenv("BITA_REMOTE_B_KEY", raising=False)
    settings = ProviderSettings(kind="remote-b", model="m", allow_mock_fallback=True)
    assert select_provider(settings).kind == "mock"


def test_request_override_beats_config(monkeypatch):
    monkeypatch.setenv("BITA_REMOTE_B_KEY", "key")
    settings = ProviderSettings(kind="mock")
    config = select_provider(settings, override_kind="remote-b")
    assert config.kind == "remote-b"


def test_unknown_kind_rejected():
    with pytest.raises(UnknownProviderKind):
        select_provider(ProviderSettings(kind="other"))


# --- mock -----------------------------------------------------------------------


def test_mock_is_deterministic():
    prompt = _task_prompt("bias-detect", EVIDENCE_LINES, "System under test: X")
    first = complete(prompt, MOCK)
    second = complete(prompt, MOCK)
    assert first.text == second.text
    assert first.provider_kind == "mock"
    assert first.model_name == "mock-grounded"
    assert first.prompt_tokens == prompt.token_estimate


def test_mock_cites_only_first_three_prompt_markers():
    prompt = _task_prompt("bias-detect", EVIDENCE_LINES, "System under test: X")
    completion = complete(prompt, MOCK)
    findings = parse_structured_text(completion.text, "bias-detect")
    cited = {cid for f in findings for cid in f.evidence_ids}
    assert cited == {"a#0000", "b#0000", "c#0000"}
    assert "d#0000" not in cited


def test_mock_fills_descriptions_from_first_sentences():
    prompt = _task_prompt("bias-detect", EVIDENCE_LINES, "System under test: X")
    findings = parse_structured_text(complete(prompt, MOCK).text, "bias-detect")
    assert findings[0].description == "Older signers are missing from most training sets."


def test_mock_chat_with_no_markers_cites_nothing():
    prompt = _prompt("ROLE\n\nTask: chat\nINSTR\n\n### Request\nany fairness question")
    completion = complete(prompt, MOCK)
    assert evidence_ids_in(completion.text) == []
    assert "No supporting evidence" in completion.text


def test_mock_chat_cites_markers():
    text = (
        "ROLE\n\nTask: chat\nINSTR\n\n### Evidence\n"
        + "\n".join(EVIDENCE_LINES[:2])
        + "\n\n### Request\nwhat about fairness?"
    )
    completion = complete(_prompt(text), MOCK)
    assert evidence_ids_in(completion.text) == ["a#0000", "b#0000"]


def test_mock_charter_count_honored():
    prompt = _task_prompt(
        "charter-gen",
        EVIDENCE_LINES[:2],
        "System under test: Widget\n\nCharter count: 4\nPropose exactly 4 charters.",
    )
    charters = parse_structured_text(complete(prompt, MOCK).text, "charter-gen")
    assert len(charters) == 4
    assert all("Widget" in c.mission for c in charters)


def test_mock_plan_check_reuses_plan_case_ids():
    request = (
        "System under test: Widget\n\nTest plan p:\n- Case known-case: Title\n\nReview."
    )
    prompt = _task_prompt("plan-check", EVIDENCE_LINES[:2], request)
    gaps = parse_structured_text(complete(prompt, MOCK).text, "plan-check")
    for gap in gaps:
        assert set(gap.related_case_ids) <= {"known-case"}


def test_mock_empty_variant_returns_empty_list():
    prompt = _task_prompt("plan-check", EVIDENCE_LINES, "Review.")
    completion = complete(prompt, ProviderConfig(kind="mock", model_name=MOCK_MODEL_EMPTY))
    assert parse_structured_text(completion.text, "plan-check") == []


def test_mock_gap_kinds_follow_snippet_keywords():
    prompt = _task_prompt("plan-check", EVIDENCE_LINES[:3], "Review.")
    gaps = parse_structured_text(complete(prompt, MOCK).text, "plan-check")
    assert gaps[0].gap_kind == "missing-demographic-coverage"  # older signers
    assert gaps[1].gap_kind == "untested-scenario"  # lighting conditions
    assert gaps[2].gap_kind == "hidden-correlation"  # proxy correlations


def test_context_overflow_guard():
    prompt = _prompt("x" * 100)
    small = ProviderConfig(kind="mock", model_name="m", context_limit_tokens=10)
    with pytest.raises(ContextOverflow):
        complete(prompt, small)


def test_task_line_parsed_from_text_over_attribute():
    # The text says plan-check even though the attribute says chat.
    text = (
        "ROLE\n\nTask: plan-check\nINSTR\n\n### Evidence\n"
        + EVIDENCE_LINES[0]
        + "\n\n### Request\nReview."
    )
    out = mock_completion_text(text, "chat", "mock-grounded")
    assert parse_structured_text(out, "plan-check")


# --- remote adapters --------------------------------------------------------------


class _Response:
    def __init__(self, status_code: int, payload=None, text: str = ""):
        self.status_code = status_code
        self._payload = payload
        self.text = text

    def json(self):
        return self._payload


def _remote_config(kind: str) -> ProviderConfig:
    return ProviderConfig(
        kind=kind,
        model_name="m",
        credentials_env="TEST_KEY",
        base_url="http://example.test",
        timeout_seconds=1.0,
    )


def test_remote_a_parses_chat_completion(monkeypatch):
    monkeypatch.setenv("TEST_KEY", "k")
    calls = []

    def fake_post(url, **kwargs):
        calls.append(url)
        return _Response(200, {"choices": [{"message": {"content": "hello"}}]})

    monkeypatch.setattr(provider.requests, "post", fake_post)
    completion = complete(_prompt("fairness prompt"), _remote_config("remote-a"))
    assert completion.text == "hello"
    assert completion.provider_kind == "remote-a"
    assert calls == ["http://example.test/chat/completions"]


def test_remote_b_parses_generate_content(monkeypatch):
    monkeypatch.setenv("TEST_KEY", "k")

    def fake_post(url, **kwargs):
        assert url.endswith("/models/m:generateContent")
        return _Response(
            200, {"candidates": [{"content": {"parts": [{"text": "hi "}, {"text": "there"}]}}]}
        )

    monkeypatch.setattr(provider.requests, "post", fake_post)
    completion = complete(_prompt("p"), _remote_config("remote-b"))
    assert completion.text == "hi there"


def test_remote_rejection_is_not_retried(monkeypatch):
    monkeypatch.setenv("TEST_KEY", "k")
    calls = []

    def fake_post(url, **kwargs):
        calls.append(url)
        return _Response(400, text="bad request")

    monkeypatch.setattr(provider.requests, "post", fake_post)
    with pytest.raises(ProviderRejected):
        complete(_prompt("p"), _remote_config("remote-a"))
    assert len(calls) == 1


def test_remote_timeout_retries_once_then_fails(monkeypatch):
    monkeypatch.setenv("TEST_KEY", "k")
    monkeypatch.setattr(provider.time, "sleep", lambda _s: None)
    calls = []

    def fake_post(url, **kwargs):
        calls.append(url)
        raise requests.Timeout("slow")

    monkeypatch.setattr(provider.requests, "post", fake_post)
    with pytest.raises(ProviderTimeout):
        complete(_prompt("p"), _remote_config("remote-a"))
    assert len(calls) == 2


def test_remote_transient_error_then_success(monkeypatch):
    monkeypatch.setenv("TEST_KEY", "k")
    monkeypatch.setattr(provider.time, "sleep", lambda _s: None)
    responses = [
        _Response(503, text="unavailable"),
        _Response(200, {"choices": [{"message": {"content": "recovered"}}]}),
    ]

    def fake_post(url, **kwargs):
        return responses.pop(0)

    monkeypatch.setattr(provider.requests, "post", fake_post)
    assert complete(_prompt("p"), _remote_config("remote-a")).text == "recovered"

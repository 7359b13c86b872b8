import json

import pytest
import yaml

from bita.cli import run_cli
from conftest import FIXTURES_DIR, SAMPLE_CORPUS_DIR


@pytest.fixture()
def config_file(tmp_path) -> str:
    path = tmp_path / "config.yaml"
    path.write_text(
        yaml.safe_dump(
            {
                "store": {"path": str(tmp_path / "cli.db")},
                "corpus": {"dir": str(SAMPLE_CORPUS_DIR)},
            }
        )
    )
    return str(path)


def _cli(config_file: str, *args: str) -> list[str]:
    return ["--config", config_file, *args]


def test_corpus_add_and_list(config_file, capsys):
    files = sorted(str(p) for p in SAMPLE_CORPUS_DIR.glob("*.md"))
    assert run_cli(_cli(config_file, "corpus", "add", *files)) == 0
    out = capsys.readouterr().out
    assert out.count("added") == len(files)

    assert run_cli(_cli(config_file, "corpus", "add", files[0])) == 0
    assert "unchanged" in capsys.readouterr().out

    assert run_cli(_cli(config_file, "corpus", "list", "--format", "json")) == 0
    docs = json.loads(capsys.readouterr().out)["documents"]
    assert len(docs) == len(files)
    assert all(len(d["checksum"]) == 16 for d in docs)


def test_corpus_list_table_shows_checksums(config_file, capsys):
    run_cli(_cli(config_file, "corpus", "add", str(SAMPLE_CORPUS_DIR / "fairness-debt.md")))
    capsys.readouterr()
    assert run_cli(_cli(config_file, "corpus", "list")) == 0
    out = capsys.readouterr().out
    assert "fairness-debt" in out


def test_index_build_writes_cache(config_file, tmp_path, capsys):
    run_cli(_cli(config_file, "corpus", "add", str(SAMPLE_CORPUS_DIR / "fairness-debt.md")))
    capsys.readouterr()
    assert run_cli(_cli(config_file, "index", "build")) == 0
    out = capsys.readouterr().out
    assert "indexed 1 chunks" in out
    assert (tmp_path / "cli.db.index.json").exists()


def test_ask_json_creates_session(config_file, capsys):
    files = sorted(str(p) for p in SAMPLE_CORPUS_DIR.glob("*.md"))
    run_cli(_cli(config_file, "corpus", "add", *files))
    capsys.readouterr()
    code = run_cli(
        _cli(config_file, "ask", "what is a fairness bug?", "--format", "json")
    )
    captured = capsys.readouterr()
    assert code == 0
    payload = json.loads(captured.out)
    assert payload["refused"] is False
    assert payload["evidence"]
    assert captured.err.startswith("session: ")


def test_task_bias_detect_json(config_file, capsys):
    files = sorted(str(p) for p in SAMPLE_CORPUS_DIR.glob("*.md"))
    run_cli(_cli(config_file, "corpus", "add", *files))
    capsys.readouterr()
    code = run_cli(
        _cli(
            config_file,
            "task",
            "bias-detect",
            "--system",
            str(FIXTURES_DIR / "translator.md"),
            "--format",
            "json",
        )
    )
    captured = capsys.readouterr()
    assert code == 0
    findings = json.loads(captured.out)["findings"]
    assert len(findings) >= 1
    assert all(f["evidence_ids"] for f in findings)
    # The machine-readable output round-trips through the task schema.
    from bita.schemas import parse_structured_text

    parsed = parse_structured_text("```json\n" + captured.out + "\n```", "bias-detect")
    assert [f.category for f in parsed] == [f["category"] for f in findings]


def test_task_plan_check_table(config_file, capsys):
    files = sorted(str(p) for p in SAMPLE_CORPUS_DIR.glob("*.md"))
    run_cli(_cli(config_file, "corpus", "add", *files))
    capsys.readouterr()
    code = run_cli(
        _cli(
            config_file,
            "task",
            "plan-check",
            "--system",
            str(FIXTURES_DIR / "translator.md"),
            "--plan",
            str(FIXTURES_DIR / "translator-plan.md"),
        )
    )
    captured = capsys.readouterr()
    assert code == 0
    assert "missing-demographic-coverage" in captured.out


def test_charters_count_zero_is_usage_error(config_file, capsys):
    code = run_cli(
        _cli(
            config_file,
            "task",
            "charters",
            "--system",
            str(FIXTURES_DIR / "translator.md"),
            "--count",
            "0",
        )
    )
    captured = capsys.readouterr()
    assert code == 1
    assert "--count" in captured.err


def test_unknown_subcommand_is_usage_error(config_file, capsys):
    assert run_cli(_cli(config_file, "frobnicate")) == 1


def test_pipeline_error_exit_code(config_file, tmp_path, capsys):
    bad = tmp_path / "not-a-doc.md"
    bad.write_text("this file has no front matter")
    assert run_cli(_cli(config_file, "corpus", "add", str(bad))) == 2
    assert "front-matter" in capsys.readouterr().err


def test_session_replay_to_file(config_file, tmp_path, capsys):
    files = sorted(str(p) for p in SAMPLE_CORPUS_DIR.glob("*.md"))
    run_cli(_cli(config_file, "corpus", "add", *files))
    run_cli(_cli(config_file, "ask", "what is a fairness bug?", "--format", "json"))
    err = capsys.readouterr().err
    session_id = err.split("session: ", 1)[1].split()[0].strip()

    out_file = tmp_path / "transcript.md"
    assert run_cli(_cli(config_file, "session", "replay", session_id, "--out", str(out_file))) == 0
    capsys.readouterr()
    transcript = out_file.read_text()
    assert "## Turn 0 — user" in transcript

    assert run_cli(_cli(config_file, "session", "replay", session_id)) == 0
    assert capsys.readouterr().out == transcript


def test_replay_unknown_session_pipeline_error(config_file, capsys):
    assert run_cli(_cli(config_file, "session", "replay", "missing-session")) == 2

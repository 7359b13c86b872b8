"""Operator command line: corpus management, index builds, one-shot tasks,
session replay, and serving.

Every command drives the same Assistant pipeline as the HTTP API. Exit
codes: 0 success, 1 usage error, 2 pipeline error.
"""

from __future__ import annotations

import json
import sys
from dataclasses import asdict
from pathlib import Path

import click

from .config import AppConfig, load_config
from .errors import BitaError
from .schemas import load_system_description, load_test_plan
from .tasks import Assistant


def _build_assistant(ctx: click.Context) -> Assistant:
    config: AppConfig = load_config(ctx.obj.get("config_path"))
    return Assistant(config)


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None, help="YAML config file.")
@click.pass_context
def cli(ctx: click.Context, config_path: str | None):
    """Fairness-testing assistant."""
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path


# --- corpus --------------------------------------------------------------------


@cli.group()
def corpus():
    """Manage the fairness-literature corpus."""


@corpus.command("add")
@click.argument("files", nargs=-1, required=True, type=click.Path(exists=True))
@click.pass_context
def corpus_add(ctx: click.Context, files: tuple[str, ...]):
    """Ingest front-matter documents into the corpus store."""
    assistant = _build_assistant(ctx)
    for path in files:
        doc, created = assistant.ingest_file(path)
        state = "added" if created else "unchanged"
        click.echo(f"{state}  {doc.doc_id}  {doc.checksum:016x}")


@corpus.command("list")
@click.option("--format", "fmt", type=click.Choice(["table", "json"]), default="table")
@click.pass_context
def corpus_list(ctx: click.Context, fmt: str):
    """List ingested documents with checksums."""
    assistant = _build_assistant(ctx)
    docs = assistant.store.list_documents()
    if fmt == "json":
        click.echo(
            json.dumps(
                {
                    "documents": [
                        {
                            "doc_id": d.doc_id,
                            "title": d.title,
                            "authors": list(d.authors),
                            "year": d.year,
                            "kind": d.kind,
                            "checksum": f"{d.checksum:016x}",
                        }
                        for d in docs
                    ]
                },
                indent=2,
                ensure_ascii=False,
            )
        )
        return
    if not docs:
        click.echo("(corpus is empty)")
        return
    width = max(len(d.doc_id) for d in docs)
    for d in docs:
        click.echo(f"{d.doc_id:<{width}}  {d.kind:<18}  {d.year}  {d.checksum:016x}  {d.title}")


# --- index ---------------------------------------------------------------------


@cli.group()
def index():
    """Retrieval index operations."""


@index.command("build")
@click.pass_context
def index_build(ctx: click.Context):
    """Build the index from the store and write the cache file."""
    assistant = _build_assistant(ctx)
    built, cache = assistant.build_index_cache()
    target = cache if cache is not None else "(memory only)"
    click.echo(f"indexed {len(built)} chunks from {len(assistant.store.list_documents())} documents -> {target}")


# --- chat ----------------------------------------------------------------------


@cli.command("ask")
@click.argument("text")
@click.option("--session", "session_id", default=None, help="Existing session id; a new session is created when omitted.")
@click.option("--format", "fmt", type=click.Choice(["table", "json"]), default="table")
@click.pass_context
def ask(ctx: click.Context, text: str, session_id: str | None, fmt: str):
    """One chat turn against the assistant."""
    assistant = _build_assistant(ctx)
    if session_id is None:
        session = assistant.create_session("cli chat")
        session_id = session.session_id
        click.echo(f"session: {session_id}", err=True)
    outcome = assistant.chat(session_id, text)
    if fmt == "json":
        click.echo(
            json.dumps(
                {
                    "refused": outcome.refused,
                    "reason": outcome.reason,
                    "message": outcome.message.content if outcome.message else None,
                    "evidence": [asdict(ev) for ev in outcome.evidence],
                },
                indent=2,
                ensure_ascii=False,
            )
        )
        return
    if outcome.refused:
        click.echo(f"refused: {outcome.reason}")
        return
    click.echo(outcome.message.content)
    if outcome.evidence:
        click.echo("")
        click.echo("evidence:")
        for ev in outcome.evidence:
            click.echo(f"- [{ev.chunk_id}] fused={ev.fused_score:.4f}")


# --- tasks ---------------------------------------------------------------------


@cli.group()
def task():
    """Run one-shot fairness-testing tasks."""


def _one_shot_session(assistant: Assistant, label: str) -> str:
    return assistant.create_session(f"cli {label}").session_id


def _emit_task_json(key: str, outputs) -> None:
    click.echo(json.dumps({key: [asdict(o) for o in outputs]}, indent=2, ensure_ascii=False))


@task.command("bias-detect")
@click.option("--system", "system_file", required=True, type=click.Path(exists=True))
@click.option("--session", "session_id", default=None)
@click.option("--format", "fmt", type=click.Choice(["table", "json"]), default="table")
@click.pass_context
def task_bias_detect(ctx: click.Context, system_file: str, session_id: str | None, fmt: str):
    """Detect potential bias sources for a described system."""
    assistant = _build_assistant(ctx)
    sysdesc = load_system_description(system_file)
    session_id = session_id or _one_shot_session(assistant, "bias-detect")
    result = assistant.detect_bias(session_id, sysdesc=sysdesc)
    if fmt == "json":
        _emit_task_json("findings", result.outputs)
        return
    if not result.outputs:
        click.echo("no potential bias sources identified")
    for i, finding in enumerate(result.outputs, start=1):
        click.echo(f"{i}. [{finding.category} | {finding.severity}] {finding.description}")
        click.echo(f"   groups: {', '.join(finding.affected_groups)}")
        click.echo(f"   evidence: {', '.join(finding.evidence_ids)}")


@task.command("plan-check")
@click.option("--system", "system_file", required=True, type=click.Path(exists=True))
@click.option("--plan", "plan_file", required=True, type=click.Path(exists=True))
@click.option("--session", "session_id", default=None)
@click.option("--format", "fmt", type=click.Choice(["table", "json"]), default="table")
@click.pass_context
def task_plan_check(
    ctx: click.Context, system_file: str, plan_file: str, session_id: str | None, fmt: str
):
    """Review a test plan for fairness coverage gaps."""
    assistant = _build_assistant(ctx)
    sysdesc = load_system_description(system_file)
    plan = load_test_plan(plan_file)
    session_id = session_id or _one_shot_session(assistant, "plan-check")
    result = assistant.check_plan(session_id, sysdesc=sysdesc, plan=plan)
    if fmt == "json":
        _emit_task_json("gaps", result.outputs)
        return
    if not result.outputs:
        click.echo("no coverage gaps identified")
    for i, gap in enumerate(result.outputs, start=1):
        click.echo(f"{i}. [{gap.gap_kind}] {gap.description}")
        if gap.related_case_ids:
            click.echo(f"   related cases: {', '.join(gap.related_case_ids)}")
        for suggestion in gap.suggested_cases:
            click.echo(f"   suggest: {suggestion}")
        click.echo(f"   evidence: {', '.join(gap.evidence_ids)}")


@task.command("charters")
@click.option("--system", "system_file", required=True, type=click.Path(exists=True))
@click.option("--count", default=2, show_default=True)
@click.option("--session", "session_id", default=None)
@click.option("--format", "fmt", type=click.Choice(["table", "json"]), default="table")
@click.pass_context
def task_charters(
    ctx: click.Context, system_file: str, count: int, session_id: str | None, fmt: str
):
    """Generate exploratory fairness-testing charters."""
    if not 1 <= count <= 10:
        raise click.UsageError(f"--count must be between 1 and 10, got {count}")
    assistant = _build_assistant(ctx)
    sysdesc = load_system_description(system_file)
    session_id = session_id or _one_shot_session(assistant, "charters")
    result = assistant.generate_charters(session_id, count, sysdesc=sysdesc)
    if fmt == "json":
        _emit_task_json("charters", result.outputs)
        return
    for i, charter in enumerate(result.outputs, start=1):
        click.echo(f"{i}. {charter.mission}")
        click.echo(f"   areas: {', '.join(charter.target_areas)}")
        click.echo(f"   risks: {', '.join(charter.fairness_risks)}")
        for question in charter.guiding_questions:
            click.echo(f"   ask: {question}")
        click.echo(f"   timebox: {charter.timebox_minutes} min")
        click.echo(f"   evidence: {', '.join(charter.evidence_ids)}")


# --- sessions --------------------------------------------------------------------


@cli.group()
def session():
    """Session inspection."""


@session.command("replay")
@click.argument("session_id")
@click.option("--out", "out_file", type=click.Path(), default=None, help="Write the transcript to a Markdown file.")
@click.pass_context
def session_replay(ctx: click.Context, session_id: str, out_file: str | None):
    """Re-render a session transcript from storage."""
    assistant = _build_assistant(ctx)
    transcript = assistant.replay(session_id)
    if out_file:
        Path(out_file).write_text(transcript, encoding="utf-8")
        click.echo(f"wrote {out_file}")
    else:
        click.echo(transcript, nl=False)


# --- serve -----------------------------------------------------------------------


@cli.command("serve")
@click.option("--config", "serve_config", type=click.Path(), default=None, help="YAML config file (overrides the group option).")
@click.pass_context
def serve_command(ctx: click.Context, serve_config: str | None):
    """Run the HTTP API server."""
    from .service import serve

    config = load_config(serve_config or ctx.obj.get("config_path"))
    serve(config)


def run_cli(argv: list[str]) -> int:
    """Entry point with the documented exit-code contract."""
    try:
        cli.main(args=list(argv), standalone_mode=False, obj={})
        return 0
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except BitaError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()

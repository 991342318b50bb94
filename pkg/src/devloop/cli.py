"""Command-line interface: session workflow, benchmark harness, service.

Follows the usual exit-code convention: 0 on success, 1 for package errors
(the stable error code is printed to stderr), 2 for usage mistakes (from
argparse).  Structured arguments (edits, feedback) are passed as inline JSON
or as ``@path/to/file.json``.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path

import yaml

from . import bench, demo
from .artifacts import UseCaseEdit
from .config import apply_backend_overrides, load_config
from .errors import DevloopError, InvalidInput
from .gateway import Mode
from .session import ManualFeedback, Phase, Session
from .service import snapshot

REVIEW_PHASES = (Phase.USE_CASE_REVIEW, Phase.DESIGN_REVIEW)
GATE_PHASES = REVIEW_PHASES + (Phase.MANUAL_VALIDATION, Phase.COMPLETED, Phase.ABORTED)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except DevloopError as exc:
        print(f"{exc.code}: {exc.message}", file=sys.stderr)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="devloop",
        description="Human-in-the-loop development sessions over a chat model.",
    )
    parser.add_argument("--base-dir", default="sessions",
                        help="directory holding session event logs")
    parser.add_argument("--config", help="YAML config file")
    parser.add_argument("--mode", choices=[m.value for m in Mode],
                        help="override the backend mode")
    parser.add_argument("--cassette", help="override the cassette path")
    commands = parser.add_subparsers(dest="command", required=True)

    session = commands.add_parser("session", help="drive one development session")
    session_sub = session.add_subparsers(dest="subcommand", required=True)

    new = session_sub.add_parser("new", help="create a session and draft use cases")
    new.add_argument("task", help="the task prompt")
    new.add_argument("--id", dest="session_id", required=True)
    new.set_defaults(handler=cmd_new)

    show = session_sub.add_parser("show", help="print the session snapshot")
    show.add_argument("session_id")
    show.set_defaults(handler=cmd_show)

    edit = session_sub.add_parser("edit-usecases", help="apply a review edit batch")
    edit.add_argument("session_id")
    edit.add_argument("edits", help='JSON list [{"action","id","text"}] or @file')
    edit.set_defaults(handler=cmd_edit_usecases)

    edit_design = session_sub.add_parser("edit-design", help="replace the design file list")
    edit_design.add_argument("session_id")
    edit_design.add_argument("files", help='JSON list [{"name","responsibility"}] or @file')
    edit_design.set_defaults(handler=cmd_edit_design)

    approve = session_sub.add_parser("approve", help="approve the pending review gate")
    approve.add_argument("session_id")
    approve.set_defaults(handler=cmd_approve)

    run_auto = session_sub.add_parser(
        "run-auto", help="run the automatic pipeline to the next human gate"
    )
    run_auto.add_argument("session_id")
    run_auto.set_defaults(handler=cmd_run_auto)

    feedback = session_sub.add_parser("feedback", help="submit manual validation results")
    feedback.add_argument("session_id")
    feedback.add_argument("feedback", help="JSON feedback document or @file")
    feedback.set_defaults(handler=cmd_feedback)

    abort = session_sub.add_parser("abort", help="abort the session")
    abort.add_argument("session_id")
    abort.add_argument("--reason", default="user abort")
    abort.set_defaults(handler=cmd_abort)

    export = session_sub.add_parser("export", help="write the event log and final code")
    export.add_argument("session_id")
    export.add_argument("--out", required=True)
    export.set_defaults(handler=cmd_export)

    bench_cmd = commands.add_parser("bench", help="benchmark harness")
    bench_sub = bench_cmd.add_subparsers(dest="subcommand", required=True)

    bench_load = bench_sub.add_parser("load", help="validate and list a task suite")
    bench_load.add_argument("--suite", help="suite file (defaults to the shipped sample)")
    bench_load.set_defaults(handler=cmd_bench_load)

    bench_run = bench_sub.add_parser("run", help="drive suite tasks with scripted verdicts")
    bench_run.add_argument("--suite")
    bench_run.add_argument("--task", help="run only this task id")
    bench_run.add_argument("--out", required=True, help="records file to write")
    bench_run.set_defaults(handler=cmd_bench_run)

    bench_report = bench_sub.add_parser("report", help="aggregate records into a report")
    bench_report.add_argument("--records", required=True)
    bench_report.add_argument("--out", required=True)
    bench_report.add_argument("--format", default="structured-text",
                              choices=["structured-text", "delimited-table"])
    bench_report.set_defaults(handler=cmd_bench_report)

    serve = commands.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--suite", help="suite file for the bench endpoints")
    serve.set_defaults(handler=cmd_serve)

    demo_cmd = commands.add_parser("demo", help="run the scripted iris walkthrough")
    demo_cmd.add_argument("action", choices=["record", "replay"])
    demo_cmd.add_argument("--id", dest="session_id", default=demo.DEMO_SESSION_ID)
    demo_cmd.set_defaults(handler=cmd_demo)

    return parser


def _config(args):
    config = load_config(args.config)
    return apply_backend_overrides(config, args.mode, args.cassette)


def _load(args) -> Session:
    return Session.load(args.session_id, Path(args.base_dir))


def _structured(raw: str):
    if raw.startswith("@"):
        path = Path(raw[1:])
        if not path.exists():
            raise InvalidInput(f"argument file not found: {path}")
        raw = path.read_text(encoding="utf-8")
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"argument is not valid JSON: {exc}") from exc


def _print_snapshot(session: Session):
    shot = snapshot(session.state)
    print(f"session {shot['session_id']}: {shot['phase']}")
    if shot["use_cases"]:
        for uid, entry in sorted(shot["use_cases"]["entries"].items(), key=lambda e: int(e[0])):
            print(f"  [{uid}] {entry['text']}")
    print(
        f"  edits h1={shot['h1']} interventions h2={shot['h2']} "
        f"manual rounds {shot['manual_rounds']}/{shot['max_manual_rounds']} "
        f"tokens {shot['usage']['total']}"
    )
    if shot["last_problem"]:
        print(f"  open problem: {shot['last_problem'].splitlines()[0]}")


def cmd_new(args) -> int:
    session = Session.create(args.task, _config(args), Path(args.base_dir), args.session_id)
    try:
        session.draft_use_cases()
    finally:
        session.persist()
    _print_snapshot(session)
    return 0


def cmd_show(args) -> int:
    _print_snapshot(_load(args))
    return 0


def cmd_edit_usecases(args) -> int:
    edits = [
        UseCaseEdit(e.get("action", ""), e.get("id"), e.get("text"))
        for e in _structured(args.edits)
    ]
    session = _load(args)
    session.submit_use_case_edits(edits)
    session.persist()
    _print_snapshot(session)
    return 0


def cmd_edit_design(args) -> int:
    files = [(f.get("name", ""), f.get("responsibility", "")) for f in _structured(args.files)]
    session = _load(args)
    session.submit_design_edits(files)
    session.persist()
    _print_snapshot(session)
    return 0


def cmd_approve(args) -> int:
    session = _load(args)
    try:
        if session.state.phase is Phase.DESIGN_REVIEW:
            session.approve_design()
        else:
            session.approve_use_cases()
    finally:
        session.persist()
    _print_snapshot(session)
    return 0


def cmd_run_auto(args) -> int:
    session = _load(args)
    try:
        while session.state.phase not in GATE_PHASES:
            if session.state.phase is Phase.DESIGNING:
                session.produce_design()
            else:
                session.run_auto_pipeline()
    finally:
        session.persist()
    _print_snapshot(session)
    return 0


def cmd_feedback(args) -> int:
    feedback = ManualFeedback.from_dict(_structured(args.feedback))
    session = _load(args)
    try:
        session.submit_manual_feedback(feedback)
    finally:
        session.persist()
    _print_snapshot(session)
    return 0


def cmd_abort(args) -> int:
    session = _load(args)
    session.abort(args.reason)
    session.persist()
    _print_snapshot(session)
    return 0


def cmd_export(args) -> int:
    session = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log = session.session_dir / "events.jsonl"
    if log.exists():
        shutil.copy(log, out / "events.jsonl")
    if session.state.bundle is not None:
        files_dir = out / "files"
        files_dir.mkdir(exist_ok=True)
        for code_file in session.state.bundle.files:
            (files_dir / code_file.name).write_text(
                code_file.file_content(), encoding="utf-8"
            )
    (out / "summary.yaml").write_text(
        yaml.safe_dump(snapshot(session.state), sort_keys=True), encoding="utf-8"
    )
    print(f"exported session {session.state.id} to {out}")
    return 0


def cmd_bench_load(args) -> int:
    tasks = bench.load_tasks(args.suite)
    for task in tasks:
        print(f"{task.task_id}: {task.name} ({len(task.reference_use_cases)} references)")
    return 0


def cmd_bench_run(args) -> int:
    tasks = bench.load_tasks(args.suite)
    if args.task:
        tasks = [t for t in tasks if t.task_id == args.task]
        if not tasks:
            raise InvalidInput(f"unknown benchmark task {args.task!r}")
    config = _config(args)
    records = []
    for task in tasks:
        record = bench.drive_task(
            task, config, bench.ScriptedVerdicts(), Path(args.base_dir)
        )
        records.append(record)
        flag = " (aborted)" if record.aborted else ""
        print(f"{task.task_id}: pass rate {float(record.pass_rate):.2%}{flag}")
    report = bench.aggregate(records)
    bench.export_report(report, args.out)
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def cmd_bench_report(args) -> int:
    report = bench.import_report(args.records)
    bench.export_report(report, args.out, format=args.format)
    print(
        f"{len(report.per_task)} tasks, mean pass rate "
        f"{float(report.avg_pass_rate):.2%}, mean revisions "
        f"{float(report.avg_total_revisions):.2f}"
    )
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    serve(Path(args.base_dir), host=args.host, port=args.port,
          default_config=_config(args), suite_path=args.suite)
    return 0


def cmd_demo(args) -> int:
    if not args.cassette:
        raise InvalidInput("the demo needs --cassette to know where the recording lives")
    cassette = Path(args.cassette)
    if args.action == "record":
        session = demo.record_demo_cassette(cassette, Path(args.base_dir))
    else:
        session = demo.replay_demo_session(cassette, Path(args.base_dir), args.session_id)
    _print_snapshot(session)
    return 0


if __name__ == "__main__":
    sys.exit(main())

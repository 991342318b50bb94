"""HTTP facade over sessions and the benchmark harness.

Every response body is an envelope: ``{"ok": true, "data": ...}`` on success,
``{"ok": false, "error": {"code", "message"}}`` on failure, with the error
code taken verbatim from the raised package error.  The service holds no
state beyond the event logs on disk, so a restarted process picks up every
session where it left off.
"""

from __future__ import annotations

import threading
import time
import uuid
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import bench
from .artifacts import UseCaseEdit
from .errors import DevloopError, InvalidInput, LoadError, PathViolation
from .session import ManualFeedback, Phase, Session, SessionConfig

EVENT_LOG_NAME = "events.jsonl"

_ERROR_STATUS = {
    "LoadError": 404,
    "IllegalTransition": 409,
    "DraftFailed": 409,
    "InvalidInput": 400,
    "InvalidEdit": 400,
    "InvalidFeedback": 400,
    "MalformedUseCases": 400,
    "MalformedDesign": 400,
    "NoJsonFound": 400,
    "NoFilesParsed": 400,
    "DuplicateFile": 400,
    "SuiteError": 400,
    "PathViolation": 400,
    "IoError": 400,
    "EmptyResponse": 400,
}


def ok(data) -> dict:
    return {"ok": True, "data": data}


def fail(code: str, message: str) -> dict:
    return {"ok": False, "error": {"code": code, "message": message}}


def snapshot(state) -> dict:
    """Read model served to clients; everything derivable from the event log."""
    usage = state.usage_totals()
    config = state.config
    return {
        "session_id": state.id,
        "phase": state.phase.value,
        "task": state.task_prompt,
        "h1": state.h1,
        "h2": state.h2,
        "manual_rounds": state.manual_rounds,
        "unit_iters": state.unit_iters,
        "system_iters": state.system_iters,
        "max_auto_iterations": config.max_auto_iterations if config else None,
        "max_manual_rounds": config.max_manual_rounds if config else None,
        "design_review_enabled": config.design_review_enabled if config else None,
        "use_cases": state.use_cases.to_dict() if state.use_cases else None,
        "design": state.design.to_dict() if state.design else None,
        "bundle": _bundle_summary(state.bundle),
        "candidates": [
            {k: c.get(k) for k in ("round", "clean_start", "findings_count", "manual_passes")}
            for c in state.candidate_bundles
        ],
        "last_problem": state.last_problem,
        "usage": {
            "prompt_tokens": usage.prompt_tokens,
            "completion_tokens": usage.completion_tokens,
            "total": usage.total,
        },
        "last_seq": len(state.events),
    }


def _bundle_summary(bundle) -> dict | None:
    if bundle is None:
        return None
    return {
        "round": bundle.round,
        "files": [{"name": f.name, "language_tag": f.language_tag} for f in bundle.files],
    }


class SessionStore:
    """Disk-backed session registry with one lock per session id."""

    def __init__(self, base_dir: Path):
        self.base_dir = Path(base_dir)
        self._cache: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry = threading.Lock()

    def lock(self, session_id: str) -> threading.Lock:
        with self._registry:
            return self._locks.setdefault(session_id, threading.Lock())

    def create(self, task: str, config: SessionConfig, session_id: str | None) -> Session:
        session_id = session_id or uuid.uuid4().hex[:12]
        with self._registry:
            exists = session_id in self._cache
        if exists or (self.base_dir / session_id / EVENT_LOG_NAME).exists():
            raise InvalidInput(f"session {session_id!r} already exists")
        session = Session.create(task, config, self.base_dir, session_id)
        session.persist()
        with self._registry:
            self._cache[session_id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self._registry:
            cached = self._cache.get(session_id)
        if cached is not None:
            return cached
        session = Session.load(session_id, self.base_dir)
        with self._registry:
            return self._cache.setdefault(session_id, session)

    def ids(self) -> list[str]:
        found = set(self._cache)
        if self.base_dir.exists():
            for entry in self.base_dir.iterdir():
                if (entry / EVENT_LOG_NAME).exists():
                    found.add(entry.name)
        return sorted(found)


def create_app(base_dir: Path | str, default_config: SessionConfig | None = None,
               suite_path: Path | str | None = None) -> FastAPI:
    store = SessionStore(Path(base_dir))
    app = FastAPI(title="devloop", docs_url=None, redoc_url=None)
    app.state.store = store
    app.state.default_config = default_config or SessionConfig()
    app.state.suite_path = suite_path

    @app.exception_handler(DevloopError)
    async def on_package_error(request: Request, exc: DevloopError):
        status = _ERROR_STATUS.get(exc.code, 500)
        return JSONResponse(status_code=status, content=fail(exc.code, exc.message))

    @app.exception_handler(Exception)
    async def on_unexpected(request: Request, exc: Exception):
        return JSONResponse(status_code=500, content=fail("InternalError", str(exc)))

    def mutate(session_id: str, command):
        """Run one command under the session lock and persist the outcome."""
        session = store.get(session_id)
        with store.lock(session_id):
            try:
                command(session)
            finally:
                session.persist()
        return ok(snapshot(session.state))

    @app.post("/api/sessions")
    def create_session(body: dict):
        task = body.get("task", "")
        config = (
            SessionConfig.from_dict(body["config"])
            if body.get("config")
            else app.state.default_config
        )
        session = store.create(task, config, body.get("session_id"))
        return ok(snapshot(session.state))

    @app.get("/api/sessions")
    def list_sessions():
        return ok({"sessions": store.ids()})

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str):
        return ok(snapshot(store.get(session_id).state))

    @app.post("/api/sessions/{session_id}/use-cases/edits")
    def edit_use_cases(session_id: str, body: dict):
        edits = [
            UseCaseEdit(e.get("action", ""), e.get("id"), e.get("text"))
            for e in body.get("edits", [])
        ]
        return mutate(session_id, lambda s: s.submit_use_case_edits(edits))

    @app.post("/api/sessions/{session_id}/use-cases/draft")
    def draft_use_cases(session_id: str):
        return mutate(session_id, lambda s: s.draft_use_cases())

    @app.post("/api/sessions/{session_id}/use-cases/approve")
    def approve_use_cases(session_id: str):
        return mutate(session_id, lambda s: s.approve_use_cases())

    @app.get("/api/sessions/{session_id}/design")
    def get_design(session_id: str):
        state = store.get(session_id).state
        return ok({"design": state.design.to_dict() if state.design else None})

    @app.post("/api/sessions/{session_id}/design/produce")
    def produce_design(session_id: str):
        return mutate(session_id, lambda s: s.produce_design())

    @app.post("/api/sessions/{session_id}/design/edits")
    def edit_design(session_id: str, body: dict):
        files = [(f.get("name", ""), f.get("responsibility", "")) for f in body.get("files", [])]
        return mutate(session_id, lambda s: s.submit_design_edits(files))

    @app.post("/api/sessions/{session_id}/design/approve")
    def approve_design(session_id: str):
        return mutate(session_id, lambda s: s.approve_design())

    @app.post("/api/sessions/{session_id}/advance")
    def advance(session_id: str):
        return mutate(session_id, lambda s: s.advance_auto())

    @app.post("/api/sessions/{session_id}/run-auto")
    def run_auto(session_id: str):
        return mutate(session_id, lambda s: s.run_auto_pipeline())

    @app.post("/api/sessions/{session_id}/feedback")
    def feedback(session_id: str, body: dict):
        parsed = ManualFeedback.from_dict(body)
        return mutate(session_id, lambda s: s.submit_manual_feedback(parsed))

    @app.post("/api/sessions/{session_id}/abort")
    def abort(session_id: str, body: dict | None = None):
        reason = (body or {}).get("reason", "user abort")
        return mutate(session_id, lambda s: s.abort(reason))

    @app.get("/api/sessions/{session_id}/events")
    def events(session_id: str, after: int = 0, wait: float = 0.0):
        session = store.get(session_id)
        deadline = time.monotonic() + min(max(wait, 0.0), 25.0)
        while True:
            with store.lock(session_id):
                pending = [e for e in session.state.events if e.seq > after]
            if pending or time.monotonic() >= deadline:
                break
            time.sleep(0.05)
        return ok({
            "events": [
                {"seq": e.seq, "ts": e.ts, "kind": e.kind.value, "payload": e.payload}
                for e in pending
            ],
            "last_seq": len(session.state.events),
        })

    @app.get("/api/sessions/{session_id}/runs")
    def runs(session_id: str):
        session = store.get(session_id)
        kinds = {"UnitTestRound", "SystemTestRound", "AutoLoopExhausted"}
        entries = [
            {"seq": e.seq, "kind": e.kind.value, "payload": e.payload}
            for e in session.state.events
            if e.kind.value in kinds
        ]
        return ok({"runs": entries})

    @app.get("/api/sessions/{session_id}/workspace")
    def workspace(session_id: str, round: int | None = None):
        session = store.get(session_id)
        root = _workspace_root(session, round)
        if root is None:
            return ok({"round": None, "files": []})
        files = sorted(
            str(p.relative_to(root)) for p in root.rglob("*") if p.is_file()
        )
        return ok({"round": int(root.name.split("-")[-1]), "files": files})

    @app.get("/api/sessions/{session_id}/workspace/file")
    def workspace_file(session_id: str, name: str, round: int | None = None):
        session = store.get(session_id)
        root = _workspace_root(session, round)
        if root is None:
            raise PathViolation("no workspace has been materialized yet")
        target = (root / name).resolve()
        if not target.is_relative_to(root.resolve()):
            raise PathViolation(f"path escapes the workspace: {name}")
        if not target.is_file():
            raise LoadError(f"no such workspace file: {name}")
        return ok({"name": name, "content": target.read_text(encoding="utf-8")})

    @app.get("/api/bench/tasks")
    def bench_tasks():
        tasks = bench.load_tasks(app.state.suite_path)
        return ok({
            "tasks": [
                {
                    "task_id": t.task_id,
                    "name": t.name,
                    "prompt": t.prompt,
                    "reference_use_cases": list(t.reference_use_cases),
                }
                for t in tasks
            ]
        })

    @app.post("/api/bench/drive")
    def bench_drive(body: dict):
        task_id = body.get("task_id", "")
        tasks = {t.task_id: t for t in bench.load_tasks(app.state.suite_path)}
        if task_id not in tasks:
            raise InvalidInput(f"unknown benchmark task {task_id!r}")
        record = bench.drive_task(
            tasks[task_id],
            app.state.default_config,
            bench.ScriptedVerdicts(),
            store.base_dir,
            body.get("session_id"),
        )
        return ok({"record": record.to_dict()})

    return app


def _workspace_root(session: Session, round: int | None) -> Path | None:
    base = session.session_dir / "workspaces"
    if round is not None:
        root = base / f"round-{round:03d}"
        return root if root.is_dir() else None
    if not base.is_dir():
        return None
    rounds = sorted(d for d in base.iterdir() if d.is_dir() and d.name.startswith("round-"))
    return rounds[-1] if rounds else None


def serve(base_dir: Path | str, host: str = "127.0.0.1", port: int = 8000,
          default_config: SessionConfig | None = None,
          suite_path: Path | str | None = None):
    """Run the service under uvicorn; blocks until interrupted."""
    import uvicorn

    app = create_app(base_dir, default_config=default_config, suite_path=suite_path)
    uvicorn.run(app, host=host, port=port, log_level="warning")

"""Workspace materialization and subprocess execution for generated projects.

Bundles are written into per-round directories under a session directory and
executed with a cleared environment, a wall-clock timeout, and process-group
kill on expiry.  Captured output has the absolute workspace prefix scrubbed
so that persisted outcomes are location-independent.

Classification policy: a traceback in stderr is a runtime error (the last
traceback block is the excerpt); a timeout without traceback counts as a
clean start, since the target programs are GUI apps that block forever by
design; a nonzero exit without traceback is reported with the stderr tail.
"""

from __future__ import annotations

import os
import shlex
import signal
import subprocess
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .artifacts import CodeBundle
from .errors import EnvError, InvalidInput, PathViolation

TRACEBACK_HEADER = "Traceback (most recent call last):"
STDERR_TAIL_LINES = 15
RUN_ARTIFACT_DIR = ".devloop"


class RunStatus(str, Enum):
    CLEAN_START = "CleanStart"
    RUNTIME_ERROR = "RuntimeError"
    NON_ZERO_EXIT = "NonZeroExit"
    TIMEOUT = "Timeout"


@dataclass(frozen=True)
class RunOutcome:
    status: RunStatus
    stdout: str
    stderr: str
    error_excerpt: str | None
    duration: float

    def startup_ok(self) -> bool:
        """Timeout without traceback counts as a successful start."""
        return self.status in (RunStatus.CLEAN_START, RunStatus.TIMEOUT)


@dataclass(frozen=True)
class TestReport:
    total: int
    passed: int
    failures: tuple[tuple[str, str], ...]

    def all_passed(self) -> bool:
        return self.passed == self.total

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "passed": self.passed,
            "failures": [list(f) for f in self.failures],
        }


@dataclass(frozen=True)
class Workspace:
    root: Path
    session_id: str
    round: int
    entry_file: str


def materialize(bundle: CodeBundle, session_dir: Path, session_id: str, round: int) -> Workspace:
    """Write the bundle under ``<session_dir>/workspaces/round-<n>/``.

    Each round gets a fresh sibling directory; re-materializing the same
    round replaces its contents.  File names were validated at parse time;
    the containment check here is defense in depth.
    """
    root = Path(session_dir) / "workspaces" / f"round-{round:03d}"
    root.mkdir(parents=True, exist_ok=True)
    for existing in root.iterdir():
        if existing.is_file():
            existing.unlink()
    for code_file in bundle.files:
        if "/" in code_file.name or "\\" in code_file.name or ".." in code_file.name:
            raise PathViolation(f"file name {code_file.name!r} escapes the workspace")
        target = (root / code_file.name).resolve()
        if target.parent != root.resolve():
            raise PathViolation(f"file name {code_file.name!r} escapes the workspace")
        target.write_text(code_file.file_content(), encoding="utf-8")
    entry = next((f.name for f in bundle.files if Path(f.name).stem == "main"), bundle.files[0].name)
    return Workspace(root=root, session_id=session_id, round=round, entry_file=entry)


def _subprocess_env() -> dict[str, str]:
    allowed = ("PATH", "HOME", "LANG", "LC_ALL", "TERM", "PYTHONIOENCODING")
    env = {name: os.environ[name] for name in allowed if name in os.environ}
    env["PYTHONDONTWRITEBYTECODE"] = "1"
    env["PYTHONPATH"] = "."
    env["MPLBACKEND"] = "Agg"  # headless-safe default if a generated app plots
    return env


def _execute(command: list[str], cwd: Path, timeout: float) -> tuple[int, str, str, bool, float]:
    started = time.monotonic()
    try:
        process = subprocess.Popen(
            command,
            cwd=str(cwd),
            env=_subprocess_env(),
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            stdin=subprocess.DEVNULL,
            text=True,
            start_new_session=True,  # lets the timeout kill the whole tree
        )
    except FileNotFoundError as exc:
        raise EnvError(f"interpreter not found: {command[0]}") from exc
    timed_out = False
    try:
        stdout, stderr = process.communicate(timeout=timeout)
    except subprocess.TimeoutExpired:
        timed_out = True
        try:
            os.killpg(os.getpgid(process.pid), signal.SIGKILL)
        except ProcessLookupError:
            pass
        stdout, stderr = process.communicate()
    duration = time.monotonic() - started
    return process.returncode, stdout or "", stderr or "", timed_out, duration


def _scrub(text: str, root: Path) -> str:
    return text.replace(str(root) + os.sep, "").replace(str(root), ".")


def last_traceback_block(stderr: str) -> str | None:
    position = stderr.rfind(TRACEBACK_HEADER)
    if position == -1:
        return None
    return stderr[position:].strip()


def classify_outcome(exit_status: int | None, stdout: str, stderr: str,
                     timed_out: bool) -> tuple[RunStatus, str | None]:
    """Pure classification of a finished run; see module docstring for policy."""
    traceback_block = last_traceback_block(stderr)
    if traceback_block is not None:
        return RunStatus.RUNTIME_ERROR, traceback_block
    if timed_out:
        return RunStatus.TIMEOUT, None
    if exit_status != 0:
        tail = "\n".join(stderr.strip().splitlines()[-STDERR_TAIL_LINES:])
        return RunStatus.NON_ZERO_EXIT, tail or f"exit status {exit_status}"
    return RunStatus.CLEAN_START, None


def run_entry(ws: Workspace, config) -> RunOutcome:
    """Launch the entry file (``python main.py`` style) and classify the result."""
    entry = ws.root / ws.entry_file
    if not entry.exists():
        raise InvalidInput(f"entry file {ws.entry_file!r} is not materialized")
    command = shlex.split(config.interpreter_command) + [ws.entry_file]
    code, stdout, stderr, timed_out, duration = _execute(command, ws.root, config.run_timeout)
    stdout, stderr = _scrub(stdout, ws.root), _scrub(stderr, ws.root)
    status, excerpt = classify_outcome(code, stdout, stderr, timed_out)
    _persist_log(ws, f"system-{ws.round:03d}", stdout, stderr)
    return RunOutcome(status=status, stdout=stdout, stderr=stderr,
                      error_excerpt=excerpt, duration=duration)


def run_tests(ws: Workspace, test_files: list[str], config) -> TestReport:
    """Run each test file under pytest and aggregate a per-test report."""
    total = 0
    passed = 0
    failures: list[tuple[str, str]] = []
    artifact_dir = ws.root / RUN_ARTIFACT_DIR
    artifact_dir.mkdir(exist_ok=True)
    for test_file in test_files:
        if not (ws.root / test_file).exists():
            raise InvalidInput(f"test file {test_file!r} is not materialized")
        junit_path = artifact_dir / f"junit-{Path(test_file).stem}.xml"
        command = shlex.split(config.interpreter_command) + [
            "-m", "pytest", test_file, "-q",
            "--junit-xml", str(junit_path.relative_to(ws.root)),
            "-p", "no:cacheprovider",
        ]
        code, stdout, stderr, timed_out, _ = _execute(command, ws.root, config.run_timeout)
        stdout, stderr = _scrub(stdout, ws.root), _scrub(stderr, ws.root)
        _persist_log(ws, f"tests-{Path(test_file).stem}", stdout, stderr)
        if "No module named pytest" in stderr:
            raise EnvError("pytest is not importable by the configured interpreter")
        if timed_out:
            total += 1
            failures.append((test_file, "test run timed out"))
            continue
        if not junit_path.exists():
            # pytest died before writing a report; count the file as one failure
            tail = "\n".join((stderr or stdout).strip().splitlines()[-STDERR_TAIL_LINES:])
            total += 1
            failures.append((test_file, tail or f"pytest exited {code} without a report"))
            continue
        file_total, file_passed, file_failures = _parse_junit(junit_path, test_file)
        total += file_total
        passed += file_passed
        failures.extend(file_failures)
    return TestReport(total=total, passed=passed, failures=tuple(failures))


def _parse_junit(path: Path, test_file: str) -> tuple[int, int, list[tuple[str, str]]]:
    root = ET.parse(path).getroot()
    cases = root.iter("testcase")
    total = 0
    passed = 0
    failures: list[tuple[str, str]] = []
    for case in cases:
        total += 1
        problem = case.find("failure")
        if problem is None:
            problem = case.find("error")
        if problem is None:
            passed += 1
            continue
        test_id = f"{test_file}::{case.get('name', '?')}"
        message = problem.get("message") or (problem.text or "").strip() or "failed"
        failures.append((test_id, message))
    if total == 0:
        # collection produced nothing; treat an erroring suite as one failure
        suites = root if root.tag == "testsuite" else root.find("testsuite")
        errors = int(suites.get("errors", 0)) if suites is not None else 0
        if errors:
            return 1, 0, [(test_file, "test collection failed")]
    return total, passed, failures


def _persist_log(ws: Workspace, label: str, stdout: str, stderr: str) -> None:
    artifact_dir = ws.root / RUN_ARTIFACT_DIR
    artifact_dir.mkdir(exist_ok=True)
    (artifact_dir / f"{label}.stdout.log").write_text(stdout, encoding="utf-8")
    (artifact_dir / f"{label}.stderr.log").write_text(stderr, encoding="utf-8")

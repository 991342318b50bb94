"""Task-suite evaluation: suite loading, verdict capture, pass rates, reports.

Pass rates are computed as exact rationals so that aggregate arithmetic is
drift-free; they are only rendered as decimals at the presentation edge.
An untested reference counts against the pass rate (the denominator is
always the full reference list).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import yaml

from .errors import InvalidInput, IoError, SuiteError
from .gateway import TokenUsage
from .session import ManualFeedback, Phase, Session, SessionConfig

SUITE_VERSION = 1
VERDICTS = ("pass", "fail", "untested")


@dataclass(frozen=True)
class BenchmarkTask:
    task_id: str
    name: str
    prompt: str
    reference_use_cases: tuple[str, ...]

    def __post_init__(self):
        if not self.reference_use_cases:
            raise SuiteError(f"task {self.task_id!r} has no reference use cases")


@dataclass(frozen=True)
class EvalRecord:
    task_id: str
    verdicts: dict[int, str]  # reference index -> pass | fail | untested
    tokens: TokenUsage = field(default_factory=TokenUsage)
    h1: int = 0
    h2: int = 0
    aborted: bool = False

    def __post_init__(self):
        if sorted(self.verdicts) != list(range(len(self.verdicts))):
            raise InvalidInput("verdicts must cover reference indexes 0..n-1")
        for verdict in self.verdicts.values():
            if verdict not in VERDICTS:
                raise InvalidInput(f"unknown verdict {verdict!r}")

    @property
    def pass_rate(self) -> Fraction:
        passes = sum(1 for v in self.verdicts.values() if v == "pass")
        return Fraction(passes, len(self.verdicts))

    @property
    def total_revisions(self) -> int:
        return self.h1 + self.h2

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "verdicts": {str(i): v for i, v in sorted(self.verdicts.items())},
            "tokens": {
                "prompt_tokens": self.tokens.prompt_tokens,
                "completion_tokens": self.tokens.completion_tokens,
            },
            "h1": self.h1,
            "h2": self.h2,
            "aborted": self.aborted,
            "pass_rate": str(self.pass_rate),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvalRecord":
        tokens = data.get("tokens", {})
        return cls(
            task_id=data["task_id"],
            verdicts={int(i): v for i, v in data["verdicts"].items()},
            tokens=TokenUsage(
                tokens.get("prompt_tokens", 0), tokens.get("completion_tokens", 0)
            ),
            h1=data.get("h1", 0),
            h2=data.get("h2", 0),
            aborted=data.get("aborted", False),
        )


@dataclass(frozen=True)
class RevisionRow:
    h1: int
    h2: int
    task_count: int
    avg_pass_rate: Fraction
    total_revisions: int  # h1 + h2, the row's revision cost per task


@dataclass(frozen=True)
class SummaryReport:
    per_task: tuple[EvalRecord, ...]
    avg_pass_rate: Fraction
    avg_tokens: Fraction
    revision_table: tuple[RevisionRow, ...]
    avg_total_revisions: Fraction


def new_record(task: BenchmarkTask) -> EvalRecord:
    return EvalRecord(
        task_id=task.task_id,
        verdicts={i: "untested" for i in range(len(task.reference_use_cases))},
    )


def record_verdict(record: EvalRecord, index: int, verdict: str) -> EvalRecord:
    if index not in record.verdicts:
        raise InvalidInput(
            f"reference index {index} out of range 0..{len(record.verdicts) - 1}"
        )
    if verdict not in VERDICTS:
        raise InvalidInput(f"unknown verdict {verdict!r}")
    updated = dict(record.verdicts)
    updated[index] = verdict
    return replace(record, verdicts=updated)


# -- suite files -----------------------------------------------------------------

DEFAULT_SUITE = Path(__file__).parent / "assets" / "sample_suite.yaml"


def load_tasks(path: Path | str | None = None) -> list[BenchmarkTask]:
    path = Path(path) if path is not None else DEFAULT_SUITE
    if not path.exists():
        raise SuiteError(f"suite file not found: {path}")
    try:
        document = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise SuiteError(f"suite file is not valid: {exc}") from exc
    if not isinstance(document, dict) or "tasks" not in document:
        raise SuiteError(f"{path}: suite must be a document with a tasks list")
    if document.get("version") != SUITE_VERSION:
        raise SuiteError(f"{path}: unsupported suite version {document.get('version')!r}")
    tasks: list[BenchmarkTask] = []
    seen: set[str] = set()
    for position, raw in enumerate(document["tasks"], start=1):
        try:
            task = BenchmarkTask(
                task_id=str(raw["task_id"]),
                name=str(raw["name"]),
                prompt=str(raw["prompt"]),
                reference_use_cases=tuple(str(u) for u in raw["reference_use_cases"]),
            )
        except (KeyError, TypeError) as exc:
            raise SuiteError(f"{path}: task {position} is malformed: {exc}") from exc
        if task.task_id in seen:
            raise SuiteError(f"{path}: task {position} repeats id {task.task_id!r}")
        seen.add(task.task_id)
        tasks.append(task)
    if not tasks:
        raise SuiteError(f"{path}: suite contains no tasks")
    return tasks


# -- aggregation -------------------------------------------------------------------


def aggregate(records: list[EvalRecord]) -> SummaryReport:
    if not records:
        raise InvalidInput("cannot aggregate an empty record set")
    count = len(records)
    avg_pass_rate = sum((r.pass_rate for r in records), Fraction(0)) / count
    avg_tokens = Fraction(sum(r.tokens.total for r in records), count)
    avg_total_revisions = Fraction(sum(r.total_revisions for r in records), count)
    groups: dict[tuple[int, int], list[EvalRecord]] = {}
    for record in records:
        groups.setdefault((record.h1, record.h2), []).append(record)
    table = tuple(
        RevisionRow(
            h1=h1,
            h2=h2,
            task_count=len(members),
            avg_pass_rate=sum((r.pass_rate for r in members), Fraction(0)) / len(members),
            total_revisions=h1 + h2,
        )
        for (h1, h2), members in sorted(groups.items())
    )
    return SummaryReport(
        per_task=tuple(records),
        avg_pass_rate=avg_pass_rate,
        avg_tokens=avg_tokens,
        revision_table=table,
        avg_total_revisions=avg_total_revisions,
    )


# -- report export ------------------------------------------------------------------


def export_report(report: SummaryReport, path: Path | str, format: str = "structured-text") -> Path:
    path = Path(path)
    if format == "structured-text":
        payload = {
            "version": SUITE_VERSION,
            "records": [r.to_dict() for r in report.per_task],
            "summary": {
                "avg_pass_rate": str(report.avg_pass_rate),
                "avg_tokens": str(report.avg_tokens),
                "avg_total_revisions": str(report.avg_total_revisions),
            },
        }
        text = yaml.safe_dump(payload, sort_keys=True, allow_unicode=True)
    elif format == "delimited-table":
        text = _delimited_table(report)
    else:
        raise InvalidInput(f"unknown report format {format!r}")
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write report to {path}: {exc}") from exc
    return path


def _delimited_table(report: SummaryReport) -> str:
    import io

    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(["task_id", "pass_rate", "tokens", "h1", "h2", "total_revisions", "aborted"])
    for record in report.per_task:
        writer.writerow([
            record.task_id,
            f"{float(record.pass_rate):.4f}",
            record.tokens.total,
            record.h1,
            record.h2,
            record.total_revisions,
            record.aborted,
        ])
    writer.writerow([])
    writer.writerow([
        "summary",
        f"{float(report.avg_pass_rate):.4f}",
        f"{float(report.avg_tokens):.2f}",
        "",
        "",
        f"{float(report.avg_total_revisions):.4f}",
        "",
    ])
    return buffer.getvalue()


def import_report(path: Path | str) -> SummaryReport:
    path = Path(path)
    if not path.exists():
        raise IoError(f"report file not found: {path}")
    document = yaml.safe_load(path.read_text(encoding="utf-8"))
    records = [EvalRecord.from_dict(r) for r in document["records"]]
    return aggregate(records)


# -- driving sessions ----------------------------------------------------------------


class ScriptedVerdicts:
    """Replays a fixed interaction script; labeled as regression-only in reports.

    review_edits runs once at the use-case review gate; feedback is consulted
    at every manual-validation stop; reference_verdicts produces the final
    per-reference judgment.
    """

    def __init__(self, review_edits=(), feedback_rounds=(), reference_verdicts=None):
        self._review_edits = list(review_edits)
        self._feedback = list(feedback_rounds)
        self._reference = reference_verdicts

    def review_edits(self, use_cases) -> list:
        return list(self._review_edits)

    def feedback(self, state) -> ManualFeedback:
        if not self._feedback:
            ids = state.use_cases.ids()
            return ManualFeedback(per_use_case={uid: "pass" for uid in ids})
        return self._feedback.pop(0)

    def reference_verdicts(self, task: BenchmarkTask, state) -> dict[int, str]:
        if self._reference is not None:
            return dict(self._reference)
        verdict = "pass" if state.phase is Phase.COMPLETED else "untested"
        return {i: verdict for i in range(len(task.reference_use_cases))}


def drive_task(task: BenchmarkTask, config: SessionConfig, verdict_source,
               base_dir: Path, session_id: str | None = None,
               gateway=None, runner_seams=None) -> EvalRecord:
    """One full session over the task prompt; verdicts from the given source."""
    session = Session.create(
        task.prompt, config, Path(base_dir), session_id or task.task_id,
        gateway=gateway, runner_seams=runner_seams,
    )
    record = new_record(task)
    try:
        session.draft_use_cases()
        edits = verdict_source.review_edits(session.state.use_cases)
        if edits:
            session.submit_use_case_edits(edits)
        session.approve_use_cases()
        while session.state.phase not in (Phase.COMPLETED, Phase.ABORTED):
            phase = session.state.phase
            if phase is Phase.DESIGNING:
                session.produce_design()
            elif phase is Phase.DESIGN_REVIEW:
                session.approve_design()
            elif phase is Phase.MANUAL_VALIDATION:
                session.submit_manual_feedback(verdict_source.feedback(session.state))
            else:
                session.run_auto_pipeline()
    except Exception:
        if session.state.phase is not Phase.ABORTED:
            session.abort("benchmark drive failed")
        session.persist()
        usage = session.state.usage_totals()
        return replace(record, tokens=usage, aborted=True,
                       h1=session.state.h1, h2=session.state.h2)
    session.persist()
    for index, verdict in verdict_source.reference_verdicts(task, session.state).items():
        record = record_verdict(record, index, verdict)
    usage = session.state.usage_totals()
    h1, h2 = session.state.revision_counters()
    return replace(record, tokens=usage, h1=h1, h2=h2,
                   aborted=session.state.phase is Phase.ABORTED)

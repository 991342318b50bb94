"""Event-sourced session workflow: phases, human gates, counters, persistence.

A session is a pure fold over its event log.  Commands validate the current
phase, perform side effects (model calls, subprocess runs), then append
events; every state field is only ever changed by ``_apply``, so replaying
the persisted log reconstructs an equal state by construction.

Event payloads are JSON values that never contain absolute paths, wall-clock
durations, or the session id, which keeps logs byte-comparable across runs.
In replay mode event timestamps are logical (derived from the sequence
number) for the same reason.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

from .artifacts import (
    CodeBundle,
    SystemDesign,
    UseCaseEdit,
    UseCaseSet,
    parse_design,
    parse_use_cases,
)
from .errors import (
    DevloopError,
    DraftFailed,
    IllegalTransition,
    InvalidFeedback,
    InvalidInput,
    LoadError,
)
from .gateway import (
    BackendProfile,
    ChatGateway,
    ChatMessage,
    Mode,
    Role,
    TokenUsage,
    request_hash,
)
from .prompts import (
    PromptPair,
    render_design_prompt,
    render_reparse_followup,
    render_use_case_prompt,
)

EVENT_LOG_NAME = "events.jsonl"


class Phase(str, Enum):
    TASK_INTAKE = "TaskIntake"
    USE_CASE_DRAFT = "UseCaseDraft"
    USE_CASE_REVIEW = "UseCaseReview"
    DESIGNING = "Designing"
    DESIGN_REVIEW = "DesignReview"
    CODING = "Coding"
    REFINING = "Refining"
    UNIT_TESTING = "UnitTesting"
    SYSTEM_TESTING = "SystemTesting"
    MANUAL_VALIDATION = "ManualValidation"
    BUG_FIXING = "BugFixing"
    COMPLETED = "Completed"
    ABORTED = "Aborted"


TERMINAL_PHASES = (Phase.COMPLETED, Phase.ABORTED)
AUTO_PHASES = (Phase.CODING, Phase.REFINING, Phase.UNIT_TESTING,
               Phase.SYSTEM_TESTING, Phase.BUG_FIXING)


class EventKind(str, Enum):
    TASK_SUBMITTED = "TaskSubmitted"
    USE_CASES_DRAFTED = "UseCasesDrafted"
    USE_CASES_EDITED = "UseCasesEdited"
    USE_CASES_APPROVED = "UseCasesApproved"
    DESIGN_PRODUCED = "DesignProduced"
    DESIGN_EDITED = "DesignEdited"
    DESIGN_APPROVED = "DesignApproved"
    BUNDLE_PRODUCED = "BundleProduced"
    REFINEMENT_APPLIED = "RefinementApplied"
    UNIT_TEST_ROUND = "UnitTestRound"
    SYSTEM_TEST_ROUND = "SystemTestRound"
    AUTO_LOOP_EXHAUSTED = "AutoLoopExhausted"
    MANUAL_VERDICT = "ManualVerdict"
    BUGFIX_REQUESTED = "BugfixRequested"
    USE_CASE_REVISION_REQUESTED = "UseCaseRevisionRequested"
    NEW_USE_CASES_ADDED = "NewUseCasesAdded"
    FINALIZED = "Finalized"
    ABORTED = "Aborted"


@dataclass(frozen=True)
class SessionEvent:
    seq: int
    ts: str
    kind: EventKind
    payload: dict

    def to_line(self) -> str:
        record = {"seq": self.seq, "ts": self.ts, "kind": self.kind.value,
                  "payload": self.payload}
        return json.dumps(record, ensure_ascii=False, sort_keys=True,
                          separators=(",", ":"))

    @classmethod
    def from_line(cls, line: str) -> "SessionEvent":
        record = json.loads(line)
        return cls(seq=record["seq"], ts=record["ts"],
                   kind=EventKind(record["kind"]), payload=record["payload"])


@dataclass
class SessionConfig:
    max_auto_iterations: int = 5
    max_manual_rounds: int = 5
    design_review_enabled: bool = False
    run_timeout: float = 10.0
    interpreter_command: str = "python3"
    backend: BackendProfile = field(default_factory=lambda: BackendProfile(mode=Mode.LIVE))

    def __post_init__(self):
        if self.max_auto_iterations < 1 or self.max_manual_rounds < 1:
            raise InvalidInput("iteration budgets must be at least 1")
        if self.run_timeout <= 0:
            raise InvalidInput("run timeout must be positive")

    def to_dict(self) -> dict:
        return {
            "max_auto_iterations": self.max_auto_iterations,
            "max_manual_rounds": self.max_manual_rounds,
            "design_review_enabled": self.design_review_enabled,
            "run_timeout": self.run_timeout,
            "interpreter_command": self.interpreter_command,
            "backend": self.backend.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SessionConfig":
        return cls(
            max_auto_iterations=data.get("max_auto_iterations", 5),
            max_manual_rounds=data.get("max_manual_rounds", 5),
            design_review_enabled=data.get("design_review_enabled", False),
            run_timeout=data.get("run_timeout", 10.0),
            interpreter_command=data.get("interpreter_command", "python3"),
            backend=BackendProfile.from_dict(data.get("backend", {})),
        )


@dataclass(frozen=True)
class ManualFeedback:
    """One round of human validation input (§ routing rules in submit_manual_feedback)."""

    per_use_case: dict[str, str] = field(default_factory=dict)  # id -> pass|fail
    error_message: str | None = None
    revised_use_cases: tuple[UseCaseEdit, ...] = ()
    new_use_cases: tuple[str, ...] = ()

    @classmethod
    def from_dict(cls, data: dict) -> "ManualFeedback":
        return cls(
            per_use_case=dict(data.get("per_use_case", {})),
            error_message=data.get("error_message"),
            revised_use_cases=tuple(
                UseCaseEdit(e["action"], e.get("id"), e.get("text"))
                for e in data.get("revised_use_cases", [])
            ),
            new_use_cases=tuple(data.get("new_use_cases", [])),
        )


@dataclass
class SessionState:
    id: str
    task_prompt: str = ""
    phase: Phase = Phase.TASK_INTAKE
    config: SessionConfig | None = None
    use_cases: UseCaseSet | None = None
    design: SystemDesign | None = None
    bundle: CodeBundle | None = None
    h1: int = 0
    h2: int = 0
    unit_iters: int = 0
    system_iters: int = 0
    manual_rounds: int = 0
    last_problem: str | None = None
    exchange_log: list = field(default_factory=list)
    candidate_bundles: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def usage_totals(self) -> TokenUsage:
        total = TokenUsage()
        for entry in self.exchange_log:
            total = total + TokenUsage(entry["prompt_tokens"], entry["completion_tokens"])
        return total

    def revision_counters(self) -> tuple[int, int]:
        return self.h1, self.h2


def _apply(state: SessionState, event: SessionEvent) -> None:
    """Fold one event into the state; the only place state fields change."""
    payload = event.payload
    kind = event.kind
    for exchange in payload.get("exchanges", []):
        state.exchange_log.append(dict(exchange))
    if kind is EventKind.TASK_SUBMITTED:
        state.task_prompt = payload["task"]
        state.config = SessionConfig.from_dict(payload["config"])
    elif kind in (EventKind.USE_CASES_DRAFTED, EventKind.USE_CASES_EDITED):
        state.use_cases = UseCaseSet.from_dict(payload["use_cases"])
        if kind is EventKind.USE_CASES_EDITED:
            state.h1 = 1  # idempotent: any number of review edit batches is one revision
    elif kind in (EventKind.DESIGN_PRODUCED, EventKind.DESIGN_EDITED):
        state.design = SystemDesign.from_dict(payload["design"])
    elif kind is EventKind.BUNDLE_PRODUCED:
        state.bundle = CodeBundle.from_dict(payload["bundle"])
        state.unit_iters = 0
        state.system_iters = 0
    elif kind is EventKind.REFINEMENT_APPLIED:
        if "bundle" in payload:
            state.bundle = CodeBundle.from_dict(payload["bundle"])
    elif kind is EventKind.UNIT_TEST_ROUND:
        state.unit_iters = payload["round"]
        if "bundle" in payload:
            state.bundle = CodeBundle.from_dict(payload["bundle"])
    elif kind is EventKind.SYSTEM_TEST_ROUND:
        state.system_iters = payload["round"]
        if "bundle" in payload:
            state.bundle = CodeBundle.from_dict(payload["bundle"])
    elif kind is EventKind.MANUAL_VERDICT:
        if state.candidate_bundles and "verdicts" in payload:
            passes = sum(1 for v in payload["verdicts"].values() if v == "pass")
            state.candidate_bundles[-1]["manual_passes"] = passes
        action = payload.get("action")
        if action in ("bugfix", "revise"):
            state.h2 += 1
            state.manual_rounds += 1
        if action == "bugfix":
            state.last_problem = payload["problem"]
        if "use_cases" in payload:
            state.use_cases = UseCaseSet.from_dict(payload["use_cases"])
    elif kind is EventKind.FINALIZED:
        if "winner" in payload:
            state.bundle = CodeBundle.from_dict(payload["winner"])
    # marker kinds (approvals, requests, exhaustion, abort) only move the phase
    if "candidate" in payload:
        state.candidate_bundles.append(dict(payload["candidate"]))
    state.phase = Phase(payload["to_phase"])
    state.events.append(event)


def build_state(session_id: str, events: list[SessionEvent]) -> SessionState:
    state = SessionState(id=session_id)
    for event in events:
        _apply(state, event)
    return state


class Session:
    """Command surface over one session; see module docstring for the model.

    Runner and gateway seams are injectable so the workflow is testable
    without subprocesses or a network.
    """

    def __init__(self, state: SessionState, base_dir: Path,
                 gateway: ChatGateway | None = None,
                 runner_seams: dict | None = None):
        from . import runner as runner_mod

        self.state = state
        self.base_dir = Path(base_dir)
        self._gateway = gateway
        self._pending_exchanges: list[dict] = []
        seams = runner_seams or {}
        self._materialize = seams.get("materialize", runner_mod.materialize)
        self._run_entry = seams.get("run_entry", runner_mod.run_entry)
        self._run_tests = seams.get("run_tests", runner_mod.run_tests)

    # -- construction and persistence ---------------------------------------

    @classmethod
    def create(cls, task_prompt: str, config: SessionConfig, base_dir: Path,
               session_id: str, gateway: ChatGateway | None = None,
               runner_seams: dict | None = None) -> "Session":
        if not task_prompt.strip():
            raise InvalidInput("task prompt must not be empty")
        session = cls(SessionState(id=session_id), Path(base_dir),
                      gateway=gateway, runner_seams=runner_seams)
        session._record(
            EventKind.TASK_SUBMITTED,
            {"task": task_prompt, "config": config.to_dict(),
             "to_phase": Phase.TASK_INTAKE.value},
        )
        return session

    @classmethod
    def load(cls, session_id: str, base_dir: Path,
             gateway: ChatGateway | None = None,
             runner_seams: dict | None = None) -> "Session":
        path = Path(base_dir) / session_id / EVENT_LOG_NAME
        if not path.exists():
            raise LoadError(f"no event log for session {session_id!r}")
        events: list[SessionEvent] = []
        last_good = 0
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            try:
                event = SessionEvent.from_line(line)
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise LoadError(
                    f"event log corrupt after seq {last_good}: {exc}",
                    last_good_seq=last_good,
                ) from exc
            if event.seq != last_good + 1:
                raise LoadError(
                    f"event log corrupt after seq {last_good}: gap to {event.seq}",
                    last_good_seq=last_good,
                )
            events.append(event)
            last_good = event.seq
        state = build_state(session_id, events)
        return cls(state, Path(base_dir), gateway=gateway, runner_seams=runner_seams)

    @property
    def session_dir(self) -> Path:
        return self.base_dir / self.state.id

    def persist(self) -> Path:
        """Write the full event log; load() of the result folds back to this state."""
        self.session_dir.mkdir(parents=True, exist_ok=True)
        path = self.session_dir / EVENT_LOG_NAME
        tmp = path.with_suffix(".jsonl.tmp")
        tmp.write_text(
            "".join(event.to_line() + "\n" for event in self.state.events),
            encoding="utf-8",
        )
        tmp.replace(path)
        return path

    # -- infrastructure ------------------------------------------------------

    @property
    def gateway(self) -> ChatGateway:
        if self._gateway is None:
            self._gateway = ChatGateway(self.state.config.backend)
        return self._gateway

    def _timestamp(self, seq: int, payload: dict) -> str:
        if self.state.config is not None:
            mode = self.state.config.backend.mode
        else:
            # the first event carries the config itself; read the mode from it
            mode = Mode(payload.get("config", {}).get("backend", {}).get("mode", "live"))
        if mode is Mode.REPLAY:
            return datetime.fromtimestamp(seq, tz=timezone.utc).isoformat()
        return datetime.now(tz=timezone.utc).isoformat()

    def _record(self, kind: EventKind, payload: dict) -> SessionEvent:
        if self.state.phase in TERMINAL_PHASES:
            raise IllegalTransition(f"session is {self.state.phase.value}; no further events")
        if self._pending_exchanges:
            payload = {**payload, "exchanges": self._pending_exchanges}
            self._pending_exchanges = []
        seq = len(self.state.events) + 1
        event = SessionEvent(seq=seq, ts=self._timestamp(seq, payload), kind=kind, payload=payload)
        _apply(self.state, event)
        return event

    def _require_phase(self, *phases: Phase) -> None:
        if self.state.phase not in phases:
            raise IllegalTransition(
                f"operation requires phase {'/'.join(p.value for p in phases)}, "
                f"session is in {self.state.phase.value}"
            )

    def call_model(self, pair: PromptPair) -> str:
        """One completion with a single re-ask on unparseable output (see _generate)."""
        messages = [ChatMessage(Role.SYSTEM, pair.system_message),
                    ChatMessage(Role.USER, pair.user_message)]
        return self._complete(messages)

    def _complete(self, messages: list[ChatMessage]) -> str:
        exchange = self.gateway.complete(messages)
        self._pending_exchanges.append({
            "request_hash": request_hash(list(messages)),
            "prompt_tokens": exchange.usage.prompt_tokens,
            "completion_tokens": exchange.usage.completion_tokens,
        })
        return exchange.response.content

    def _generate(self, pair: PromptPair, parse, what: str):
        """Call, parse, and on failure re-ask once with the parse error appended."""
        messages = [ChatMessage(Role.SYSTEM, pair.system_message),
                    ChatMessage(Role.USER, pair.user_message)]
        text = self._complete(messages)
        try:
            return parse(text)
        except DevloopError as first_error:
            followup = messages + [
                ChatMessage(Role.ASSISTANT, text),
                ChatMessage(Role.USER, render_reparse_followup(str(first_error))),
            ]
            retry_text = self._complete(followup)
            try:
                return parse(retry_text)
            except DevloopError as second_error:
                self._record(
                    EventKind.ABORTED,
                    {"reason": f"{what} unparseable after retry: {second_error}",
                     "to_phase": Phase.ABORTED.value},
                )
                raise DraftFailed(f"{what} generation failed: {second_error}") from second_error

    # -- commands ------------------------------------------------------------

    def draft_use_cases(self) -> SessionState:
        self._require_phase(Phase.TASK_INTAKE)
        pair = render_use_case_prompt(self.state.task_prompt)
        use_cases = self._generate(pair, parse_use_cases, "use cases")
        self._record(
            EventKind.USE_CASES_DRAFTED,
            {"use_cases": use_cases.to_dict(), "to_phase": Phase.USE_CASE_REVIEW.value},
        )
        return self.state

    def submit_use_case_edits(self, edits: list[UseCaseEdit]) -> SessionState:
        self._require_phase(Phase.USE_CASE_REVIEW)
        if not edits:
            return self.state  # explicit no-op: no event, h1 untouched
        updated = self.state.use_cases.apply_edits(edits)
        self._record(
            EventKind.USE_CASES_EDITED,
            {
                "edits": [
                    {"action": e.action, "id": e.id, "text": e.text} for e in edits
                ],
                "use_cases": updated.to_dict(),
                "to_phase": Phase.USE_CASE_REVIEW.value,
            },
        )
        return self.state

    def approve_use_cases(self) -> SessionState:
        self._require_phase(Phase.USE_CASE_REVIEW)
        if self.state.use_cases is None or not self.state.use_cases.entries:
            raise IllegalTransition("no use cases to approve")
        self._record(EventKind.USE_CASES_APPROVED, {"to_phase": Phase.DESIGNING.value})
        return self.state

    def produce_design(self) -> SessionState:
        self._require_phase(Phase.DESIGNING)
        pair = render_design_prompt(self.state.task_prompt, self.state.use_cases)
        design = self._generate(pair, parse_design, "design")
        next_phase = (Phase.DESIGN_REVIEW if self.state.config.design_review_enabled
                      else Phase.CODING)
        self._record(
            EventKind.DESIGN_PRODUCED,
            {"design": design.to_dict(), "findings": list(design.findings),
             "to_phase": next_phase.value},
        )
        return self.state

    def submit_design_edits(self, files: list[tuple[str, str]]) -> SessionState:
        self._require_phase(Phase.DESIGN_REVIEW)
        if not files:
            return self.state
        repaired = parse_design(json.dumps(dict(files)))
        self._record(
            EventKind.DESIGN_EDITED,
            {"design": repaired.to_dict(), "to_phase": Phase.DESIGN_REVIEW.value},
        )
        return self.state

    def approve_design(self) -> SessionState:
        self._require_phase(Phase.DESIGN_REVIEW)
        self._record(EventKind.DESIGN_APPROVED, {"to_phase": Phase.CODING.value})
        return self.state

    def advance_auto(self) -> SessionState:
        self._require_phase(*AUTO_PHASES)
        from . import autotest

        phase = self.state.phase
        if phase is Phase.CODING:
            autotest.generate_bundle(self)
        elif phase is Phase.REFINING:
            autotest.refinement_pass(self)
        elif phase is Phase.UNIT_TESTING:
            autotest.unit_test_loop(self)
        elif phase is Phase.SYSTEM_TESTING:
            autotest.system_test_loop(self)
        elif phase is Phase.BUG_FIXING:
            autotest.apply_manual_bugfix(self)
        return self.state

    def run_auto_pipeline(self) -> SessionState:
        """Advance through the automatic phases until a human gate or terminal."""
        while self.state.phase in AUTO_PHASES:
            self.advance_auto()
        return self.state

    def submit_manual_feedback(self, feedback: ManualFeedback) -> SessionState:
        self._require_phase(Phase.MANUAL_VALIDATION)
        self._validate_feedback(feedback)
        verdicts = dict(sorted(feedback.per_use_case.items(), key=lambda kv: int(kv[0])))
        all_pass = (
            bool(verdicts)
            and set(verdicts) == set(self.state.use_cases.ids())
            and all(v == "pass" for v in verdicts.values())
            and not feedback.error_message
            and not feedback.revised_use_cases
            and not feedback.new_use_cases
        )
        if all_pass:
            self._record(
                EventKind.MANUAL_VERDICT,
                {"verdicts": verdicts, "action": "finalize",
                 "to_phase": Phase.MANUAL_VALIDATION.value},
            )
            self._record(
                EventKind.FINALIZED,
                {"outcome": "all_use_cases_passed", "to_phase": Phase.COMPLETED.value},
            )
            return self.state
        if self.state.manual_rounds >= self.state.config.max_manual_rounds:
            return self._finalize_exhausted(verdicts)
        if feedback.error_message:
            self._record(
                EventKind.MANUAL_VERDICT,
                {"verdicts": verdicts, "action": "bugfix",
                 "problem": feedback.error_message,
                 "to_phase": Phase.BUG_FIXING.value},
            )
            self._record(
                EventKind.BUGFIX_REQUESTED,
                {"problem": feedback.error_message, "to_phase": Phase.BUG_FIXING.value},
            )
            return self.state
        if feedback.revised_use_cases or feedback.new_use_cases:
            edits = list(feedback.revised_use_cases)
            edits.extend(UseCaseEdit("add", text=t) for t in feedback.new_use_cases)
            updated = self.state.use_cases.apply_edits(edits)
            self._record(
                EventKind.MANUAL_VERDICT,
                {"verdicts": verdicts, "action": "revise",
                 "use_cases": updated.to_dict(),
                 "to_phase": Phase.DESIGNING.value},
            )
            if feedback.revised_use_cases:
                self._record(
                    EventKind.USE_CASE_REVISION_REQUESTED,
                    {"edits": [{"action": e.action, "id": e.id, "text": e.text}
                               for e in feedback.revised_use_cases],
                     "to_phase": Phase.DESIGNING.value},
                )
            if feedback.new_use_cases:
                self._record(
                    EventKind.NEW_USE_CASES_ADDED,
                    {"texts": list(feedback.new_use_cases),
                     "to_phase": Phase.DESIGNING.value},
                )
            return self.state
        # failures reported without an error message or revisions: route the
        # failing descriptions to the bug-fix loop as the problem statement
        failing = [uid for uid, verdict in verdicts.items() if verdict == "fail"]
        if not failing:
            raise InvalidFeedback(
                "passing verdicts must cover every use case to complete the session"
            )
        problem = "Manual testing failed these use cases:\n" + "\n".join(
            f"{uid}: {self.state.use_cases.entries[uid].text}" for uid in failing
        )
        self._record(
            EventKind.MANUAL_VERDICT,
            {"verdicts": verdicts, "action": "bugfix", "problem": problem,
             "to_phase": Phase.BUG_FIXING.value},
        )
        self._record(
            EventKind.BUGFIX_REQUESTED,
            {"problem": problem, "synthesized": True,
             "to_phase": Phase.BUG_FIXING.value},
        )
        return self.state

    def _validate_feedback(self, feedback: ManualFeedback) -> None:
        has_any = (feedback.per_use_case or feedback.error_message
                   or feedback.revised_use_cases or feedback.new_use_cases)
        if not has_any:
            raise InvalidFeedback("feedback carries no information")
        if feedback.error_message and not feedback.error_message.strip():
            raise InvalidFeedback("error message is blank")
        if feedback.error_message and (feedback.revised_use_cases or feedback.new_use_cases):
            raise InvalidFeedback(
                "an error message and use-case changes cannot be submitted together"
            )
        known = set(self.state.use_cases.ids()) if self.state.use_cases else set()
        for uid, verdict in feedback.per_use_case.items():
            if uid not in known:
                raise InvalidFeedback(f"verdict for unknown use case id {uid!r}")
            if verdict not in ("pass", "fail"):
                raise InvalidFeedback(f"verdict {verdict!r} is not pass or fail")

    def _finalize_exhausted(self, verdicts: dict) -> SessionState:
        self._record(
            EventKind.MANUAL_VERDICT,
            {"verdicts": verdicts, "action": "exhausted",
             "to_phase": Phase.MANUAL_VALIDATION.value},
        )
        winner = self._best_candidate()
        payload = {"outcome": "manual_budget_exhausted",
                   "to_phase": Phase.COMPLETED.value}
        if winner is not None:
            payload["winner"] = winner["bundle"]
            payload["winner_round"] = winner["round"]
        self._record(EventKind.FINALIZED, payload)
        return self.state

    def _best_candidate(self) -> dict | None:
        """Rank archived candidates: manual passes, clean start, fewest findings."""
        if not self.state.candidate_bundles:
            return None
        return max(
            self.state.candidate_bundles,
            key=lambda c: (
                c.get("manual_passes", 0),
                1 if c.get("clean_start") else 0,
                -c.get("findings_count", 0),
            ),
        )

    def abort(self, reason: str = "user abort") -> SessionState:
        if self.state.phase in TERMINAL_PHASES:
            raise IllegalTransition(f"session already {self.state.phase.value}")
        self._record(EventKind.ABORTED, {"reason": reason, "to_phase": Phase.ABORTED.value})
        return self.state

    def revision_counters(self) -> tuple[int, int]:
        return self.state.revision_counters()

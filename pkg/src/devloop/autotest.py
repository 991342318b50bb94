"""Automatic pipeline steps: code generation, refinement, test loops, bug fixing.

Each function drives one phase of a session and records the events that move
it forward.  Loop-internal model calls are tolerant: a reply that cannot be
parsed is re-asked once, and if the retry also fails the round keeps the
previous bundle and notes a warning instead of aborting the session.  The
top-level generation commands (initial code, manual bug fix) abort after a
failed retry because there is no previous artifact to fall back to.
"""

from __future__ import annotations

from .artifacts import (
    CodeBundle,
    CodeFile,
    detect_placeholders,
    parse_code_bundle,
)
from .errors import DevloopError
from .gateway import ChatMessage, Role
from .prompts import (
    TEST_PREFIX,
    render_bugfix_prompt,
    render_codegen_prompt,
    render_refine_prompt,
    render_reparse_followup,
    render_unit_test_prompt,
)
from .runner import RunStatus

# session.py imports this module lazily; import it only for enum values to
# avoid a cycle at module load time
from . import session as _session


def _next_round(session) -> int:
    bundle = session.state.bundle
    return bundle.round + 1 if bundle is not None else 1


def _tolerant_generate(session, pair, parse):
    """Call, parse, re-ask once; returns (result, warning) with result None on failure."""
    messages = [ChatMessage(Role.SYSTEM, pair.system_message),
                ChatMessage(Role.USER, pair.user_message)]
    text = session._complete(messages)
    try:
        return parse(text), None
    except DevloopError as first_error:
        followup = messages + [
            ChatMessage(Role.ASSISTANT, text),
            ChatMessage(Role.USER, render_reparse_followup(str(first_error))),
        ]
        retry_text = session._complete(followup)
        try:
            return parse(retry_text), None
        except DevloopError as second_error:
            return None, f"reply unparseable after retry: {second_error}"


def generate_bundle(session) -> None:
    """Coding phase: produce the initial bundle from task, use cases, and design."""
    state = session.state
    pair = render_codegen_prompt(state.task_prompt, state.use_cases, state.design)
    round_id = _next_round(session)
    bundle = session._generate(
        pair, lambda text: parse_code_bundle(text, round=round_id), "code"
    )
    session._record(
        _session.EventKind.BUNDLE_PRODUCED,
        {"bundle": bundle.to_dict(), "origin": "codegen",
         "to_phase": _session.Phase.REFINING.value},
    )


def apply_manual_bugfix(session) -> None:
    """BugFixing phase: one fix turn for the problem reported at manual validation."""
    state = session.state
    pair = render_bugfix_prompt(state.bundle, state.last_problem)
    round_id = _next_round(session)
    replacement = session._generate(
        pair, lambda text: parse_code_bundle(text, round=round_id), "bug fix"
    )
    merged = state.bundle.merged(replacement, round=round_id)
    session._record(
        _session.EventKind.BUNDLE_PRODUCED,
        {"bundle": merged.to_dict(), "origin": "manual_bugfix",
         "to_phase": _session.Phase.REFINING.value},
    )


def refinement_pass(session) -> None:
    """Refining phase: ask for real implementations of placeholder findings."""
    state = session.state
    findings = detect_placeholders(state.bundle)
    payload = {
        "findings": [f.to_dict() for f in findings],
        "changed": False,
        "to_phase": _session.Phase.UNIT_TESTING.value,
    }
    if findings:
        pair = render_refine_prompt(state.bundle, [f.describe() for f in findings])
        round_id = _next_round(session)
        replacement, warning = _tolerant_generate(
            session, pair, lambda text: parse_code_bundle(text, round=round_id)
        )
        if replacement is None:
            payload["warning"] = warning
        else:
            merged = state.bundle.merged(replacement, round=round_id)
            payload["changed"] = True
            payload["bundle"] = merged.to_dict()
    session._record(_session.EventKind.REFINEMENT_APPLIED, payload)


def _extract_test_file(text: str, expected_name: str) -> CodeFile:
    """Pull the generated test file out of a reply, preferring the asked-for name."""
    bundle = parse_code_bundle(text)
    named = bundle.get(expected_name)
    file = named if named is not None else bundle.files[0]
    return CodeFile(expected_name, file.language_tag, file.docstring, file.body)


def _generate_test_files(session, targets: list[str], cache: dict) -> tuple[list[CodeFile], list[str]]:
    """Per-target test generation, reusing cached tests while the target is unchanged."""
    state = session.state
    files: list[CodeFile] = []
    warnings: list[str] = []
    for target in targets:
        source = state.bundle.get(target)
        test_name = TEST_PREFIX + target
        cached = cache.get(target)
        if cached is not None and cached[0] == source.file_content():
            files.append(cached[1])
            continue
        pair = render_unit_test_prompt(state.bundle, target)
        test_file, warning = _tolerant_generate(
            session, pair, lambda text: _extract_test_file(text, test_name)
        )
        if test_file is None:
            warnings.append(f"{target}: {warning}")
            continue
        cache[target] = (source.file_content(), test_file)
        files.append(test_file)
    return files, warnings


def _fix_from_failures(session, report, round_id: int) -> tuple[CodeBundle | None, str | None]:
    problem = "The unit tests reported these failures:\n" + "\n".join(
        f"{test_id}: {message}" for test_id, message in report.failures
    )
    pair = render_bugfix_prompt(session.state.bundle, problem)
    replacement, warning = _tolerant_generate(
        session, pair, lambda text: parse_code_bundle(text, round=round_id)
    )
    if replacement is None:
        return None, warning
    return session.state.bundle.merged(replacement, round=round_id), None


def unit_test_loop(session) -> None:
    """UnitTesting phase: generate tests, run them, fix failures, bounded by budget.

    Test files are excluded from bug-fix merges: only names already in the
    bundle or genuinely new source files come back in.
    """
    state = session.state
    config = state.config
    cache: dict = {}
    for round_no in range(1, config.max_auto_iterations + 1):
        targets = [name for name in state.bundle.names() if name.endswith(".py")
                   and not name.startswith(TEST_PREFIX)]
        test_files, warnings = _generate_test_files(session, targets, cache)
        combined = CodeBundle(
            files=state.bundle.files + tuple(test_files), round=state.bundle.round
        )
        ws = session._materialize(combined, session.session_dir, state.id,
                                  state.bundle.round)
        report = session._run_tests(ws, [f.name for f in test_files], config)
        payload = {"round": round_no, "report": report.to_dict()}
        if warnings:
            payload["warnings"] = warnings
        if not targets:
            payload["warnings"] = payload.get("warnings", []) + ["no testable files"]
        if report.all_passed():
            payload["to_phase"] = _session.Phase.SYSTEM_TESTING.value
            session._record(_session.EventKind.UNIT_TEST_ROUND, payload)
            return
        fixed, warning = _fix_from_failures(session, report, _next_round(session))
        if fixed is not None:
            fixed = _drop_test_files(fixed, state.bundle)
            payload["bundle"] = fixed.to_dict()
        elif warning:
            payload["warnings"] = payload.get("warnings", []) + [warning]
        payload["to_phase"] = _session.Phase.UNIT_TESTING.value
        session._record(_session.EventKind.UNIT_TEST_ROUND, payload)
    session._record(
        _session.EventKind.AUTO_LOOP_EXHAUSTED,
        {"loop": "unit", "rounds": config.max_auto_iterations,
         "to_phase": _session.Phase.SYSTEM_TESTING.value},
    )


def _drop_test_files(bundle: CodeBundle, previous: CodeBundle) -> CodeBundle:
    """Remove generated test files a fix reply may have echoed back."""
    kept = tuple(
        f for f in bundle.files
        if not (f.name.startswith(TEST_PREFIX) and previous.get(f.name) is None)
    )
    return CodeBundle(files=kept, round=bundle.round)


def _candidate_snapshot(session, clean_start: bool) -> dict:
    bundle = session.state.bundle
    return {
        "round": bundle.round,
        "bundle": bundle.to_dict(),
        "clean_start": clean_start,
        "findings_count": len(detect_placeholders(bundle)),
        "manual_passes": 0,
    }


def system_test_loop(session) -> None:
    """SystemTesting phase: launch the program, fix crash reports, bounded by budget."""
    state = session.state
    config = state.config
    for round_no in range(1, config.max_auto_iterations + 1):
        ws = session._materialize(state.bundle, session.session_dir, state.id,
                                  state.bundle.round)
        outcome = session._run_entry(ws, config)
        payload = {"round": round_no, "status": outcome.status.value}
        if outcome.startup_ok():
            payload["candidate"] = _candidate_snapshot(session, clean_start=True)
            payload["to_phase"] = _session.Phase.MANUAL_VALIDATION.value
            session._record(_session.EventKind.SYSTEM_TEST_ROUND, payload)
            return
        payload["excerpt"] = outcome.error_excerpt
        fixed, warning = _fix_from_excerpt(session, outcome, _next_round(session))
        if fixed is not None:
            payload["bundle"] = fixed.to_dict()
        elif warning:
            payload["warnings"] = [warning]
        payload["to_phase"] = _session.Phase.SYSTEM_TESTING.value
        session._record(_session.EventKind.SYSTEM_TEST_ROUND, payload)
    session._record(
        _session.EventKind.AUTO_LOOP_EXHAUSTED,
        {"loop": "system", "rounds": config.max_auto_iterations,
         "candidate": _candidate_snapshot(session, clean_start=False),
         "to_phase": _session.Phase.MANUAL_VALIDATION.value},
    )


def _fix_from_excerpt(session, outcome, round_id: int) -> tuple[CodeBundle | None, str | None]:
    problem = outcome.error_excerpt or f"program exited with status {outcome.status.value}"
    pair = render_bugfix_prompt(session.state.bundle, problem)
    replacement, warning = _tolerant_generate(
        session, pair, lambda text: parse_code_bundle(text, round=round_id)
    )
    if replacement is None:
        return None, warning
    merged = session.state.bundle.merged(replacement, round=round_id)
    return _drop_test_files(merged, session.state.bundle), None


# RunStatus is re-exported for callers that inspect system round payloads
__all__ = [
    "generate_bundle", "refinement_pass", "unit_test_loop",
    "system_test_loop", "apply_manual_bugfix", "RunStatus",
]

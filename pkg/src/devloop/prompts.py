"""Prompt rendering for every model call in the pipeline.

Templates live as text assets under ``templates/`` and are the only source
of prompt text in the system.  Slots use ``{name}`` markers; substitution is
literal and single-pass, so slot values are inserted verbatim (no escaping,
and marker-shaped text inside a value is never re-substituted).  Template
files follow the text-file convention of one trailing newline, which the
loader strips.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources

from .artifacts import CodeBundle, CodeFile, SystemDesign, UseCaseSet, serialize_bundle
from .errors import InvalidInput

TEST_PREFIX = "test_"


class TemplateId(str, Enum):
    USE_CASES = "use_cases"
    DESIGN = "design"
    CODEGEN = "codegen"
    REFINE = "refine"
    UNIT_TESTS = "unit_tests"
    BUGFIX = "bugfix"


# slots each template pair consumes; renders must fill exactly these
_DECLARED_SLOTS: dict[TemplateId, frozenset[str]] = {
    TemplateId.USE_CASES: frozenset({"task"}),
    TemplateId.DESIGN: frozenset({"task", "use_cases"}),
    TemplateId.CODEGEN: frozenset({"task", "use_cases", "system_design"}),
    TemplateId.REFINE: frozenset({"findings", "code"}),
    TemplateId.UNIT_TESTS: frozenset({"target_file", "dependencies", "test_name"}),
    TemplateId.BUGFIX: frozenset({"code", "message"}),
}


@dataclass(frozen=True)
class PromptPair:
    system_message: str
    user_message: str
    template_id: TemplateId
    placeholders_filled: dict[str, str]


_template_cache: dict[str, str] = {}


def load_template(name: str) -> str:
    if name not in _template_cache:
        text = resources.files("devloop").joinpath(f"templates/{name}.txt").read_text("utf-8")
        _template_cache[name] = text[:-1] if text.endswith("\n") else text
    return _template_cache[name]


def _fill(template: str, slots: dict[str, str]) -> str:
    if not slots:
        return template
    pattern = re.compile("|".join(re.escape("{" + key + "}") for key in slots))
    return pattern.sub(lambda m: slots[m.group(0)[1:-1]], template)


def _render(template_id: TemplateId, slots: dict[str, str]) -> PromptPair:
    if set(slots) != set(_DECLARED_SLOTS[template_id]):
        raise InvalidInput(f"template {template_id.value} expects slots "
                           f"{sorted(_DECLARED_SLOTS[template_id])}, got {sorted(slots)}")
    return PromptPair(
        system_message=_fill(load_template(f"{template_id.value}.system"), {}),
        user_message=_fill(load_template(f"{template_id.value}.user"), slots),
        template_id=template_id,
        placeholders_filled=dict(slots),
    )


def render_use_case_prompt(task: str) -> PromptPair:
    if not task.strip():
        raise InvalidInput("task must not be empty")
    return _render(TemplateId.USE_CASES, {"task": task})


def render_design_prompt(task: str, use_cases: UseCaseSet) -> PromptPair:
    if not task.strip():
        raise InvalidInput("task must not be empty")
    if not use_cases.entries:
        raise InvalidInput("use case set must not be empty")
    return _render(
        TemplateId.DESIGN,
        {"task": task, "use_cases": use_cases.to_prompt_json()},
    )


def render_codegen_prompt(task: str, use_cases: UseCaseSet, design: SystemDesign) -> PromptPair:
    if not task.strip():
        raise InvalidInput("task must not be empty")
    if not use_cases.entries:
        raise InvalidInput("use case set must not be empty")
    if not design.files or any(not f.name.strip() for f in design.files):
        raise InvalidInput("design must list at least one named file")
    return _render(
        TemplateId.CODEGEN,
        {
            "task": task,
            "use_cases": use_cases.to_prompt_json(),
            "system_design": design.to_prompt_json(),
        },
    )


def render_refine_prompt(bundle: CodeBundle, findings: list[str]) -> PromptPair | None:
    """Returns None when there is nothing to refine (caller skips the call)."""
    if not bundle.files:
        raise InvalidInput("bundle must not be empty")
    if not findings:
        return None
    listing = "\n".join(f"- {finding}" for finding in findings)
    return _render(
        TemplateId.REFINE,
        {"findings": listing, "code": serialize_bundle(bundle)},
    )


def render_unit_test_prompt(bundle: CodeBundle, target_file: str) -> PromptPair:
    target = bundle.get(target_file)
    if target is None:
        raise InvalidInput(f"target file {target_file!r} is not in the bundle")
    others = [f for f in bundle.files if f.name != target_file]
    return _render(
        TemplateId.UNIT_TESTS,
        {
            "target_file": _file_block(target),
            "dependencies": "\n\n".join(_file_block(f) for f in others),
            "test_name": TEST_PREFIX + target_file,
        },
    )


def render_bugfix_prompt(bundle: CodeBundle, message: str) -> PromptPair:
    if not bundle.files:
        raise InvalidInput("bundle must not be empty")
    if not message.strip():
        raise InvalidInput("problem message must not be empty")
    return _render(
        TemplateId.BUGFIX,
        {"code": serialize_bundle(bundle), "message": message},
    )


def render_reparse_followup(error: str) -> str:
    """Follow-up user message sent in-session after an unparseable response."""
    return _fill(load_template("reparse.user"), {"error": error})


def _file_block(code_file: CodeFile) -> str:
    return serialize_bundle(CodeBundle(files=(code_file,), round=0))

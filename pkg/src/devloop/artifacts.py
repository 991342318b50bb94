"""Artifact types and parsers for structured model output.

Chat models wrap structured answers in prose, fences, and stray commentary.
This module turns the three response formats the pipeline depends on
(numbered use-case JSON, filename->responsibility design JSON, multi-file
markdown code bundles) into validated domain objects, with repair findings
instead of hard failures wherever a response is salvageable.  It also hosts
the lexical placeholder/import scan that feeds the refinement pass.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

from .errors import (
    DuplicateFile,
    InvalidEdit,
    MalformedDesign,
    MalformedUseCases,
    NoFilesParsed,
    NoJsonFound,
)

# ---------------------------------------------------------------------------
# Use cases
# ---------------------------------------------------------------------------


class Provenance(str, Enum):
    GENERATED = "generated"
    HUMAN_EDITED = "human_edited"
    HUMAN_ADDED = "human_added"


@dataclass(frozen=True)
class UseCaseEntry:
    text: str
    provenance: Provenance


@dataclass(frozen=True)
class UseCaseEdit:
    """One human edit: ``modify``/``delete`` name an existing id, ``add`` does not."""

    action: str  # modify | add | delete
    id: str | None = None
    text: str | None = None


@dataclass
class UseCaseSet:
    """Ordered, numbered requirements with per-entry provenance.

    ``entries`` iterates in ascending numeric id order.  ``revision`` counts
    accepted human edit batches, starting at 0 for a freshly parsed draft.
    """

    entries: dict[str, UseCaseEntry]
    revision: int = 0

    def __post_init__(self):
        ordered = sorted(self.entries.items(), key=lambda kv: int(kv[0]))
        self.entries = dict(ordered)

    def ids(self) -> list[str]:
        return list(self.entries)

    def texts(self) -> dict[str, str]:
        return {uid: entry.text for uid, entry in self.entries.items()}

    def to_prompt_json(self) -> str:
        """The numbered JSON object form the templates embed."""
        return json.dumps(self.texts(), indent=4, ensure_ascii=False)

    def apply_edits(self, edits: list[UseCaseEdit],
                    provenance_modify: Provenance = Provenance.HUMAN_EDITED,
                    provenance_add: Provenance = Provenance.HUMAN_ADDED) -> "UseCaseSet":
        """Apply one accepted edit batch; returns a new set with revision + 1."""
        if not edits:
            raise InvalidEdit("empty edit batch")
        entries = dict(self.entries)
        for edit in edits:
            if edit.action == "modify":
                if edit.id not in entries:
                    raise InvalidEdit(f"unknown use case id {edit.id!r}")
                if not (edit.text or "").strip():
                    raise InvalidEdit(f"empty replacement text for id {edit.id!r}")
                entries[edit.id] = UseCaseEntry(edit.text, provenance_modify)
            elif edit.action == "delete":
                if edit.id not in entries:
                    raise InvalidEdit(f"unknown use case id {edit.id!r}")
                del entries[edit.id]
            elif edit.action == "add":
                if not (edit.text or "").strip():
                    raise InvalidEdit("empty text for added use case")
                next_id = str(max((int(i) for i in entries), default=0) + 1)
                entries[next_id] = UseCaseEntry(edit.text, provenance_add)
            else:
                raise InvalidEdit(f"unknown edit action {edit.action!r}")
        if not entries:
            raise InvalidEdit("edit batch would delete every use case")
        return UseCaseSet(entries=entries, revision=self.revision + 1)

    def to_dict(self) -> dict:
        return {
            "entries": {
                uid: {"text": e.text, "provenance": e.provenance.value}
                for uid, e in self.entries.items()
            },
            "revision": self.revision,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "UseCaseSet":
        return cls(
            entries={
                uid: UseCaseEntry(item["text"], Provenance(item["provenance"]))
                for uid, item in data["entries"].items()
            },
            revision=data["revision"],
        )


# ---------------------------------------------------------------------------
# System design
# ---------------------------------------------------------------------------

MAX_DESIGN_FILES = 6


@dataclass(frozen=True)
class DesignFile:
    name: str
    responsibility: str


@dataclass
class SystemDesign:
    """Filename -> responsibility map, entry file first.

    Soft violations of the design rules (file budget, nesting, entry-file
    position) are repaired where possible and reported in ``findings``.
    """

    files: list[DesignFile]
    findings: list[str] = field(default_factory=list)

    def names(self) -> list[str]:
        return [f.name for f in self.files]

    def entry_file(self) -> str:
        for f in self.files:
            if Path(f.name).stem == "main":
                return f.name
        return self.files[0].name

    def to_prompt_json(self) -> str:
        return json.dumps(
            {f.name: f.responsibility for f in self.files}, indent=4, ensure_ascii=False
        )

    def to_dict(self) -> dict:
        return {
            "files": [{"name": f.name, "responsibility": f.responsibility} for f in self.files],
            "findings": list(self.findings),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SystemDesign":
        return cls(
            files=[DesignFile(f["name"], f["responsibility"]) for f in data["files"]],
            findings=list(data.get("findings", [])),
        )


# ---------------------------------------------------------------------------
# Code bundles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CodeFile:
    name: str  # lowercase, extension included, no path separators
    language_tag: str
    docstring: str
    body: str

    def file_content(self) -> str:
        """On-disk form: the docstring re-embedded at the head of the file."""
        if self.docstring:
            return f"'''{self.docstring}'''\n{self.body}"
        return self.body


@dataclass(frozen=True)
class CodeBundle:
    files: tuple[CodeFile, ...]
    round: int

    def names(self) -> list[str]:
        return [f.name for f in self.files]

    def get(self, name: str) -> CodeFile | None:
        for f in self.files:
            if f.name == name:
                return f
        return None

    def merged(self, replacements: "CodeBundle | list[CodeFile]", round: int) -> "CodeBundle":
        """Replace same-named files, keep the rest; files new to the bundle are appended."""
        new_files = list(replacements.files) if isinstance(replacements, CodeBundle) else list(replacements)
        by_name = {f.name: f for f in new_files}
        merged = [by_name.pop(f.name, f) for f in self.files]
        merged.extend(f for f in new_files if f.name in by_name)  # files new to the bundle
        return CodeBundle(files=tuple(merged), round=round)

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "files": [
                {
                    "name": f.name,
                    "language_tag": f.language_tag,
                    "docstring": f.docstring,
                    "body": f.body,
                }
                for f in self.files
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CodeBundle":
        return cls(
            files=tuple(
                CodeFile(f["name"], f["language_tag"], f["docstring"], f["body"])
                for f in data["files"]
            ),
            round=data["round"],
        )


def serialize_bundle(bundle: CodeBundle) -> str:
    """Render a bundle back into the markdown file-block grammar.

    ``parse_code_bundle(serialize_bundle(b))`` yields a bundle equal to ``b``
    (names, docstrings and bodies byte-equal).
    """
    blocks = []
    for f in bundle.files:
        parts = [f.name, f"```{f.language_tag}"]
        if f.docstring:
            parts.append(f"'''{f.docstring}'''")
        parts.append(f.body)
        parts.append("```")
        blocks.append("\n".join(parts))
    return "\n\n".join(blocks)


# ---------------------------------------------------------------------------
# Findings
# ---------------------------------------------------------------------------


class FindingKind(str, Enum):
    UNIMPLEMENTED_FUNCTION = "unimplemented_function"
    MISSING_IMPORT = "missing_import"
    EMPTY_FILE = "empty_file"


@dataclass(frozen=True)
class Finding:
    kind: FindingKind
    file: str
    detail: str
    location: int | None = None  # 1-based line within the on-disk file

    def describe(self) -> str:
        where = f"{self.file}, line {self.location}" if self.location else self.file
        return f"{where}: {self.detail}"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "file": self.file,
            "detail": self.detail,
            "location": self.location,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Finding":
        return cls(FindingKind(data["kind"]), data["file"], data["detail"], data.get("location"))


# ---------------------------------------------------------------------------
# JSON extraction
# ---------------------------------------------------------------------------

_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)(?:```|\Z)", re.DOTALL)


def _balanced_object_end(text: str, start: int) -> int:
    """Index of the ``}`` closing the object opened at ``start``, or -1."""
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return i
    return -1


def _first_json_object(region: str) -> str | None:
    pos = region.find("{")
    while pos != -1:
        end = _balanced_object_end(region, pos)
        if end != -1:
            fragment = region[pos : end + 1]
            try:
                json.loads(fragment)
            except json.JSONDecodeError:
                pass
            else:
                return fragment
        pos = region.find("{", pos + 1)
    return None


def extract_json(text: str) -> str:
    """Return the first top-level balanced ``{...}`` region that parses as JSON.

    Fenced code blocks are scanned first (models usually put the payload
    there), then the raw text.  Raises :class:`NoJsonFound` if nothing parses.
    """
    for match in _FENCE_RE.finditer(text):
        fragment = _first_json_object(match.group(1))
        if fragment is not None:
            return fragment
    fragment = _first_json_object(text)
    if fragment is not None:
        return fragment
    raise NoJsonFound("no parseable JSON object in response")


# ---------------------------------------------------------------------------
# Use-case and design parsing
# ---------------------------------------------------------------------------


def parse_use_cases(text: str) -> UseCaseSet:
    """Parse the numbered use-case JSON object out of a model response."""
    data = json.loads(extract_json(text))
    if not isinstance(data, dict) or not data:
        raise MalformedUseCases("expected a non-empty JSON object of use cases")
    entries: dict[str, UseCaseEntry] = {}
    for key, value in data.items():
        # isdecimal, not isdigit: superscript digits pass isdigit but break int()
        if not isinstance(key, str) or not key.strip().isdecimal():
            raise MalformedUseCases(f"use case id {key!r} is not a number")
        if not isinstance(value, str) or not value.strip():
            raise MalformedUseCases(f"use case {key!r} has no description")
        entries[key.strip()] = UseCaseEntry(value, Provenance.GENERATED)
    return UseCaseSet(entries=entries, revision=0)


def parse_design(text: str) -> SystemDesign:
    """Parse the filename->responsibility design object, repairing soft violations."""
    data = json.loads(extract_json(text))
    if not isinstance(data, dict) or not data:
        raise MalformedDesign("expected a non-empty JSON object of design files")
    findings: list[str] = []
    files: list[DesignFile] = []
    seen: set[str] = set()
    for key, value in data.items():
        if not isinstance(key, str) or not key.strip():
            raise MalformedDesign(f"design filename {key!r} is not text")
        if not isinstance(value, str):
            raise MalformedDesign(f"responsibility for {key!r} is not text")
        name = key.strip()
        if "/" in name or "\\" in name:
            flat = Path(name.replace("\\", "/")).name
            findings.append(f"nested path {name!r} flattened to {flat!r}")
            name = flat
        if name in seen:
            findings.append(f"duplicate design entry {name!r} dropped")
            continue
        seen.add(name)
        files.append(DesignFile(name, value))
    main_index = next((i for i, f in enumerate(files) if Path(f.name).stem == "main"), None)
    if main_index is None:
        findings.append("design lists no main file")
    elif main_index != 0:
        files.insert(0, files.pop(main_index))
        findings.append(f"entry file {files[0].name!r} moved to front")
    if len(files) > MAX_DESIGN_FILES:
        findings.append(f"design lists {len(files)} files, over the {MAX_DESIGN_FILES}-file budget")
    return SystemDesign(files=files, findings=findings)


# ---------------------------------------------------------------------------
# Code bundle parsing
# ---------------------------------------------------------------------------

_FILENAME_RE = re.compile(r"^[a-zA-Z0-9_][a-zA-Z0-9_.\-]*\.[a-zA-Z0-9_]+$")


def _candidate_filename(line: str) -> str | None:
    """Strip markdown decorations and return the filename if the line holds one."""
    text = line.strip()
    text = re.sub(r"^#+\s*", "", text)
    text = re.sub(r"^(?:\d+[.)]|[-*+])\s+", "", text)
    text = text.strip("*_` ").rstrip(":").strip("*_` ")
    if re.match(r"^(?:FILENAME|File(?:name)?)\s*[:=]\s*", text, re.IGNORECASE):
        text = re.split(r"[:=]\s*", text, maxsplit=1)[1].strip("*_` ")
    if "/" in text or "\\" in text:
        text = Path(text.replace("\\", "/")).name
    if _FILENAME_RE.match(text):
        return text.lower()
    return None


def _split_docstring(block_lines: list[str]) -> tuple[str, str]:
    """Split the optional leading triple-quoted docstring off a fence body."""
    k = 0
    while k < len(block_lines) and not block_lines[k].strip():
        k += 1
    if k >= len(block_lines):
        return "", "\n".join(block_lines)
    first = block_lines[k].strip()
    for quote in ("'''", '"""'):
        if not first.startswith(quote):
            continue
        rest = first[len(quote):]
        if quote in rest:  # one-line docstring
            doc = rest[: rest.index(quote)]
            return doc, "\n".join(block_lines[k + 1 :])
        doc_lines = [rest]
        for j in range(k + 1, len(block_lines)):
            line = block_lines[j]
            if quote in line:
                doc_lines.append(line[: line.index(quote)])
                return "\n".join(doc_lines), "\n".join(block_lines[j + 1 :])
            doc_lines.append(line)
        break  # unterminated docstring: treat the whole block as body
    return "", "\n".join(block_lines)


def parse_code_bundle(text: str, round: int = 1) -> CodeBundle:
    """Parse FILENAME + fenced-block pairs into a :class:`CodeBundle`.

    A file block is a line holding a filename, followed (blank lines allowed)
    by a fenced code block whose first element may be a triple-quoted
    docstring.  Fenced blocks without a preceding filename are ignored.
    """
    lines = text.split("\n")
    files: list[CodeFile] = []
    seen: set[str] = set()
    i = 0
    while i < len(lines):
        stripped = lines[i].strip()
        if not stripped.startswith("```"):
            i += 1
            continue
        language_tag = stripped.lstrip("`").strip()
        # look back over blank lines for the filename
        k = i - 1
        while k >= 0 and not lines[k].strip():
            k -= 1
        name = _candidate_filename(lines[k]) if k >= 0 else None
        j = i + 1
        block: list[str] = []
        while j < len(lines) and lines[j].strip() not in ("```", "````"):
            block.append(lines[j])
            j += 1
        if name is not None:
            if name in seen:
                raise DuplicateFile(f"response defines {name!r} twice")
            seen.add(name)
            docstring, body = _split_docstring(block)
            files.append(CodeFile(name=name, language_tag=language_tag, docstring=docstring, body=body))
        i = j + 1
    if not files:
        raise NoFilesParsed("no recognizable file blocks in response")
    mains = [f.name for f in files if Path(f.name).stem == "main"]
    if len(mains) > 1:
        raise DuplicateFile(f"response defines more than one entry file: {', '.join(mains)}")
    return CodeBundle(files=tuple(files), round=round)


# ---------------------------------------------------------------------------
# Placeholder and import findings
# ---------------------------------------------------------------------------

_DEF_RE = re.compile(r"^(\s*)(?:async\s+)?def\s+(\w+)\s*\(")
_IMPORT_RE = re.compile(r"^\s*import\s+(.+?)\s*(?:#.*)?$")
_FROM_IMPORT_RE = re.compile(r"^\s*from\s+([A-Za-z_][\w.]*)\s+import\b")
_PLACEHOLDER_STMT_RE = re.compile(r"^(?:pass|\.\.\.|raise\s+NotImplementedError\b.*)$")
_TODO_COMMENT_RE = re.compile(r"^#\s*(?:TODO|FIXME)\b", re.IGNORECASE)

_known_modules_cache: dict[str, frozenset[str]] = {}


def load_known_modules(path: str | Path | None = None) -> frozenset[str]:
    """Module names resolvable in the generated-project environment.

    The default asset ships the standard library plus the allowlisted
    third-party names; a config file (one name per line, ``#`` comments) can
    replace it.
    """
    key = str(path) if path else "<default>"
    if key not in _known_modules_cache:
        if path:
            raw = Path(path).read_text(encoding="utf-8")
        else:
            raw = resources.files("devloop").joinpath("assets/known_modules.txt").read_text("utf-8")
        names = set()
        for line in raw.splitlines():
            entry = line.split("#", 1)[0].strip()
            if entry:
                names.add(entry)
        _known_modules_cache[key] = frozenset(names)
    return _known_modules_cache[key]


def _strip_trailing_comment(line: str) -> str:
    # good enough for the lexical scan; strings containing '#' are rare in imports
    return line.split("#", 1)[0].rstrip()


def _function_findings(code_file: CodeFile, line_offset: int, lines: list[str]) -> list[Finding]:
    findings = []
    for idx, line in enumerate(lines):
        m = _DEF_RE.match(line)
        if not m:
            continue
        indent = len(m.group(1))
        name = m.group(2)
        # same-line suite: def f(): pass
        after_colon = None
        no_comment = _strip_trailing_comment(line)
        if ":" in no_comment:
            tail = no_comment.rsplit(":", 1)[1].strip()
            if tail:
                after_colon = tail
        if after_colon is not None:
            statements = [after_colon]
        else:
            statements = []
            for body_line in lines[idx + 1 :]:
                stripped = body_line.strip()
                if not stripped:
                    continue
                body_indent = len(body_line) - len(body_line.lstrip())
                if body_indent <= indent:
                    break
                statements.append(stripped)
        significant = []
        in_doc = False
        doc_quote = ""
        for stmt in statements:
            if in_doc:
                if doc_quote in stmt:
                    in_doc = False
                continue
            if not significant and (stmt.startswith("'''") or stmt.startswith('"""')):
                doc_quote = stmt[:3]
                if stmt.count(doc_quote) < 2:
                    in_doc = True
                continue
            significant.append(stmt)
        placeholder_only = all(
            _PLACEHOLDER_STMT_RE.match(_strip_trailing_comment(s).strip()) or _TODO_COMMENT_RE.match(s)
            for s in significant
        )
        if placeholder_only:
            findings.append(
                Finding(
                    kind=FindingKind.UNIMPLEMENTED_FUNCTION,
                    file=code_file.name,
                    detail=f"function {name!r} body is only a placeholder",
                    location=line_offset + idx + 1,
                )
            )
    return findings


def _import_findings(code_file: CodeFile, line_offset: int, lines: list[str],
                     bundle_stems: set[str], known: frozenset[str]) -> list[Finding]:
    findings = []
    reported: set[str] = set()
    for idx, line in enumerate(lines):
        bases: list[str] = []
        m = _FROM_IMPORT_RE.match(line)
        if m:
            bases.append(m.group(1).split(".")[0])
        else:
            m = _IMPORT_RE.match(line)
            if m and not line.lstrip().startswith("from"):
                for part in m.group(1).split(","):
                    target = part.strip().split(" as ")[0].strip()
                    if target and re.match(r"^[A-Za-z_][\w.]*$", target):
                        bases.append(target.split(".")[0])
        for base in bases:
            if base in bundle_stems or base in known or base in reported:
                continue
            reported.add(base)
            findings.append(
                Finding(
                    kind=FindingKind.MISSING_IMPORT,
                    file=code_file.name,
                    detail=f"imported module {base!r} is neither part of the project nor a known module",
                    location=line_offset + idx + 1,
                )
            )
    return findings


def detect_placeholders(bundle: CodeBundle, known_modules: frozenset[str] | None = None) -> list[Finding]:
    """Lexical scan for the issues the refinement pass fixes.

    Flags function bodies that are only a placeholder statement or TODO
    comment, imports of modules that are neither bundle files nor known
    modules, and zero-length files.  The scan is line-based on purpose: it
    must tolerate files that do not parse yet.
    """
    known = known_modules if known_modules is not None else load_known_modules()
    bundle_stems = {Path(f.name).stem for f in bundle.files}
    findings: list[Finding] = []
    for code_file in bundle.files:
        content = code_file.file_content()
        if not content.strip():
            findings.append(
                Finding(FindingKind.EMPTY_FILE, code_file.name, "file has no content")
            )
            continue
        # line numbers refer to the on-disk file, where the docstring is line 1
        offset = 0
        lines = content.split("\n")
        findings.extend(_function_findings(code_file, offset, lines))
        findings.extend(_import_findings(code_file, offset, lines, bundle_stems, known))
    return findings

"""Parser behavior on model responses, including the golden-fixture suite."""

from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from devloop.artifacts import (
    CodeBundle,
    CodeFile,
    Finding,
    FindingKind,
    Provenance,
    UseCaseEdit,
    UseCaseSet,
    detect_placeholders,
    extract_json,
    parse_code_bundle,
    parse_design,
    parse_use_cases,
    serialize_bundle,
)
from devloop.errors import (
    DevloopError,
    DuplicateFile,
    InvalidEdit,
    MalformedDesign,
    MalformedUseCases,
    NoFilesParsed,
    NoJsonFound,
)

from conftest import golden_text

# ---------------------------------------------------------------------------
# extract_json
# ---------------------------------------------------------------------------


def brute_force_extract(region: str) -> str | None:
    """Reference scan: leftmost opening brace, longest fragment that parses."""
    for start, ch in enumerate(region):
        if ch != "{":
            continue
        for end in range(len(region) - 1, start - 1, -1):
            if region[end] != "}":
                continue
            fragment = region[start : end + 1]
            try:
                json.loads(fragment)
            except json.JSONDecodeError:
                continue
            return fragment
    return None


def test_extract_json_single_candidate():
    assert extract_json('Sure! Here it is: {"1": "x"}') == '{"1": "x"}'


def test_extract_json_fenced_block_wins():
    text = '{"outside": 1}\n```json\n{"inside": 2}\n```\ntrailing words'
    assert extract_json(text) == '{"inside": 2}'


def test_extract_json_leftmost_longest():
    # frozen oracle value, cross-checked by the brute-force scan below
    text = '{"a": {"b": 1}} tail {"c": 2}'
    assert extract_json(text) == '{"a": {"b": 1}}'
    assert brute_force_extract(text) == '{"a": {"b": 1}}'


def test_extract_json_braces_inside_strings():
    text = 'noise {"a": "}{", "b": "{"} done'
    assert extract_json(text) == '{"a": "}{", "b": "{"}'


def test_extract_json_skips_non_parsing_regions():
    assert extract_json("{not json} but {\"k\": 1} follows") == '{"k": 1}'


def test_extract_json_nothing_found():
    with pytest.raises(NoJsonFound):
        extract_json("no json here at all")
    with pytest.raises(NoJsonFound):
        extract_json('{"unterminated": ')


_json_values = st.recursive(
    st.none()
    | st.booleans()
    | st.integers(-10**6, 10**6)
    | st.text(st.characters(blacklist_categories=("Cs",)), max_size=12),
    lambda children: st.lists(children, max_size=3)
    | st.dictionaries(st.text(max_size=6), children, max_size=3),
    max_leaves=8,
)
_json_objects = st.dictionaries(st.text(max_size=6), _json_values, max_size=4)
_raw_prose = st.text(
    st.characters(blacklist_characters="`", blacklist_categories=("Cs",)), max_size=40
)
_braceless_prose = _raw_prose.map(lambda s: s.replace("{", "").replace("}", ""))


@settings(max_examples=300)
@given(prefix=_raw_prose, obj=_json_objects, suffix=_raw_prose)
def test_extract_json_matches_brute_force_on_raw_text(prefix, obj, suffix):
    text = prefix + json.dumps(obj) + suffix
    expected = brute_force_extract(text)
    assert expected is not None  # the embedded object guarantees a hit
    assert extract_json(text) == expected


@settings(max_examples=200)
@given(prefix=_braceless_prose, obj=_json_objects, suffix=_braceless_prose)
def test_extract_json_recovers_embedded_object(prefix, obj, suffix):
    dumped = json.dumps(obj)
    assert extract_json(prefix + dumped + suffix) == dumped


@settings(max_examples=300)
@given(text=st.text(max_size=80))
def test_extract_json_total_and_sound(text):
    try:
        fragment = extract_json(text)
    except NoJsonFound:
        return
    json.loads(fragment)  # recovery soundness: returned fragments always parse


# ---------------------------------------------------------------------------
# parse_use_cases
# ---------------------------------------------------------------------------


def test_parse_use_cases_format_exemplar():
    ucs = parse_use_cases(golden_text("response_use_cases_exemplar.txt"))
    assert ucs.texts() == {"1": "User can view the GUI."}
    assert ucs.revision == 0
    assert ucs.entries["1"].provenance is Provenance.GENERATED


def test_parse_use_cases_iris_initial_golden():
    ucs = parse_use_cases(golden_text("response_use_cases_initial.txt"))
    assert ucs.ids() == ["1", "2", "3", "4"]
    assert ucs.texts() == {
        "1": "User can input the characteristics of iris flowers.",
        "2": "User can submit the input data to the neural network classifier",
        "3": "User can obtain the classification results.",
        "4": "User can view the classification results in JSON format.",
    }


def test_parse_use_cases_iris_reviewed_golden():
    ucs = parse_use_cases(golden_text("response_use_cases_reviewed.txt"))
    assert ucs.texts()["4"] == "User can view the classification results on a board."
    assert ucs.ids() == ["1", "2", "3", "4"]


def test_parse_use_cases_iris_revised_golden():
    ucs = parse_use_cases(golden_text("response_use_cases_revised.txt"))
    assert ucs.texts() == {
        "1": 'User can input the characteristics of iris flowers. The input includes four characteristics: "SepalLengthCm", "SepalWidthCm", "PetalLengthCm", and "PetalWidthCm".',
        "2": "User can submit the input data to the neural network classifier",
        "3": "User can obtain the classification result.",
        "4": "User can view the classification name of the iris flower on the board. The result should be the species name.",
    }


def test_parse_use_cases_orders_ascending():
    ucs = parse_use_cases('{"2": "b", "1": "a", "10": "c"}')
    assert ucs.ids() == ["1", "2", "10"]


@pytest.mark.parametrize(
    "payload",
    ['{"one": "a"}', '{"1": ""}', '{"1": 5}', "{}", '{"1": "a", "x2": "b"}'],
)
def test_parse_use_cases_rejects_malformed(payload):
    with pytest.raises(MalformedUseCases):
        parse_use_cases(payload)


def test_parse_use_cases_no_json_passthrough():
    with pytest.raises(NoJsonFound):
        parse_use_cases("I could not produce use cases.")


@settings(max_examples=200)
@given(
    ids=st.lists(st.integers(1, 999), min_size=1, max_size=8, unique=True),
    texts=st.data(),
)
def test_parse_use_cases_order_property(ids, texts):
    body = {
        str(i): texts.draw(
            st.text(st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=20).filter(
                lambda s: s.strip()
            )
        )
        for i in ids
    }
    ucs = parse_use_cases(json.dumps(body))
    assert ucs.ids() == [str(i) for i in sorted(ids)]
    assert all(ucs.texts()[str(i)] == body[str(i)] for i in ids)


# ---------------------------------------------------------------------------
# UseCaseSet edits
# ---------------------------------------------------------------------------


def _iris_set() -> UseCaseSet:
    return parse_use_cases(golden_text("response_use_cases_initial.txt"))


def test_apply_edits_modify_bumps_revision_and_provenance():
    before = _iris_set()
    after = before.apply_edits(
        [UseCaseEdit("modify", "4", "User can view the classification results on a board.")]
    )
    assert after.revision == before.revision + 1
    assert after.texts()["4"] == "User can view the classification results on a board."
    assert after.entries["4"].provenance is Provenance.HUMAN_EDITED
    assert after.entries["1"].provenance is Provenance.GENERATED
    assert before.revision == 0  # original untouched


def test_apply_edits_add_assigns_next_id():
    after = _iris_set().apply_edits([UseCaseEdit("add", text="User can reset the form.")])
    assert after.ids() == ["1", "2", "3", "4", "5"]
    assert after.entries["5"].provenance is Provenance.HUMAN_ADDED


def test_apply_edits_delete():
    after = _iris_set().apply_edits([UseCaseEdit("delete", "2")])
    assert after.ids() == ["1", "3", "4"]


@pytest.mark.parametrize(
    "edits",
    [
        [],
        [UseCaseEdit("modify", "9", "x")],
        [UseCaseEdit("modify", "1", "  ")],
        [UseCaseEdit("add", text="")],
        [UseCaseEdit("rename", "1", "x")],
    ],
)
def test_apply_edits_rejects_bad_batches(edits):
    with pytest.raises(InvalidEdit):
        _iris_set().apply_edits(edits)


def test_apply_edits_cannot_empty_the_set():
    single = parse_use_cases('{"1": "only"}')
    with pytest.raises(InvalidEdit):
        single.apply_edits([UseCaseEdit("delete", "1")])


def test_use_case_set_round_trips_through_dict():
    ucs = _iris_set().apply_edits([UseCaseEdit("modify", "1", "changed")])
    assert UseCaseSet.from_dict(ucs.to_dict()) == ucs


# ---------------------------------------------------------------------------
# parse_design
# ---------------------------------------------------------------------------


def test_parse_design_iris_golden():
    design = parse_design(golden_text("response_design_iris.txt"))
    assert design.names() == ["main.py", "classifier.py", "gui.py", "utils.py"]
    assert design.files[0].responsibility == "This is the main file of the neural network classifier tool."
    assert design.findings == []
    assert design.entry_file() == "main.py"


def test_parse_design_moves_main_to_front():
    design = parse_design('{"gui.py": "ui", "main.py": "entry"}')
    assert design.names() == ["main.py", "gui.py"]
    assert any("moved to front" in f for f in design.findings)


def test_parse_design_over_budget_is_a_finding():
    files = {f"f{i}.py": "x" for i in range(6)}
    files["main.py"] = "entry"
    design = parse_design(json.dumps(files))
    assert len(design.files) == 7
    assert any("budget" in f for f in design.findings)


def test_parse_design_flattens_nested_paths():
    design = parse_design('{"main.py": "entry", "src/helpers.py": "helper"}')
    assert design.names() == ["main.py", "helpers.py"]
    assert any("flattened" in f for f in design.findings)


def test_parse_design_missing_main_is_a_finding():
    design = parse_design('{"app.py": "entry"}')
    assert any("no main" in f for f in design.findings)
    assert design.entry_file() == "app.py"


@pytest.mark.parametrize("payload", ["{}", '{"main.py": 3}', '{"": "x"}'])
def test_parse_design_rejects_malformed(payload):
    with pytest.raises(MalformedDesign):
        parse_design(payload)


_flat_names = st.from_regex(r"[a-z][a-z0-9_]{0,6}\.py", fullmatch=True)


@settings(max_examples=200)
@given(
    names=st.lists(
        _flat_names.filter(lambda n: n != "main.py"), min_size=0, max_size=5, unique=True
    )
)
def test_parse_design_preserves_source_order(names):
    ordered = ["main.py", *names]
    payload = json.dumps({n: f"does {n}" for n in ordered})
    design = parse_design(payload)
    assert design.names() == ordered
    assert design.findings == []


# ---------------------------------------------------------------------------
# parse_code_bundle
# ---------------------------------------------------------------------------


def test_parse_code_bundle_two_file_golden():
    bundle = parse_code_bundle(golden_text("response_code_two_files.txt"))
    expected = CodeBundle.from_dict(
        json.loads(golden_text("expected_code_two_files.json"))
    )
    assert bundle == expected


def test_parse_code_bundle_docstring_extracted():
    text = "main.py\n```python\n'''entry point'''\nprint('hi')\n```"
    bundle = parse_code_bundle(text)
    [file] = bundle.files
    assert file.name == "main.py"
    assert file.docstring == "entry point"
    assert file.body == "print('hi')"


def test_parse_code_bundle_docstring_optional():
    bundle = parse_code_bundle("util.py\n```python\nx = 1\n```")
    assert bundle.files[0].docstring == ""
    assert bundle.files[0].body == "x = 1"


def test_parse_code_bundle_filename_decorations():
    for header in ("**main.py**", "### main.py", "1. main.py", "FILENAME: main.py", "`main.py`:"):
        bundle = parse_code_bundle(f"{header}\n```python\nx = 1\n```")
        assert bundle.names() == ["main.py"], header


def test_parse_code_bundle_lowercases_names():
    bundle = parse_code_bundle("Main.PY\n```python\nx = 1\n```")
    assert bundle.names() == ["main.py"]


def test_parse_code_bundle_ignores_unnamed_fences():
    text = (
        "Some explanation:\n\n```\njust an example snippet\n```\n\n"
        "main.py\n```python\nx = 1\n```"
    )
    assert parse_code_bundle(text).names() == ["main.py"]


def test_parse_code_bundle_multiline_docstring():
    text = "main.py\n```python\n'''first line\nsecond line'''\nbody = 1\n```"
    [file] = parse_code_bundle(text).files
    assert file.docstring == "first line\nsecond line"
    assert file.body == "body = 1"


def test_parse_code_bundle_duplicate_name_rejected():
    text = "main.py\n```python\nx = 1\n```\n\nmain.py\n```python\ny = 2\n```"
    with pytest.raises(DuplicateFile):
        parse_code_bundle(text)


def test_parse_code_bundle_two_entry_files_rejected():
    text = "main.py\n```python\nx = 1\n```\n\nmain.pyw\n```python\ny = 2\n```"
    with pytest.raises(DuplicateFile):
        parse_code_bundle(text)


def test_parse_code_bundle_nothing_recognizable():
    with pytest.raises(NoFilesParsed):
        parse_code_bundle("I am unable to write code today.")


def test_file_content_reembeds_docstring():
    file = CodeFile("main.py", "python", "doc", "x = 1")
    assert file.file_content() == "'''doc'''\nx = 1"
    bare = CodeFile("main.py", "python", "", "x = 1")
    assert bare.file_content() == "x = 1"


def test_merged_replaces_by_name_and_appends_new():
    base = parse_code_bundle(golden_text("response_code_two_files.txt"))
    fixed_main = CodeFile("main.py", "python", "fixed", "import game\ngame.start_game()")
    extra = CodeFile("sound.py", "python", "", "VOLUME = 1")
    merged = base.merged([fixed_main, extra], round=2)
    assert merged.names() == ["main.py", "game.py", "sound.py"]
    assert merged.get("main.py").docstring == "fixed"
    assert merged.get("game.py") == base.get("game.py")
    assert merged.round == 2


_identifiers = st.from_regex(r"[a-z][a-z0-9_]{0,6}", fullmatch=True)
_safe_doc = st.text(
    st.characters(blacklist_characters="'\"`\n", blacklist_categories=("Cs",)), max_size=20
)


def _safe_body_lines():
    line = st.text(
        st.characters(blacklist_characters="`'\"", blacklist_categories=("Cs",)), max_size=30
    )
    return st.lists(line, max_size=5).map("\n".join)


@settings(max_examples=200)
@given(
    stems=st.lists(_identifiers.filter(lambda s: s != "main"), min_size=1, max_size=4, unique=True),
    docs=st.data(),
)
def test_code_bundle_round_trip_property(stems, docs):
    files = tuple(
        CodeFile(
            name=f"{stem}.py",
            language_tag="python",
            docstring=docs.draw(_safe_doc),
            body=docs.draw(_safe_body_lines()),
        )
        for stem in stems
    )
    bundle = CodeBundle(files=files, round=1)
    assert parse_code_bundle(serialize_bundle(bundle)) == bundle


@settings(max_examples=200)
@given(text=st.text(max_size=120))
def test_parsers_total_over_arbitrary_text(text):
    for parser in (parse_use_cases, parse_design, parse_code_bundle):
        try:
            parser(text)
        except DevloopError:
            pass  # any enumerated parse error is acceptable; other exceptions are not


# ---------------------------------------------------------------------------
# detect_placeholders
# ---------------------------------------------------------------------------

KNOWN = frozenset({"tkinter", "os", "sys", "json", "numpy"})


def _bundle(*files: CodeFile) -> CodeBundle:
    return CodeBundle(files=files, round=1)


def test_detects_pass_only_function_with_line():
    file = CodeFile("utils.py", "python", "", "def parse(x):\n    pass\n")
    [finding] = detect_placeholders(_bundle(file), KNOWN)
    assert finding.kind is FindingKind.UNIMPLEMENTED_FUNCTION
    assert finding.file == "utils.py"
    assert "parse" in finding.detail
    assert finding.location == 1  # the def line in the on-disk file


def test_detects_placeholder_variants():
    body = (
        "def a():\n    ...\n"
        "def b():\n    raise NotImplementedError('later')\n"
        "def c():\n    # TODO: write this\n    pass\n"
        "def d(): pass\n"
    )
    findings = detect_placeholders(_bundle(CodeFile("m.py", "python", "", body)), KNOWN)
    assert {f.detail.split("'")[1] for f in findings} == {"a", "b", "c", "d"}


def test_docstring_only_body_counts_as_placeholder():
    body = 'def a():\n    """explains but does nothing"""\n'
    findings = detect_placeholders(_bundle(CodeFile("m.py", "python", "", body)), KNOWN)
    assert [f.kind for f in findings] == [FindingKind.UNIMPLEMENTED_FUNCTION]


def test_implemented_functions_not_flagged():
    body = (
        "def area(r):\n    '''circle area'''\n    return 3.14 * r * r\n\n"
        "def outer():\n    def inner():\n        pass\n    return inner\n"
    )
    findings = detect_placeholders(_bundle(CodeFile("m.py", "python", "", body)), KNOWN)
    # inner() is a placeholder, outer() is not
    assert [f.detail.split("'")[1] for f in findings] == ["inner"]


def test_detects_missing_import():
    file = CodeFile("main.py", "python", "", "import pandas\nimport gui\n")
    gui = CodeFile("gui.py", "python", "", "import tkinter\n")
    findings = detect_placeholders(_bundle(file, gui), KNOWN)
    assert [(f.kind, f.file) for f in findings] == [(FindingKind.MISSING_IMPORT, "main.py")]
    assert "pandas" in findings[0].detail


def test_from_import_and_aliases_resolved():
    body = "from os.path import join\nimport numpy as np, json\nfrom helper import x\n"
    file = CodeFile("main.py", "python", "", body)
    helper = CodeFile("helper.py", "python", "", "x = 1\n")
    assert detect_placeholders(_bundle(file, helper), KNOWN) == []


def test_detects_empty_file():
    findings = detect_placeholders(_bundle(CodeFile("blank.py", "python", "", "")), KNOWN)
    assert [f.kind for f in findings] == [FindingKind.EMPTY_FILE]


def test_clean_iris_shaped_bundle_has_no_findings():
    # manually audited fixture: all functions implemented, all imports resolvable
    main = CodeFile(
        "main.py", "python", "Entry point.",
        "import tkinter\nfrom gui import App\n\n\ndef main():\n    App().run()\n\n\nif __name__ == '__main__':\n    main()",
    )
    gui = CodeFile(
        "gui.py", "python", "The window.",
        "from classifier import classify\n\n\nclass App:\n    def run(self):\n        return classify([1, 2, 3, 4])",
    )
    classifier = CodeFile(
        "classifier.py", "python", "The model.",
        "import numpy\n\n\ndef classify(features):\n    return int(numpy.argmax(features))",
    )
    utils = CodeFile(
        "utils.py", "python", "Helpers.",
        "def parse_features(text):\n    return [float(p) for p in text.split(',')]",
    )
    assert detect_placeholders(_bundle(main, gui, classifier, utils), KNOWN) == []


def test_finding_round_trips_through_dict():
    finding = Finding(FindingKind.MISSING_IMPORT, "a.py", "imported module 'x' missing", 3)
    assert Finding.from_dict(finding.to_dict()) == finding

"""Scripted end-to-end walkthrough: an iris classifier built over two cycles.

The scripted transport plays the model side of the conversation with canned
replies keyed off prompt content, so the complete workflow (draft, review,
design, coding, refinement, unit tests, system runs, bug fix, use-case
revision, second cycle, completion) runs with no network and produces real
subprocess activity.  Recording the walkthrough once yields a cassette that
replays byte-for-byte, which the tests and the web console build on.
"""

from __future__ import annotations

import re
from pathlib import Path

from .errors import InvalidInput
from .gateway import BackendProfile, ChatGateway, Mode
from .session import ManualFeedback, Session, SessionConfig
from .artifacts import UseCaseEdit

DEMO_TASK = (
    "develop a neural network classifier tool that allows users to input the "
    "characteristics of iris flowers and obtain classification results"
)

DEMO_SESSION_ID = "demo-iris"

_USE_CASES_REPLY = """Here are the use cases required by this task:

```json
{
    "1": "User can input the characteristics of iris flowers.",
    "2": "User can submit the input data to the neural network classifier",
    "3": "User can obtain the classification results.",
    "4": "User can view the classification results in JSON format."
}
```"""

REVIEW_EDIT_TEXT = "User can view the classification results on a board."

REVISED_TEXTS = {
    "1": (
        "User can input the characteristics of iris flowers. The input includes "
        'four characteristics: "SepalLengthCm", "SepalWidthCm", "PetalLengthCm", '
        'and "PetalWidthCm".'
    ),
    "3": "User can obtain the classification result.",
    "4": (
        "User can view the classification name of the iris flower on the board. "
        "The result should be the species name."
    ),
}

_DESIGN_V1_REPLY = """Based on the task and use cases, here is the system design:

```json
{
    "main.py": "This is the main file of the neural network classifier tool.",
    "classifier.py": "This file contains the implementation of the machine learning classification algorithm.",
    "gui.py": "This file provides the graphical user interface for users to enter iris characteristics and view classification results.",
    "utils.py": "This file contains utility functions used in the system."
}
```"""

_DESIGN_V2_REPLY = """Based on the revised use cases, here is the updated system design:

```json
{
    "main.py": "This is the main file of the neural network classifier tool.",
    "classifier.py": "This file maps the four iris measurements to a species name.",
    "gui.py": "This file renders the species name on the result board.",
    "utils.py": "This file parses the four named iris characteristics."
}
```"""

# first coding pass: utils is left as a placeholder (refinement fixes it) and
# main calls gui with a missing argument (the system test loop fixes it)
_CODE_V1_REPLY = """main.py
```python
'''This is the main file of the neural network classifier tool.'''
import classifier
import gui
import utils

SAMPLE = "5.1,3.5,1.4,0.2"


def main():
    features = utils.parse_features(SAMPLE)
    species = classifier.classify(features)
    gui.render_result(species)


if __name__ == "__main__":
    main()
```

classifier.py
```python
'''Nearest-centroid classifier over the classic iris measurements.'''
CENTROIDS = {
    "Iris-setosa": (5.01, 3.42, 1.46, 0.24),
    "Iris-versicolor": (5.94, 2.77, 4.26, 1.33),
    "Iris-virginica": (6.59, 2.97, 5.55, 2.03),
}


def classify(features):
    def distance(centroid):
        return sum((a - b) ** 2 for a, b in zip(features, centroid))
    return min(CENTROIDS, key=lambda name: distance(CENTROIDS[name]))
```

gui.py
```python
'''Console board that displays classification results.'''
def render_result(name, board):
    line = f"Classification: {name}"
    board.append(line)
    print(line)
    return line
```

utils.py
```python
'''Utility helpers for the iris classifier tool.'''
def parse_features(raw):
    pass
```"""

_REFINE_UTILS_REPLY = """utils.py
```python
'''Utility helpers for the iris classifier tool.'''
def parse_features(raw):
    return tuple(float(part) for part in raw.split(","))
```"""

_BUGFIX_MAIN_REPLY = """main.py
```python
'''This is the main file of the neural network classifier tool.'''
import classifier
import gui
import utils

SAMPLE = "5.1,3.5,1.4,0.2"


def main():
    features = utils.parse_features(SAMPLE)
    species = classifier.classify(features)
    gui.render_result(species, [])


if __name__ == "__main__":
    main()
```"""

# second coding pass: labeled inputs, optional board, no placeholders
_CODE_V2_REPLY = """main.py
```python
'''This is the main file of the neural network classifier tool.'''
import classifier
import gui
import utils

SAMPLE = {
    "SepalLengthCm": 5.1,
    "SepalWidthCm": 3.5,
    "PetalLengthCm": 1.4,
    "PetalWidthCm": 0.2,
}


def main():
    features = utils.parse_features(",".join(str(v) for v in SAMPLE.values()))
    species = classifier.classify(features)
    gui.render_result(species)


if __name__ == "__main__":
    main()
```

classifier.py
```python
'''Maps the four iris measurements to a species name.'''
CENTROIDS = {
    "Iris-setosa": (5.01, 3.42, 1.46, 0.24),
    "Iris-versicolor": (5.94, 2.77, 4.26, 1.33),
    "Iris-virginica": (6.59, 2.97, 5.55, 2.03),
}


def classify(features):
    def distance(centroid):
        return sum((a - b) ** 2 for a, b in zip(features, centroid))
    return min(CENTROIDS, key=lambda name: distance(CENTROIDS[name]))
```

gui.py
```python
'''Renders the species name on the result board.'''
def render_result(name, board=None):
    board = board if board is not None else []
    line = f"Species: {name}"
    board.append(line)
    print(line)
    return line
```

utils.py
```python
'''Parses the four named iris characteristics.'''
def parse_features(raw):
    return tuple(float(part) for part in raw.split(","))
```"""

_TEST_REPLIES = {
    "main.py": """test_main.py
```python
'''Unit tests for the program entry module.'''
import main


def test_entry_point_exists():
    assert callable(main.main)


def test_sample_is_configured():
    assert main.SAMPLE
```""",
    "classifier.py": """test_classifier.py
```python
'''Unit tests for the classification algorithm.'''
import classifier


def test_known_setosa_sample():
    assert classifier.classify((5.0, 3.4, 1.5, 0.2)) == "Iris-setosa"


def test_returns_a_species_name():
    assert classifier.classify((6.6, 3.0, 5.5, 2.0)) in classifier.CENTROIDS
```""",
    "gui.py": """test_gui.py
```python
'''Unit tests for the result board rendering.'''
import gui


def test_render_appends_to_board():
    board = []
    gui.render_result("Iris-setosa", board)
    assert board and "Iris-setosa" in board[0]


def test_render_returns_the_line():
    assert "Iris-virginica" in gui.render_result("Iris-virginica", [])
```""",
    "utils.py": """test_utils.py
```python
'''Unit tests for the feature parsing helpers.'''
import utils


def test_parses_four_floats():
    assert utils.parse_features("5.1,3.5,1.4,0.2") == (5.1, 3.5, 1.4, 0.2)


def test_parses_integers_too():
    assert utils.parse_features("1,2,3,4") == (1.0, 2.0, 3.0, 4.0)
```""",
}

_TARGET_RE = re.compile(r"Target File:\n([a-z0-9_.]+\.py)\n")


def _scripted_reply(messages: list[dict]) -> str:
    system = messages[0]["content"]
    user = messages[-1]["content"]
    revised = "SepalLengthCm" in user
    if "Product Manager" in system:
        return _USE_CASES_REPLY
    if "software architect" in system:
        return _DESIGN_V2_REPLY if revised else _DESIGN_V1_REPLY
    if "unit tests with pytest" in system:
        match = _TARGET_RE.search(user)
        if match and match.group(1) in _TEST_REPLIES:
            return _TEST_REPLIES[match.group(1)]
        raise InvalidInput(f"unit test request for unexpected target: {user[:80]!r}")
    if system.startswith("Please review the source code"):
        return _BUGFIX_MAIN_REPLY
    if user.startswith("A static review of the source code"):
        return _REFINE_UTILS_REPLY
    if user.startswith("The user's task, use cases and original system designs"):
        return _CODE_V2_REPLY if revised else _CODE_V1_REPLY
    raise InvalidInput(f"scripted model has no reply for this prompt: {user[:80]!r}")


def scripted_transport(endpoint: str, payload: dict, headers: dict, timeout: float) -> dict:
    """Transport-shaped stand-in for a chat backend; deterministic usage numbers."""
    content = _scripted_reply(payload["messages"])
    prompt_chars = sum(len(m["content"]) for m in payload["messages"])
    return {
        "choices": [{"message": {"role": "assistant", "content": content}}],
        "usage": {
            "prompt_tokens": prompt_chars // 4,
            "completion_tokens": len(content) // 4,
        },
        "model": "scripted-demo",
    }


def demo_config(cassette_path: Path, mode: Mode, interpreter: str = "python3",
                run_timeout: float = 20.0) -> SessionConfig:
    return SessionConfig(
        run_timeout=run_timeout,
        interpreter_command=interpreter,
        backend=BackendProfile(
            endpoint="scripted://demo",
            model_name="scripted-demo",
            mode=mode,
            cassette_path=str(cassette_path),
        ),
    )


def record_demo_cassette(cassette_path: Path, base_dir: Path,
                         interpreter: str = "python3") -> Session:
    """Run the walkthrough once against the scripted model, recording every exchange."""
    cassette_path = Path(cassette_path)
    if cassette_path.exists():
        cassette_path.unlink()  # record appends; start fresh
    config = demo_config(cassette_path, Mode.RECORD, interpreter)
    gateway = ChatGateway(config.backend, transport=scripted_transport)
    return _drive(config, base_dir, DEMO_SESSION_ID, gateway)


def replay_demo_session(cassette_path: Path, base_dir: Path, session_id: str,
                        interpreter: str = "python3") -> Session:
    """Re-run the walkthrough from a cassette; no transport is ever touched."""
    config = demo_config(Path(cassette_path), Mode.REPLAY, interpreter)
    return _drive(config, base_dir, session_id)


def _drive(config: SessionConfig, base_dir: Path, session_id: str,
           gateway: ChatGateway | None = None) -> Session:
    session = Session.create(DEMO_TASK, config, Path(base_dir), session_id,
                             gateway=gateway)
    session.draft_use_cases()
    session.submit_use_case_edits([UseCaseEdit("modify", "4", REVIEW_EDIT_TEXT)])
    session.approve_use_cases()
    session.produce_design()
    session.run_auto_pipeline()
    session.submit_manual_feedback(ManualFeedback(
        per_use_case={"1": "pass", "2": "pass", "3": "fail", "4": "fail"},
        revised_use_cases=tuple(
            UseCaseEdit("modify", uid, text) for uid, text in sorted(REVISED_TEXTS.items())
        ),
    ))
    session.produce_design()
    session.run_auto_pipeline()
    session.submit_manual_feedback(ManualFeedback(
        per_use_case={"1": "pass", "2": "pass", "3": "pass", "4": "pass"},
    ))
    session.persist()
    return session

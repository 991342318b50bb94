"""Error types shared across the package.

Every raised error carries a stable ``code`` string so the HTTP service and
the CLI can surface machine-readable failures without string matching.
"""

from __future__ import annotations


class DevloopError(Exception):
    """Base class for all package errors."""

    code = "Error"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)
        self.message = message or self.code


class InvalidInput(DevloopError):
    code = "InvalidInput"


class TransportError(DevloopError):
    """Network failure that survived the retry budget."""

    code = "TransportError"


class ReplayMismatch(DevloopError):
    """Replay cassette exhausted or the request hash does not match.

    Usually a symptom of nondeterministic prompt construction.
    """

    code = "ReplayMismatch"


class EmptyResponse(DevloopError):
    """The provider returned a refusal or an empty body."""

    code = "EmptyResponse"


class NoJsonFound(DevloopError):
    code = "NoJsonFound"


class MalformedUseCases(DevloopError):
    code = "MalformedUseCases"


class MalformedDesign(DevloopError):
    code = "MalformedDesign"


class NoFilesParsed(DevloopError):
    code = "NoFilesParsed"


class DuplicateFile(DevloopError):
    code = "DuplicateFile"


class IllegalTransition(DevloopError):
    code = "IllegalTransition"


class InvalidEdit(DevloopError):
    code = "InvalidEdit"


class InvalidFeedback(DevloopError):
    code = "InvalidFeedback"


class DraftFailed(DevloopError):
    """Two consecutive unparseable generation responses."""

    code = "DraftFailed"


class LoadError(DevloopError):
    """Corrupt event log; ``last_good_seq`` names the last replayable event."""

    code = "LoadError"

    def __init__(self, message: str = "", last_good_seq: int = 0):
        super().__init__(message)
        self.last_good_seq = last_good_seq


class PathViolation(DevloopError):
    code = "PathViolation"


class EnvError(DevloopError):
    """The execution environment is broken (interpreter or runner missing)."""

    code = "EnvError"


class SuiteError(DevloopError):
    code = "SuiteError"


class IoError(DevloopError):
    """Filesystem read or write failed while exporting or importing."""

    code = "IoError"

"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine-raised errors."""


class DiffParseError(EngineError):
    """Raised when text does not parse as a unified diff."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"{message} (at patch line {line_no})"
        super().__init__(message)


class DiffConflictError(EngineError):
    """Raised when two diffs cannot be composed or applied together."""

    def __init__(self, path: str, diff_id: str, other_id: str | None, detail: str = ""):
        self.path = path
        self.diff_id = diff_id
        self.other_id = other_id
        msg = f"conflict in {path!r}: diff {diff_id!r}"
        if other_id:
            msg += f" collides with {other_id!r}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class HunkApplyError(EngineError):
    """Raised when a hunk does not apply to the target content."""

    def __init__(self, path: str, hunk_header: str, detail: str):
        self.path = path
        self.hunk_header = hunk_header
        super().__init__(f"hunk {hunk_header} failed on {path!r}: {detail}")


class UnknownDiffError(EngineError):
    """Raised when a diff id is not present in the diff store."""

    def __init__(self, diff_id: str):
        self.diff_id = diff_id
        super().__init__(f"unknown diff id {diff_id!r}")


class WorkspaceError(EngineError):
    """Workspace driver failure (setup, command transport, reset)."""


class PathEscapeError(WorkspaceError):
    """A path resolved outside the project root."""


class StaleIndexError(EngineError):
    """Index queried against a workspace tree it was not built from."""


class BackendError(EngineError):
    """Chat backend failure after exhausting retries."""


class AuthenticationError(BackendError):
    """Backend rejected the configured credentials."""


class ScriptExhaustedError(BackendError):
    """Scripted backend ran out of queued replies."""


class StructuredDecisionError(BackendError):
    """Completion could not be parsed into the requested schema."""

    def __init__(self, message: str, transcripts: list[str] | None = None):
        self.transcripts = transcripts or []
        super().__init__(message)


class ManifestError(EngineError):
    """Task manifest failed validation."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        if field:
            message = f"{message} (field: {field})"
        super().__init__(message)


class ActionError(EngineError):
    """An action failed in a way the orchestrator cannot recover from."""

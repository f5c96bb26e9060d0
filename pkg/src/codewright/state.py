"""Task state shared between actions: locations, diffs, execution records.

The state is the consensus artifact store for one task run. Retrieval
actions write locations into it, editing actions append provenance-tagged
diffs, and test executions append records. The diff store is append-only;
ordered subsets of it compose into project versions.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

from . import difftools
from .errors import EngineError, UnknownDiffError

CODE_UNIT_KINDS = ("class", "method", "function", "snippet")
TEST_UNIT_KINDS = ("method", "function", "snippet")
DIFF_KINDS = ("code", "test")

EXCERPT_LINE_CAP = 40
SUMMARY_BUDGET_DEFAULT = 8000
FAILURE_SUMMARY_CAP = 2000


def _cap_excerpt(text: str) -> str:
    lines = text.splitlines()
    if len(lines) > EXCERPT_LINE_CAP:
        lines = lines[:EXCERPT_LINE_CAP] + ["…excerpt truncated"]
    return "\n".join(lines)


def _check_rel_path(path: str):
    if path.startswith("/") or path.startswith("\\"):
        raise EngineError(f"location path must be workspace-relative: {path!r}")
    parts = path.replace("\\", "/").split("/")
    if ".." in parts:
        raise EngineError(f"location path must not traverse upward: {path!r}")


@dataclass
class CodeLocation:
    """A code unit inside the workspace (class, method, function, snippet)."""

    file: str
    unit_kind: str
    qualified_name: str
    start_line: int
    end_line: int
    excerpt: str = ""

    def __post_init__(self):
        _check_rel_path(self.file)
        if self.unit_kind not in CODE_UNIT_KINDS:
            raise EngineError(f"bad unit kind {self.unit_kind!r}")
        if not (1 <= self.start_line <= self.end_line):
            raise EngineError(f"bad line span {self.start_line}..{self.end_line}")
        self.excerpt = _cap_excerpt(self.excerpt)

    def dedup_key(self) -> tuple:
        return (self.file, self.qualified_name, self.start_line, self.end_line)

    def span_label(self) -> str:
        return f"{self.file}:{self.start_line}-{self.end_line}"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "CodeLocation":
        return cls(**data)


@dataclass
class TestLocation(CodeLocation):
    """A test unit; carries the discovered runner family when known."""

    framework_hint: str | None = None

    def __post_init__(self):
        if self.unit_kind not in TEST_UNIT_KINDS:
            raise EngineError(f"bad test unit kind {self.unit_kind!r}")
        super().__post_init__()

    @classmethod
    def from_dict(cls, data: dict) -> "TestLocation":
        return cls(**data)


@dataclass
class Diff:
    """A provenance-tagged unified diff held in the store."""

    id: str
    kind: str
    text: str
    origin: str
    parents: list[str] = field(default_factory=list)
    summary: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Diff":
        return cls(**data)


@dataclass
class CoverageReport:
    """Line coverage over workspace files: path → sorted executed lines."""

    executed: dict[str, list[int]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"executed": self.executed}

    @classmethod
    def from_dict(cls, data: dict) -> "CoverageReport":
        return cls(executed={k: list(v) for k, v in data.get("executed", {}).items()})


@dataclass
class ExecRecord:
    """Outcome of running a test selection against a diff selection."""

    diff_selection: list[str]
    test_selection: list[str]
    command: str
    exit_status: int
    failure_summary: str = ""
    coverage: CoverageReport | None = None
    wall_time: float = 0.0
    passed: int | None = None
    failed: int | None = None

    def __post_init__(self):
        if self.wall_time < 0:
            raise EngineError("wall_time must be non-negative")
        if len(self.failure_summary) > FAILURE_SUMMARY_CAP:
            self.failure_summary = self.failure_summary[:FAILURE_SUMMARY_CAP] + "…"

    def outcome_label(self) -> str:
        if self.passed is not None or self.failed is not None:
            return f"passed={self.passed or 0} failed={self.failed or 0}"
        return "ok" if self.exit_status == 0 else f"exit={self.exit_status}"

    def to_dict(self) -> dict:
        data = asdict(self)
        data["coverage"] = self.coverage.to_dict() if self.coverage else None
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ExecRecord":
        data = dict(data)
        cov = data.get("coverage")
        data["coverage"] = CoverageReport.from_dict(cov) if cov else None
        return cls(**data)


class TaskState:
    """Consensus memory for one task run.

    Holds code locations, test locations, execution records, and the
    append-only diff store, plus the id of the standalone reproduction
    test when one exists.
    """

    def __init__(self):
        self.code_locations: list[CodeLocation] = []
        self.test_locations: list[TestLocation] = []
        self.exec_records: list[ExecRecord] = []
        self.diff_store: dict[str, Diff] = {}
        self.reproducer: str | None = None
        self._next_diff_no = 1

    # -- diff store ----------------------------------------------------------

    def add_diff(
        self,
        kind: str,
        text: str,
        origin: str,
        parents: list[str] | None = None,
        summary: str = "",
    ) -> str:
        """Validate and append a diff; returns its freshly assigned id."""
        if kind not in DIFF_KINDS:
            raise EngineError(f"bad diff kind {kind!r}")
        parents = list(parents or [])
        for pid in parents:
            if pid not in self.diff_store:
                raise UnknownDiffError(pid)
        difftools.parse_patch(text)  # raises DiffParseError with position
        diff_id = f"d{self._next_diff_no}"
        self._next_diff_no += 1
        self.diff_store[diff_id] = Diff(diff_id, kind, text, origin, parents, summary)
        return diff_id

    def get_diff(self, diff_id: str) -> Diff:
        try:
            return self.diff_store[diff_id]
        except KeyError:
            raise UnknownDiffError(diff_id) from None

    def parent_chain(self, diff_id: str) -> list[str]:
        """Ids of the diff's ancestry (oldest first) ending with the diff."""
        chain: list[str] = []

        def visit(did: str):
            diff = self.get_diff(did)
            for pid in diff.parents:
                visit(pid)
            if did not in chain:
                chain.append(did)

        visit(diff_id)
        return chain

    def compose_diffs(self, ids: list[str]) -> str:
        """Compose the selected diffs, in order, into one baseline patch."""
        entries = [(did, self.get_diff(did).text) for did in ids]
        return difftools.compose_patches(entries)

    # -- locations -----------------------------------------------------------

    def merge_locations(self, found: list, kind: str) -> int:
        """Merge locations, deduplicating by (file, name, span); returns
        the number of genuinely new entries."""
        target = self.code_locations if kind == "code" else self.test_locations
        seen = {loc.dedup_key() for loc in target}
        added = 0
        for loc in found:
            key = loc.dedup_key()
            if key not in seen:
                target.append(loc)
                seen.add(key)
                added += 1
        return added

    # -- executions ----------------------------------------------------------

    def record_execution(self, rec: ExecRecord):
        for did in rec.diff_selection:
            if did not in self.diff_store:
                raise UnknownDiffError(did)
        self.exec_records.append(rec)

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "code_locations": [loc.to_dict() for loc in self.code_locations],
            "test_locations": [loc.to_dict() for loc in self.test_locations],
            "exec_records": [rec.to_dict() for rec in self.exec_records],
            "diff_store": [self.diff_store[did].to_dict() for did in self.diff_store],
            "reproducer": self.reproducer,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TaskState":
        state = cls()
        state.code_locations = [CodeLocation.from_dict(d) for d in data.get("code_locations", [])]
        state.test_locations = [TestLocation.from_dict(d) for d in data.get("test_locations", [])]
        state.exec_records = [ExecRecord.from_dict(d) for d in data.get("exec_records", [])]
        for dd in data.get("diff_store", []):
            diff = Diff.from_dict(dd)
            state.diff_store[diff.id] = diff
        state.reproducer = data.get("reproducer")
        nums = [int(did[1:]) for did in state.diff_store if did[1:].isdigit()]
        state._next_diff_no = max(nums, default=0) + 1
        return state

    # -- contract support ------------------------------------------------------

    def field_fingerprint(self) -> dict:
        """Cheap per-field snapshot used to confine action write sets."""
        return {
            "code_locations": [loc.dedup_key() for loc in self.code_locations],
            "test_locations": [loc.dedup_key() for loc in self.test_locations],
            "exec_records": len(self.exec_records),
            "diff_store": list(self.diff_store),
            "reproducer": self.reproducer,
        }


def new_task_state() -> TaskState:
    """Fresh empty state: no locations, no records, no diffs."""
    return TaskState()


def state_delta(before: dict, after: dict) -> dict:
    """Names and details of state fields that changed between fingerprints."""
    delta: dict = {}
    if before["code_locations"] != after["code_locations"]:
        delta["code_locations"] = len(after["code_locations"]) - len(before["code_locations"])
    if before["test_locations"] != after["test_locations"]:
        delta["test_locations"] = len(after["test_locations"]) - len(before["test_locations"])
    if before["exec_records"] != after["exec_records"]:
        delta["exec_records"] = after["exec_records"] - before["exec_records"]
    if before["diff_store"] != after["diff_store"]:
        delta["diff_store"] = [d for d in after["diff_store"] if d not in before["diff_store"]]
    if before["reproducer"] != after["reproducer"]:
        delta["reproducer"] = after["reproducer"]
    return delta


# ---------------------------------------------------------------------------
# Rendering for prompt inclusion
# ---------------------------------------------------------------------------

EMPTY_STATE_TEXT = "Task state: empty (no locations, no diffs, no executions)."
ELISION_MARKER = "…earlier records elided"


def _render_location(loc: CodeLocation, with_excerpt: bool) -> list[str]:
    head = f"  - {loc.span_label()} {loc.unit_kind} {loc.qualified_name}"
    if isinstance(loc, TestLocation) and loc.framework_hint:
        head += f" [{loc.framework_hint}]"
    lines = [head]
    if with_excerpt and loc.excerpt:
        lines.extend("      " + ln for ln in loc.excerpt.splitlines())
    return lines


def _render_exec(i: int, rec: ExecRecord) -> str:
    diffs = ",".join(rec.diff_selection) or "pristine"
    tests = ",".join(rec.test_selection) or "-"
    line = f"  - #{i} diffs=[{diffs}] tests=[{tests}] {rec.outcome_label()}"
    if rec.failure_summary:
        first = rec.failure_summary.splitlines()[0]
        line += f" | {first[:160]}"
    return line


def render_state_summary(state: TaskState, budget: int = SUMMARY_BUDGET_DEFAULT) -> str:
    """Deterministic text rendering of the state, at most `budget` chars.

    Truncation drops oldest execution records first, then location
    excerpts, then hard-truncates.
    """
    if budget <= 0:
        raise EngineError("budget must be positive")
    if (
        not state.code_locations
        and not state.test_locations
        and not state.exec_records
        and not state.diff_store
    ):
        return EMPTY_STATE_TEXT[:budget]

    def build(dropped_records: int, with_excerpts: bool) -> str:
        parts: list[str] = []
        parts.append(f"Code locations ({len(state.code_locations)}):")
        if state.code_locations:
            for loc in state.code_locations:
                parts.extend(_render_location(loc, with_excerpts))
        else:
            parts.append("  (none)")
        parts.append(f"Test locations ({len(state.test_locations)}):")
        if state.test_locations:
            for loc in state.test_locations:
                parts.extend(_render_location(loc, with_excerpts))
        else:
            parts.append("  (none)")
        parts.append(f"Diff store ({len(state.diff_store)}):")
        if state.diff_store:
            for did, diff in state.diff_store.items():
                line = f"  - {did} [{diff.kind}] from {diff.origin}"
                if diff.parents:
                    line += f" on {'+'.join(diff.parents)}"
                if diff.summary:
                    line += f": {diff.summary[:120]}"
                parts.append(line)
        else:
            parts.append("  (none)")
        repro = state.reproducer or "none"
        parts.append(f"Reproduction test diff: {repro}")
        parts.append(f"Executions ({len(state.exec_records)}):")
        if state.exec_records:
            if dropped_records:
                parts.append(f"  {ELISION_MARKER} ({dropped_records})")
            for i, rec in enumerate(state.exec_records):
                if i < dropped_records:
                    continue
                parts.append(_render_exec(i + 1, rec))
        else:
            parts.append("  (none)")
        return "\n".join(parts)

    text = build(0, True)
    dropped = 0
    while len(text) > budget and dropped < len(state.exec_records):
        dropped += 1
        text = build(dropped, True)
    if len(text) > budget:
        text = build(dropped, False)
    if len(text) > budget:
        text = text[: budget - 1] + "…"
    return text

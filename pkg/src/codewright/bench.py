"""Unified benchmark harness: task manifests, the three solving criteria,
compound-task construction, and pass@k aggregation.

A manifest is one JSON document per task. Evaluation always instantiates
its own workspace, so hidden suites and gold patches are never reachable
from the solving agent's environment.
"""

from __future__ import annotations

import ast
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import codeindex, difftools
from .actions.testing import parse_test_output
from .codeindex import is_test_path
from .errors import DiffConflictError, DiffParseError, HunkApplyError, ManifestError
from .workspace import Workspace, WorkspaceSpec, open_workspace

TASK_TYPES = (
    "program-repair",
    "regression-testing",
    "code-generation",
    "test-generation",
    "partial-fix",
    "feature-development",
)

CRITERIA = ("test-suite", "patch-coverage", "method-coverage", "feature")

CRITERION_FOR_TYPE = {
    "program-repair": "test-suite",
    "code-generation": "test-suite",
    "partial-fix": "test-suite",
    "regression-testing": "patch-coverage",
    "test-generation": "method-coverage",
    "feature-development": "feature",
}

COVERAGE_REPORT = "coverage.json"
COVERAGE_RUNNER = "_linecov_runner.py"

# Injected line-coverage tool: runs pytest under the stdlib tracer and
# writes a coverage.py-style JSON report for files below the project root.
COVERAGE_RUNNER_SOURCE = '''\
import json
import os
import sys
import trace

import pytest

out_path = sys.argv[1]
argv = ["-q", "-p", "no:cacheprovider"] + sys.argv[2:]
tracer = trace.Trace(count=1, trace=0, ignoredirs=[sys.prefix, sys.exec_prefix])
rc = tracer.runfunc(pytest.main, argv)
root = os.getcwd()
files = {}
for (fname, lineno), hits in tracer.results().counts.items():
    if not hits:
        continue
    abspath = os.path.abspath(fname)
    if not abspath.startswith(root + os.sep):
        continue
    rel = os.path.relpath(abspath, root)
    files.setdefault(rel, set()).add(lineno)
report = {"files": {p: {"executed_lines": sorted(lines)} for p, lines in files.items()}}
with open(out_path, "w") as fh:
    json.dump(report, fh)
sys.exit(int(rc))
'''


@dataclass
class EvalSpec:
    criterion: str
    hidden_tests: dict[str, str] = field(default_factory=dict)
    test_command: str = ""
    gold_patch: str = ""
    target: dict = field(default_factory=dict)  # {"file": ..., "qualified_name": ...}
    strict_fail_then_pass: bool = False

    def to_dict(self) -> dict:
        return {
            "criterion": self.criterion,
            "hidden_tests": dict(self.hidden_tests),
            "test_command": self.test_command,
            "gold_patch": self.gold_patch,
            "target": dict(self.target),
            "strict_fail_then_pass": self.strict_fail_then_pass,
        }


@dataclass
class TaskManifest:
    id: str
    task_type: str
    description: str
    workspace: dict
    eval: EvalSpec
    extras: dict = field(default_factory=dict)
    base_dir: str = "."

    def workspace_spec(self) -> WorkspaceSpec:
        data = dict(self.workspace)
        source = data.get("source_dir")
        if source is not None and not Path(source).is_absolute():
            data["source_dir"] = str((Path(self.base_dir) / source).resolve())
        return WorkspaceSpec.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "task_type": self.task_type,
            "description": self.description,
            "workspace": dict(self.workspace),
            "eval": self.eval.to_dict(),
            "extras": dict(self.extras),
        }


@dataclass
class Verdict:
    resolved: bool
    metric: dict
    detail: str = ""

    def to_dict(self) -> dict:
        return {"resolved": self.resolved, "metric": self.metric, "detail": self.detail}


def _validate_manifest(data: dict) -> None:
    for field_name in ("id", "task_type", "description", "workspace", "eval"):
        if field_name not in data or not data[field_name]:
            raise ManifestError("missing or empty", field=field_name)
    if data["task_type"] not in TASK_TYPES:
        raise ManifestError(f"unknown task type {data['task_type']!r}", field="task_type")
    eval_data = data["eval"]
    criterion = eval_data.get("criterion")
    expected = CRITERION_FOR_TYPE[data["task_type"]]
    if criterion != expected:
        raise ManifestError(
            f"criterion {criterion!r} does not match task type (expected {expected!r})",
            field="eval.criterion",
        )
    if criterion in ("test-suite", "feature"):
        if not eval_data.get("hidden_tests"):
            raise ManifestError("test-suite evaluation needs hidden_tests", field="eval.hidden_tests")
        if not eval_data.get("test_command"):
            raise ManifestError("test-suite evaluation needs test_command", field="eval.test_command")
    if criterion == "patch-coverage" and not eval_data.get("gold_patch"):
        raise ManifestError("patch-coverage evaluation needs gold_patch", field="eval.gold_patch")
    if criterion == "method-coverage":
        target = eval_data.get("target") or {}
        if not target.get("file") or not target.get("qualified_name"):
            raise ManifestError("method-coverage needs target.file and target.qualified_name", field="eval.target")
    if data["task_type"] == "partial-fix":
        if not (data.get("extras") or {}).get("partial_patch"):
            raise ManifestError("partial-fix tasks carry extras.partial_patch", field="extras.partial_patch")


def load_task(path: str | Path) -> TaskManifest:
    """Load and validate one manifest; the description goes to the agent
    verbatim and never reveals the evaluation payload."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"no such manifest: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc.msg}") from exc
    _validate_manifest(data)
    eval_data = data["eval"]
    return TaskManifest(
        id=data["id"],
        task_type=data["task_type"],
        description=data["description"],
        workspace=data["workspace"],
        eval=EvalSpec(
            criterion=eval_data["criterion"],
            hidden_tests=dict(eval_data.get("hidden_tests", {})),
            test_command=eval_data.get("test_command", ""),
            gold_patch=eval_data.get("gold_patch", ""),
            target=dict(eval_data.get("target", {})),
            strict_fail_then_pass=bool(eval_data.get("strict_fail_then_pass", False)),
        ),
        extras=dict(data.get("extras", {})),
        base_dir=str(path.parent),
    )


# ---------------------------------------------------------------------------
# Coverage machinery
# ---------------------------------------------------------------------------


def executable_lines(source: str) -> set[int]:
    """Statement lines the tracer can observe; docstrings excluded."""
    lines: set[int] = set()
    try:
        tree = ast.parse(source)
    except SyntaxError:
        return lines
    for node in ast.walk(tree):
        if not isinstance(node, ast.stmt):
            continue
        if isinstance(node, ast.Expr) and isinstance(node.value, ast.Constant) and isinstance(
            node.value.value, str
        ):
            continue  # docstring / bare string literal: no bytecode, never traced
        lines.add(node.lineno)
    return lines


def _run_with_coverage(ws: Workspace, test_files: list[str], timeout: float | None = None):
    """Run the given test files under the injected line tracer.

    Returns (exit_code, report dict or None, detail).
    """
    ws.write_file(COVERAGE_RUNNER, COVERAGE_RUNNER_SOURCE)
    files_arg = " ".join(test_files)
    result = ws.run_command(f"python {COVERAGE_RUNNER} {COVERAGE_REPORT} {files_arg}", timeout=timeout)
    if result.timed_out:
        return result.exit_code, None, "coverage run timed out"
    try:
        report = json.loads(ws.read_file(COVERAGE_REPORT))
    except Exception:
        return result.exit_code, None, f"no coverage report produced (exit {result.exit_code})"
    return result.exit_code, report, ""


def _candidate_test_files(solution: str) -> list[str]:
    """Test files a candidate solution adds or modifies."""
    if not solution.strip():
        return []
    files = []
    for fd in difftools.parse_patch(solution):
        if fd.is_deleted_file:
            continue
        if is_test_path(fd.path) or fd.path == "test_reproduction.py":
            files.append(fd.path)
    return files


def _apply_or_fail(ws: Workspace, composite: str) -> str | None:
    report = ws.apply_diffs(composite)
    if not report.applied:
        failed = "; ".join(f"{fh.file} {fh.hunk_header}" for fh in report.failed_hunks)
        return f"diff did not apply: {failed}"
    return None


def _coverage_fraction(
    ws: Workspace,
    changed: dict[str, set[int]],
    test_files: list[str],
) -> tuple[float, int, int, int, str]:
    """(fraction, covered, total, exit_code, detail) for changed lines."""
    total = sum(len(v) for v in changed.values())
    if total == 0:
        return 0.0, 0, 0, 0, "the patch has no changed executable lines"
    exit_code, report, detail = _run_with_coverage(ws, test_files)
    if report is None or exit_code >= 2:
        reason = detail or f"tests crashed (exit {exit_code})"
        return 0.0, 0, total, exit_code, reason
    covered = 0
    for path, lines in changed.items():
        executed = set(report.get("files", {}).get(path, {}).get("executed_lines", []))
        covered += len(lines & executed)
    fraction = covered / total
    note = "" if exit_code == 0 else f"tests reported failures (exit {exit_code})"
    return fraction, covered, total, exit_code, note


def changed_executable_lines(tree_after: dict[str, str], patch: str, include_tests: bool = False) -> dict[str, set[int]]:
    """Post-image executable line numbers the patch adds or modifies,
    per file, excluding comment and blank lines (and test files unless
    requested)."""
    changed: dict[str, set[int]] = {}
    for path, added in difftools.added_lines_by_file(patch).items():
        if not path.endswith(".py"):
            continue
        if not include_tests and (is_test_path(path) or path == "test_reproduction.py"):
            continue
        content = tree_after.get(path)
        if content is None:
            continue
        universe = executable_lines(content)
        lines = {line_no for line_no, _text in added if line_no in universe}
        if lines:
            changed[path] = lines
    return changed


# ---------------------------------------------------------------------------
# Criteria
# ---------------------------------------------------------------------------


def _run_hidden_suite(ws: Workspace, eval_spec: EvalSpec) -> tuple[bool, dict, str]:
    for path, content in eval_spec.hidden_tests.items():
        ws.write_file(path, content)
    result = ws.run_command(eval_spec.test_command)
    passed, failed, summary = parse_test_output(result.stdout, result.stderr, result.exit_code)
    resolved = result.exit_code == 0 and (failed in (0, None))
    metric = {
        "criterion": "test-suite",
        "passed": passed,
        "failed": failed,
        "exit_code": result.exit_code,
    }
    return resolved, metric, summary


def patch_coverage(
    ws: Workspace,
    gold_patch: str,
    candidate_tests: str,
    strict_fail_then_pass: bool = False,
) -> Verdict:
    """Fraction of the gold patch's changed executable lines executed by
    the candidate tests on the gold-patched program; resolved at 1.0."""
    test_files = _candidate_test_files(candidate_tests)
    if not test_files:
        return Verdict(False, {"criterion": "patch-coverage", "fraction": 0.0}, "the solution adds no test files")
    if strict_fail_then_pass:
        problem = _apply_or_fail(ws, candidate_tests)
        if problem:
            return Verdict(False, {"criterion": "patch-coverage", "fraction": 0.0}, problem)
        pristine_run = ws.run_command(
            f"python -m pytest -q -p no:cacheprovider {' '.join(test_files)}"
        )
        if pristine_run.exit_code == 0:
            return Verdict(
                False,
                {"criterion": "patch-coverage", "fraction": 0.0},
                "strict mode: candidate tests already pass on pristine code",
            )
    try:
        composite = difftools.compose_patches([("gold", gold_patch), ("candidate", candidate_tests)])
    except (DiffConflictError, DiffParseError, HunkApplyError) as exc:
        return Verdict(False, {"criterion": "patch-coverage", "fraction": 0.0}, f"composition failed: {exc}")
    problem = _apply_or_fail(ws, composite)
    if problem:
        return Verdict(False, {"criterion": "patch-coverage", "fraction": 0.0}, problem)
    changed = changed_executable_lines(ws.read_tree(), gold_patch)
    fraction, covered, total, exit_code, note = _coverage_fraction(ws, changed, test_files)
    ws.reset()
    metric = {"criterion": "patch-coverage", "fraction": fraction, "covered": covered, "total": total}
    return Verdict(fraction == 1.0 and total > 0, metric, note)


def method_coverage(ws: Workspace, target: dict, candidate_tests: str) -> Verdict:
    """Fraction of the target method's executable lines executed by the
    candidate tests; resolved at 1.0."""
    test_files = _candidate_test_files(candidate_tests)
    if not test_files:
        return Verdict(False, {"criterion": "method-coverage", "fraction": 0.0}, "the solution adds no test files")
    problem = _apply_or_fail(ws, candidate_tests)
    if problem:
        return Verdict(False, {"criterion": "method-coverage", "fraction": 0.0}, problem)
    index = codeindex.build_index(ws)
    location = codeindex.find_unit(index, target["file"], target["qualified_name"])
    if location is None:
        ws.reset()
        return Verdict(
            False,
            {"criterion": "method-coverage", "fraction": 0.0},
            f"target {target['qualified_name']!r} not found in {target['file']!r}",
        )
    content = ws.read_file(target["file"])
    span_lines = {
        n
        for n in executable_lines(content)
        if location.start_line <= n <= location.end_line
    }
    changed = {target["file"]: span_lines}
    fraction, covered, total, exit_code, note = _coverage_fraction(ws, changed, test_files)
    ws.reset()
    metric = {"criterion": "method-coverage", "fraction": fraction, "covered": covered, "total": total}
    return Verdict(fraction == 1.0 and total > 0, metric, note)


def _feature_verdict(ws: Workspace, eval_spec: EvalSpec, solution: str) -> Verdict:
    """Hidden suite must pass AND the solution's own tests must cover all
    of the solution's added executable (non-test) lines."""
    problem = _apply_or_fail(ws, solution)
    if problem:
        return Verdict(False, {"criterion": "feature", "fraction": 0.0}, problem)
    suite_ok, suite_metric, suite_summary = _run_hidden_suite(ws, eval_spec)
    test_files = _candidate_test_files(solution)
    if not test_files:
        return Verdict(
            False,
            {"criterion": "feature", "suite": suite_metric, "fraction": 0.0},
            "the solution adds no test files",
        )
    # Re-apply without the hidden tests before measuring coverage.
    problem = _apply_or_fail(ws, solution)
    if problem:
        return Verdict(False, {"criterion": "feature", "fraction": 0.0}, problem)
    changed = changed_executable_lines(ws.read_tree(), solution)
    fraction, covered, total, exit_code, note = _coverage_fraction(ws, changed, test_files)
    ws.reset()
    resolved = suite_ok and fraction == 1.0 and total > 0
    metric = {
        "criterion": "feature",
        "suite": suite_metric,
        "fraction": fraction,
        "covered": covered,
        "total": total,
    }
    detail = f"hidden suite: {suite_summary}" + (f"; coverage note: {note}" if note else "")
    return Verdict(resolved, metric, detail)


def evaluate(task: TaskManifest, final_solution: str, ws: Workspace | None = None) -> Verdict:
    """Judge a composite solution diff under the task's criterion.

    Opens a dedicated evaluation workspace unless one is supplied.
    """
    own_ws = ws is None
    if own_ws:
        ws = open_workspace(task.workspace_spec())
    try:
        criterion = task.eval.criterion
        if criterion == "test-suite":
            problem = _apply_or_fail(ws, final_solution)
            if problem:
                return Verdict(False, {"criterion": "test-suite"}, problem)
            resolved, metric, summary = _run_hidden_suite(ws, task.eval)
            ws.reset()
            return Verdict(resolved, metric, summary)
        if criterion == "patch-coverage":
            return patch_coverage(
                ws, task.eval.gold_patch, final_solution, task.eval.strict_fail_then_pass
            )
        if criterion == "method-coverage":
            return method_coverage(ws, task.eval.target, final_solution)
        if criterion == "feature":
            return _feature_verdict(ws, task.eval, final_solution)
        raise ManifestError(f"unknown criterion {criterion!r}", field="eval.criterion")
    except (DiffParseError, DiffConflictError) as exc:
        return Verdict(False, {"criterion": task.eval.criterion}, f"solution unusable: {exc}")
    finally:
        if own_ws:
            ws.close()


def make_partial_fix_task(base: TaskManifest, failed_patch: str) -> TaskManifest:
    """Enrich a repair task with a previously failed but promising patch."""
    if base.task_type != "program-repair":
        raise ManifestError("partial-fix tasks derive from program-repair tasks", field="task_type")
    with open_workspace(base.workspace_spec()) as ws:
        report = ws.apply_diffs(failed_patch)
        if not report.applied:
            raise ManifestError("the partial patch does not apply to the base workspace", field="extras.partial_patch")
        ws.reset()
    description = (
        base.description
        + "\n\nA previous attempt produced this promising but incomplete patch:\n"
        + "```diff\n"
        + failed_patch
        + ("" if failed_patch.endswith("\n") else "\n")
        + "```"
    )
    return TaskManifest(
        id=f"{base.id}-partial",
        task_type="partial-fix",
        description=description,
        workspace=dict(base.workspace),
        eval=base.eval,
        extras={**base.extras, "partial_patch": failed_patch},
        base_dir=base.base_dir,
    )


def pass_at_k(results: dict[str, list[bool]] | list[list[bool]], k: int) -> float:
    """Fraction of tasks with at least one success among the first k runs."""
    if isinstance(results, dict):
        outcome_lists = list(results.values())
    else:
        outcome_lists = list(results)
    if not outcome_lists:
        return 0.0
    if k < 1:
        raise ValueError("k must be >= 1")
    for outcomes in outcome_lists:
        if len(outcomes) < k:
            raise ValueError(f"every task needs at least {k} runs")
    solved = sum(1 for outcomes in outcome_lists if any(outcomes[:k]))
    return solved / len(outcome_lists)


def self_check(task: TaskManifest) -> list[str]:
    """Harness sanity for repair-style fixtures: the gold patch resolves
    and the empty diff does not."""
    problems: list[str] = []
    if task.eval.criterion != "test-suite":
        return problems
    if task.eval.gold_patch:
        gold = evaluate(task, task.eval.gold_patch)
        if not gold.resolved:
            problems.append(f"{task.id}: gold patch does not resolve ({gold.detail})")
    empty = evaluate(task, "")
    if empty.resolved:
        problems.append(f"{task.id}: empty solution resolves (criterion is vacuous)")
    return problems

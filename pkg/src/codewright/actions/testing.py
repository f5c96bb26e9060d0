"""Reproduction and test-execution actions."""

from __future__ import annotations

import ast
import re

from .. import difftools
from ..errors import DiffConflictError, UnknownDiffError
from ..knowledge import infer_test_command
from ..llm import ChatMessage, chat, extract_fenced_block
from ..state import ExecRecord
from ..workspace import KILL_EXIT_STATUS
from .base import (
    REPRODUCER_PATH,
    REPRODUCTION_ATTEMPT_CAP,
    ActionContext,
    ActionOutput,
    detect_framework,
)

_PYTEST_COUNT_RE = re.compile(r"(\d+) (passed|failed|error)")
_PYTEST_FAILED_RE = re.compile(r"^(?:FAILED|ERROR) (\S+)", re.MULTILINE)
_UNITTEST_RAN_RE = re.compile(r"^Ran (\d+) tests?", re.MULTILINE)
_UNITTEST_BAD_RE = re.compile(r"FAILED \((?:failures=(\d+))?(?:, )?(?:errors=(\d+))?\)")


def parse_test_output(stdout: str, stderr: str, exit_code: int) -> tuple[int | None, int | None, str]:
    """Pass/fail counts plus a canonical timing-free failure summary.

    Recognizes the pytest and unittest families; anything else falls back
    to exit-code semantics.
    """
    text = stdout + "\n" + stderr
    passed = failed = None
    counts: dict[str, int] = {}
    for number, word in _PYTEST_COUNT_RE.findall(text):
        counts[word] = counts.get(word, 0) + int(number)
    if counts:
        passed = counts.get("passed", 0)
        failed = counts.get("failed", 0) + counts.get("error", 0)
    else:
        ran = _UNITTEST_RAN_RE.search(text)
        if ran:
            total = int(ran.group(1))
            bad = _UNITTEST_BAD_RE.search(text)
            failures = sum(int(g) for g in bad.groups() if g) if bad else 0
            failed = failures
            passed = total - failures
    failing = _PYTEST_FAILED_RE.findall(text)[:5]
    if passed is None and failed is None:
        summary = "ok" if exit_code == 0 else f"exit={exit_code}"
    else:
        summary = f"passed={passed} failed={failed}"
    if failing:
        summary += "; failing: " + ", ".join(failing)
    return passed, failed, summary


def _last_error_line(stdout: str, stderr: str) -> str:
    for stream in (stderr, stdout):
        lines = [ln for ln in stream.splitlines() if ln.strip()]
        if lines:
            return lines[-1][:200]
    return ""


def reproduction(ctx: ActionContext, instruction: str) -> ActionOutput:
    """Draft a standalone reproduction test, run it on pristine code, and
    record both the test diff and its output."""
    prompt = (
        "Write a standalone Python reproduction test for the issue below. "
        f"It will be saved as {REPRODUCER_PATH} at the project root and "
        f"executed with `python {REPRODUCER_PATH}`.\n"
        "It must exit nonzero (assertion or exception) while the issue is "
        "present, and exit 0 once the issue is fixed.\n\n"
        f"Task:\n{ctx.task_description}\n\nInstruction:\n{instruction}\n\n"
        "Reply with one fenced code block containing the complete file."
    )
    messages = [ChatMessage("user", prompt)]
    last_transcript = ""
    runnable = None  # (content, result)
    for _attempt in range(REPRODUCTION_ATTEMPT_CAP):
        text, _ = chat(ctx.backend, messages, ctx.params, ctx.ledger, "Reproduction")
        last_transcript = text
        block = extract_fenced_block(text) or text
        content = block if block.endswith("\n") else block + "\n"
        try:
            ast.parse(content)
        except SyntaxError as exc:
            messages.append(ChatMessage("assistant", text))
            messages.append(
                ChatMessage(
                    "user",
                    f"That draft does not parse (SyntaxError: {exc.msg} at line {exc.lineno}). "
                    "Reply with a corrected complete file in one fenced block.",
                )
            )
            continue
        ctx.ws.reset()
        ctx.ws.write_file(REPRODUCER_PATH, content)
        result = ctx.ws.run_command(f"python {REPRODUCER_PATH}")
        ctx.ws.reset()
        runnable = (content, result)
        if result.exit_code != 0:
            break
        messages.append(ChatMessage("assistant", text))
        messages.append(
            ChatMessage(
                "user",
                "That test exits 0 on the unmodified project, so it does not "
                "demonstrate the issue. Refine it (or reply with the same "
                "file if the issue truly does not reproduce).",
            )
        )
    if runnable is None:
        return ActionOutput(
            narrative=(
                "Reproduction failed: no draft parsed after "
                f"{REPRODUCTION_ATTEMPT_CAP} attempts. Last reply:\n{last_transcript[:800]}"
            ),
            success_hint=False,
        )
    content, result = runnable
    diff_text = difftools.diff_contents(None, content, REPRODUCER_PATH)
    diff_id = ctx.state.add_diff(
        "test", diff_text, "Reproduction", summary="standalone reproduction test"
    )
    ctx.state.reproducer = diff_id
    summary = _last_error_line(result.stdout, result.stderr)
    ctx.state.record_execution(
        ExecRecord(
            diff_selection=[diff_id],
            test_selection=["reproducer"],
            command=f"python {REPRODUCER_PATH}",
            exit_status=result.exit_code,
            failure_summary=summary,
            wall_time=result.duration,
        )
    )
    if result.exit_code != 0:
        narrative = (
            f"Reproduction stored {diff_id}: the test fails on pristine code "
            f"(exit {result.exit_code}), demonstrating the issue. Last output line: {summary}"
        )
    else:
        narrative = (
            f"Reproduction stored {diff_id}, but the test passes on pristine "
            "code — the issue did not reproduce."
        )
    return ActionOutput(narrative=narrative, artifacts=[diff_id], success_hint=result.exit_code != 0)


def execute_tests(ctx: ActionContext, tests: list[str], diffs: list[str]) -> ActionOutput:
    """Compose the diff selection, apply it, run the selected tests with the
    inferred project test command, and record the outcome."""
    selection = list(diffs)
    run_reproducer = "reproducer" in tests
    test_files = [t for t in tests if t != "reproducer"]
    if run_reproducer:
        if ctx.state.reproducer is None:
            return ActionOutput(
                narrative="ExecuteTests: no reproduction test exists yet.",
                success_hint=False,
            )
        if ctx.state.reproducer not in selection:
            selection.append(ctx.state.reproducer)
    try:
        composite = ctx.state.compose_diffs(selection)
    except UnknownDiffError as exc:
        return ActionOutput(narrative=f"ExecuteTests: {exc}", success_hint=False)
    except DiffConflictError as exc:
        return ActionOutput(narrative=f"ExecuteTests: selected diffs conflict: {exc}", success_hint=False)
    if ctx.test_command is None:
        # Inference touches the pristine tree, so it happens before apply.
        ctx.test_command = infer_test_command(
            ctx.docstore,
            ctx.backend,
            description=ctx.task_description[:400],
            framework_hint=detect_framework(ctx),
            params=ctx.params,
            ledger=ctx.ledger,
        )
    report = ctx.ws.apply_diffs(composite)
    if not report.applied:
        ctx.ws.reset()
        failed = "; ".join(f"{fh.file} {fh.hunk_header}" for fh in report.failed_hunks)
        return ActionOutput(
            narrative=f"ExecuteTests: diff selection failed to apply ({failed}).",
            success_hint=False,
        )
    outcomes: list[str] = []
    exit_status = 0
    passed = failed_count = None
    wall = 0.0
    timed_out = False
    command_used = ""
    if test_files:
        command = ctx.test_command.render(test_files)
        command_used = command
        result = ctx.ws.run_command(command)
        wall += result.duration
        timed_out = timed_out or result.timed_out
        p, f, summary = parse_test_output(result.stdout, result.stderr, result.exit_code)
        passed, failed_count = p, f
        exit_status = max(exit_status, result.exit_code, key=abs)
        outcomes.append(
            f"suite[{', '.join(test_files)}]: {summary}" + (" (timed out)" if result.timed_out else "")
        )
    if run_reproducer:
        command = f"python {REPRODUCER_PATH}"
        command_used = command_used or command
        result = ctx.ws.run_command(command)
        wall += result.duration
        timed_out = timed_out or result.timed_out
        exit_status = max(exit_status, result.exit_code, key=abs)
        line = _last_error_line(result.stdout, result.stderr)
        verdict = "passes" if result.exit_code == 0 else f"fails (exit {result.exit_code})"
        outcomes.append(f"reproducer: {verdict}" + (f" | {line}" if line and result.exit_code else ""))
    ctx.ws.reset()
    summary_text = "; ".join(outcomes) if outcomes else "nothing selected"
    if timed_out:
        summary_text += "; timed out"
        exit_status = KILL_EXIT_STATUS
    ctx.state.record_execution(
        ExecRecord(
            diff_selection=selection,
            test_selection=tests,
            command=command_used or "(none)",
            exit_status=exit_status,
            failure_summary=summary_text,
            wall_time=wall,
            passed=passed,
            failed=failed_count,
        )
    )
    version = "+".join(selection) if selection else "pristine"
    return ActionOutput(
        narrative=f"ExecuteTests on {version}: {summary_text}",
        success_hint=exit_status == 0,
    )

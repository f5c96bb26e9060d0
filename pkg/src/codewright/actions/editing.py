"""Code-editing and patch-review actions."""

from __future__ import annotations

import ast

from .. import codeindex, difftools
from ..errors import DiffConflictError, EngineError, UnknownDiffError
from ..llm import ChatMessage, FieldSpec, chat, extract_fenced_block, select_structured
from .base import (
    EDIT_ATTEMPT_CAP,
    REPRODUCER_PATH,
    REVIEW_ROUND_CAP,
    ActionContext,
    ActionOutput,
)

_VERDICTS = ("approve", "revise-patch", "revise-test")
_VERDICT_SCHEMA = {
    "verdict": FieldSpec("enum", choices=_VERDICTS),
    "instruction": FieldSpec("string", required=False, default=""),
}


def _numbered(content: str, start: int, end: int) -> str:
    lines = content.splitlines()
    return "\n".join(f"{n:5d} | {lines[n - 1]}" for n in range(start, min(end, len(lines)) + 1))


def propose_file_edit(
    ctx: ActionContext,
    goal: str,
    file: str,
    start: int,
    end: int,
    content: str,
    label: str,
) -> tuple[str | None, str]:
    """Sub-agent loop replacing lines [start, end] of `content`.

    Returns (new_content, diagnostics); new_content is None when every
    attempt was syntactically invalid.
    """
    lines = content.splitlines()
    end = min(end, len(lines))
    margin_lo = max(1, start - 5)
    margin_hi = min(len(lines), end + 5)
    prompt = (
        f"Edit {file} to achieve this behavior change:\n{goal}\n\n"
        f"Task context:\n{ctx.task_description}\n\n"
        f"Current content around the target (lines {margin_lo}-{margin_hi}):\n"
        f"{_numbered(content, margin_lo, margin_hi)}\n\n"
        f"Reply with one fenced code block containing the full replacement "
        f"for lines {start}-{end} (and nothing else). Keep indentation "
        "consistent with the file."
    )
    messages = [ChatMessage("user", prompt)]
    diagnostics = ""
    for _attempt in range(EDIT_ATTEMPT_CAP):
        text, _ = chat(ctx.backend, messages, ctx.params, ctx.ledger, label)
        block = extract_fenced_block(text)
        if block is None:
            diagnostics = "reply contained no fenced code block"
            messages.append(ChatMessage("assistant", text))
            messages.append(
                ChatMessage("user", "Reply again with exactly one fenced code block.")
            )
            continue
        replacement = block.splitlines()
        candidate_lines = lines[: start - 1] + replacement + lines[end:]
        candidate = "\n".join(candidate_lines) + ("\n" if candidate_lines else "")
        if file.endswith(".py"):
            try:
                ast.parse(candidate)
            except SyntaxError as exc:
                diagnostics = f"SyntaxError: {exc.msg} at line {exc.lineno}"
                messages.append(ChatMessage("assistant", text))
                messages.append(
                    ChatMessage(
                        "user",
                        f"That replacement breaks the file ({diagnostics}). "
                        f"Reply with a corrected replacement for lines {start}-{end}.",
                    )
                )
                continue
        return candidate, ""
    return None, diagnostics


def _new_file_edit(ctx: ActionContext, goal: str, file: str, label: str) -> tuple[str | None, str]:
    """Sub-agent loop drafting a brand-new file."""
    prompt = (
        f"Create the new file {file} to achieve:\n{goal}\n\n"
        f"Task context:\n{ctx.task_description}\n\n"
        "Reply with one fenced code block containing the complete file."
    )
    messages = [ChatMessage("user", prompt)]
    diagnostics = ""
    for _attempt in range(EDIT_ATTEMPT_CAP):
        text, _ = chat(ctx.backend, messages, ctx.params, ctx.ledger, label)
        block = extract_fenced_block(text)
        if block is None:
            diagnostics = "reply contained no fenced code block"
            messages.append(ChatMessage("assistant", text))
            messages.append(ChatMessage("user", "Reply again with exactly one fenced code block."))
            continue
        content = block if block.endswith("\n") else block + "\n"
        if file.endswith(".py"):
            try:
                ast.parse(content)
            except SyntaxError as exc:
                diagnostics = f"SyntaxError: {exc.msg} at line {exc.lineno}"
                messages.append(ChatMessage("assistant", text))
                messages.append(
                    ChatMessage("user", f"That file does not parse ({diagnostics}). Reply with a corrected file.")
                )
                continue
        return content, ""
    return None, diagnostics


def _diff_kind(file: str, content: str) -> str:
    if file == REPRODUCER_PATH or codeindex.is_test_path(file, content):
        return "test"
    return "code"


def edit_code(
    ctx: ActionContext,
    goal: str,
    file: str,
    qualified_name: str,
    base_diffs: list[str],
) -> ActionOutput:
    """Apply base diffs, edit the target location toward the goal, and store
    the incremental diff with the base diffs as parents."""
    try:
        composite = ctx.state.compose_diffs(base_diffs)
    except (UnknownDiffError, DiffConflictError) as exc:
        return ActionOutput(narrative=f"EditCode: base diffs unusable: {exc}", success_hint=False)
    report = ctx.ws.apply_diffs(composite)
    if not report.applied:
        ctx.ws.reset()
        return ActionOutput(narrative="EditCode: base diffs failed to apply.", success_hint=False)
    tree = ctx.ws.read_tree()
    if file not in tree:
        new_content, diagnostics = _new_file_edit(ctx, goal, file, "EditCode")
        if new_content is None:
            ctx.ws.reset()
            return ActionOutput(
                narrative=f"EditCode: no usable draft for new file {file} ({diagnostics}).",
                success_hint=False,
            )
        diff_text = difftools.diff_contents(None, new_content, file)
        kind = _diff_kind(file, new_content)
    else:
        content = tree[file]
        index = ctx.fresh_index()
        location = None
        if qualified_name:
            location = codeindex.find_unit(index, file, qualified_name)
            if location is None:
                ctx.ws.reset()
                return ActionOutput(
                    narrative=f"EditCode: {qualified_name!r} not found in {file}.",
                    success_hint=False,
                )
            start, end = location.start_line, location.end_line
        else:
            start, end = 1, len(content.splitlines())
        new_content, diagnostics = propose_file_edit(ctx, goal, file, start, end, content, "EditCode")
        if new_content is None:
            ctx.ws.reset()
            return ActionOutput(
                narrative=f"EditCode: every attempt was invalid ({diagnostics}).",
                success_hint=False,
            )
        diff_text = difftools.diff_contents(content, new_content, file)
        kind = _diff_kind(file, new_content)
    ctx.ws.reset()
    if not diff_text:
        return ActionOutput(narrative="EditCode: the edit produced no change.", success_hint=False)
    diff_id = ctx.state.add_diff(kind, diff_text, "EditCode", parents=base_diffs, summary=goal[:100])
    base_note = f" on top of {'+'.join(base_diffs)}" if base_diffs else ""
    return ActionOutput(
        narrative=f"EditCode stored {diff_id} ({kind}) for {file}{base_note}: {goal[:120]}",
        artifacts=[diff_id],
        success_hint=True,
    )


def review_patch(ctx: ActionContext, code_diff: str, reproducer: str) -> ActionOutput:
    """Run the reproduction test with and without the candidate patch, take
    a verdict, and refine the patch when revision is requested."""
    repro_id = reproducer or ctx.state.reproducer
    if repro_id is None:
        return ActionOutput(narrative="ReviewPatch: no reproduction test exists.", success_hint=False)
    try:
        repro = ctx.state.get_diff(repro_id)
        candidate = ctx.state.get_diff(code_diff)
    except UnknownDiffError as exc:
        return ActionOutput(narrative=f"ReviewPatch: {exc}", success_hint=False)
    if repro.kind != "test":
        return ActionOutput(
            narrative=f"ReviewPatch: {repro_id} is not a test diff.", success_hint=False
        )

    def run_reproducer(ids: list[str]) -> tuple[int, str]:
        composite = ctx.state.compose_diffs(ids)
        report = ctx.ws.apply_diffs(composite)
        if not report.applied:
            ctx.ws.reset()
            raise EngineError(f"diff selection {ids} failed to apply during review")
        result = ctx.ws.run_command(f"python {REPRODUCER_PATH}")
        ctx.ws.reset()
        lines = [ln for ln in (result.stderr + "\n" + result.stdout).splitlines() if ln.strip()]
        tail = lines[-1][:200] if lines else ""
        return result.exit_code, tail

    repro_chain = ctx.state.parent_chain(repro_id)
    try:
        pristine_exit, pristine_tail = run_reproducer(repro_chain)
    except EngineError as exc:
        return ActionOutput(narrative=f"ReviewPatch: {exc}", success_hint=False)

    current = code_diff
    new_ids: list[str] = []
    verdicts: list[str] = []
    patched_exit, patched_tail = 0, ""
    for round_no in range(REVIEW_ROUND_CAP):
        chain = ctx.state.parent_chain(current)
        selection = chain + [d for d in repro_chain if d not in chain]
        try:
            patched_exit, patched_tail = run_reproducer(selection)
        except EngineError as exc:
            return ActionOutput(
                narrative=f"ReviewPatch: {exc}",
                artifacts=new_ids,
                success_hint=False,
            )
        diff_text = ctx.state.compose_diffs(chain)
        prompt = (
            "Review this candidate patch against the reproduction test.\n\n"
            f"Task:\n{ctx.task_description}\n\n"
            f"Candidate patch ({current}):\n```diff\n{diff_text}```\n\n"
            f"Reproduction test on pristine code: exit {pristine_exit}"
            + (f" ({pristine_tail})" if pristine_tail else "")
            + f"\nReproduction test on patched code: exit {patched_exit}"
            + (f" ({patched_tail})" if patched_tail else "")
            + "\n\nA correct patch makes the reproduction test pass (exit 0); "
            "a reproduction test that already passes on pristine code is "
            "itself suspect.\n"
            'Reply with a fenced json block: {"verdict": "approve" | '
            '"revise-patch" | "revise-test", "instruction": "..."}'
        )
        decision = select_structured(
            ctx.backend,
            [ChatMessage("user", prompt)],
            _VERDICT_SCHEMA,
            ctx.params,
            ctx.ledger,
            label="ReviewPatch",
        )
        verdict = decision["verdict"]
        verdicts.append(verdict)
        if verdict == "approve":
            break
        if verdict == "revise-test":
            break
        if round_no == REVIEW_ROUND_CAP - 1:
            break
        instruction = decision.get("instruction") or "Revise the patch so the reproduction test passes."
        refined = _refine_patch(ctx, current, instruction)
        if refined is None:
            verdicts.append("(refinement failed)")
            break
        new_ids.append(refined)
        current = refined

    summary = " → ".join(verdicts)
    final = verdicts[-1] if verdicts else "none"
    narrative = (
        f"ReviewPatch on {code_diff}: verdicts [{summary}]; reproduction "
        f"test exits {pristine_exit} on pristine and {patched_exit} on patched code."
    )
    if new_ids:
        narrative += f" Refined patch stored as {new_ids[-1]}."
    if final == "revise-test":
        narrative += " The reproduction test itself needs rework; run Reproduction again."
    return ActionOutput(
        narrative=narrative,
        artifacts=new_ids,
        success_hint=final == "approve",
    )


def _refine_patch(ctx: ActionContext, current: str, instruction: str) -> str | None:
    """One edit-style refinement of the candidate patch; returns the new id."""
    chain = ctx.state.parent_chain(current)
    composite = ctx.state.compose_diffs(chain)
    report = ctx.ws.apply_diffs(composite)
    if not report.applied:
        ctx.ws.reset()
        return None
    try:
        file_diffs = difftools.parse_patch(ctx.state.get_diff(current).text)
    except Exception:
        ctx.ws.reset()
        return None
    target = next((fd for fd in file_diffs if not fd.is_deleted_file), None)
    if target is None or not target.hunks:
        ctx.ws.reset()
        return None
    tree = ctx.ws.read_tree()
    content = tree.get(target.path)
    if content is None:
        ctx.ws.reset()
        return None
    hunk = target.hunks[0]
    total = len(content.splitlines())
    start = max(1, hunk.new_start - 3)
    end = min(total, hunk.new_start + max(hunk.new_len, 1) + 2)
    new_content, _diagnostics = propose_file_edit(
        ctx, instruction, target.path, start, end, content, "ReviewPatch"
    )
    ctx.ws.reset()
    if new_content is None or new_content == content:
        return None
    diff_text = difftools.diff_contents(content, new_content, target.path)
    return ctx.state.add_diff(
        "code", diff_text, "ReviewPatch", parents=[current], summary=instruction[:100]
    )

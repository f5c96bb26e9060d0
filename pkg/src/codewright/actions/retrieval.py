"""Retrieval actions: search-tool sub-agents that populate locations."""

from __future__ import annotations

from .. import codeindex
from ..llm import ChatMessage, FieldSpec, select_structured
from ..state import CodeLocation
from .base import RETRIEVAL_TOOL_CALL_CAP, ActionContext, ActionOutput

_TOOLS = ("search_class", "search_func", "search_method_in_class", "search_snippet", "finish")

_TOOL_SCHEMA = {
    "tool": FieldSpec("enum", choices=_TOOLS),
    "arguments": FieldSpec("object", required=False, default={}),
}

_PROTOCOL = (
    "You retrieve {what} for the task below by calling search tools, one "
    "per reply.\n"
    "Tools:\n"
    "- search_class(name)\n"
    "- search_func(name)\n"
    "- search_method_in_class(class_name, method_name)\n"
    "- search_snippet(literal)\n"
    "- finish(select): select is a list of result indices to keep "
    "(or \"all\").\n"
    'Reply with one fenced ```json block: {{"tool": ..., "arguments": {{...}}}}.'
)


def _run_tool(index, tool: str, arguments: dict, test_files: list[str] | None):
    """Execute one search tool; returns (locations, note)."""
    note = ""
    if tool == "search_class":
        results = codeindex.search_class(index, str(arguments.get("name", "")))
    elif tool == "search_func":
        results = codeindex.search_func(index, str(arguments.get("name", "")))
    elif tool == "search_method_in_class":
        results = codeindex.search_method_in_class(
            index, str(arguments.get("class_name", "")), str(arguments.get("method_name", ""))
        )
        if not results:
            note = "no syntactic match (inherited methods are not resolved)"
    else:
        literal = str(arguments.get("literal", ""))
        if not literal:
            return [], "search_snippet needs a nonempty literal"
        results, more = codeindex.search_snippet(index, literal)
        if more:
            note = "more results exist; narrow the literal"
    if test_files is not None:
        results = [loc for loc in results if loc.file in test_files]
    return results, note


def _format_results(found: list[CodeLocation]) -> str:
    if not found:
        return "(no results gathered yet)"
    rows = []
    for i, loc in enumerate(found):
        rows.append(f"  [{i}] {loc.span_label()} {loc.unit_kind} {loc.qualified_name}")
    return "\n".join(rows)


def _retrieval_loop(ctx: ActionContext, instruction: str, scope_tests: bool) -> tuple[list[CodeLocation], int]:
    """Shared sub-agent loop; returns (selected locations, tool calls used)."""
    index = ctx.pristine_index()
    test_files = codeindex.classify_test_files(index) if scope_tests else None
    what = "test code locations" if scope_tests else "program code locations"
    label = "TestRetrieval" if scope_tests else "CodeRetrieval"
    header = _PROTOCOL.format(what=what) + f"\n\nTask:\n{ctx.task_description}\n\nInstruction:\n{instruction}"
    if scope_tests and ctx.state.code_locations:
        known = "\n".join(f"  - {l.span_label()} {l.qualified_name}" for l in ctx.state.code_locations)
        header += f"\n\nKnown code locations (bias your queries):\n{known}"
    messages = [ChatMessage("user", header)]
    found: list[CodeLocation] = []
    calls = 0
    while calls < RETRIEVAL_TOOL_CALL_CAP:
        decision = select_structured(
            ctx.backend, messages, _TOOL_SCHEMA, ctx.params, ctx.ledger, label=label
        )
        tool = decision["tool"]
        arguments = decision.get("arguments") or {}
        if tool == "finish":
            select = arguments.get("select", "all")
            if select == "all" or select is None:
                return found, calls
            picked = []
            for idx in select if isinstance(select, list) else []:
                if isinstance(idx, int) and 0 <= idx < len(found):
                    picked.append(found[idx])
            return picked, calls
        calls += 1
        results, note = _run_tool(index, tool, arguments, test_files)
        for loc in results:
            if all(loc.dedup_key() != f.dedup_key() for f in found):
                found.append(loc)
        reply = f"{tool} returned {len(results)} result(s)."
        if note:
            reply += f" Note: {note}."
        reply += f"\nAll gathered results:\n{_format_results(found)}"
        reply += '\nCall another tool or finish with {"tool": "finish", "arguments": {"select": [...]}}.'
        messages.append(ChatMessage("assistant", f'```json\n{{"tool": "{tool}"}}\n```'))
        messages.append(ChatMessage("user", reply))
    return found, calls


def code_retrieval(ctx: ActionContext, instruction: str) -> ActionOutput:
    """Search the codebase and merge chosen locations into code locations."""
    selected, calls = _retrieval_loop(ctx, instruction, scope_tests=False)
    added = ctx.state.merge_locations(selected, "code")
    if not selected:
        narrative = f"CodeRetrieval found no matches after {calls} tool call(s); code locations unchanged."
    else:
        names = ", ".join(loc.qualified_name for loc in selected[:8])
        narrative = (
            f"CodeRetrieval selected {len(selected)} location(s) ({names}) "
            f"using {calls} tool call(s); {added} new."
        )
    return ActionOutput(narrative=narrative, success_hint=True)


def test_retrieval(ctx: ActionContext, instruction: str) -> ActionOutput:
    """Search classified test files and merge into test locations."""
    index = ctx.pristine_index()
    if not codeindex.classify_test_files(index):
        return ActionOutput(
            narrative="TestRetrieval: the project has no classified test files.",
            success_hint=True,
        )
    selected, calls = _retrieval_loop(ctx, instruction, scope_tests=True)
    test_locs = []
    for loc in selected:
        content = index._contents.get(loc.file, "")
        hint = "pytest" if "pytest" in content else ("unittest" if "unittest" in content else None)
        test_locs.append(codeindex.as_test_location(loc, hint))
    added = ctx.state.merge_locations(test_locs, "test")
    if not selected:
        narrative = f"TestRetrieval found no matches after {calls} tool call(s); test locations unchanged."
    else:
        names = ", ".join(loc.qualified_name for loc in selected[:8])
        narrative = (
            f"TestRetrieval selected {len(selected)} test location(s) ({names}) "
            f"using {calls} tool call(s); {added} new."
        )
    return ActionOutput(narrative=narrative, success_hint=True)

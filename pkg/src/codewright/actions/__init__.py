"""The action set: encapsulated sub-agents the orchestrator composes."""

from __future__ import annotations

from ..errors import UnknownDiffError
from .base import (
    ACTION_NAMES,
    CONTRACTS,
    REPRODUCER_PATH,
    ActionContext,
    ActionContract,
    ActionOutput,
    action_catalog,
    run_action,
    validate_arguments,
)
from .editing import edit_code, review_patch
from .retrieval import code_retrieval, test_retrieval
from .testing import execute_tests, reproduction


def terminate(ctx: ActionContext, solution: str) -> ActionOutput:
    """Signal the end of the run; validates the chosen diff id."""
    if solution != "empty":
        ctx.state.get_diff(solution)  # raises UnknownDiffError
    return ActionOutput(narrative=f"Terminate: selected {solution}.", success_hint=True)


def resolve_final_solution(state, chosen: str) -> str:
    """Composite diff text for a chosen id (with its parent chain), or ''."""
    if chosen == "empty":
        return ""
    return state.compose_diffs(state.parent_chain(chosen))


IMPLEMENTATIONS = {
    "CodeRetrieval": lambda ctx, instruction: code_retrieval(ctx, instruction),
    "TestRetrieval": lambda ctx, instruction: test_retrieval(ctx, instruction),
    "Reproduction": lambda ctx, instruction: reproduction(ctx, instruction),
    "ExecuteTests": lambda ctx, tests, diffs: execute_tests(ctx, tests, diffs),
    "EditCode": lambda ctx, goal, file, qualified_name, base_diffs: edit_code(
        ctx, goal, file, qualified_name, base_diffs
    ),
    "ReviewPatch": lambda ctx, code_diff, reproducer: review_patch(ctx, code_diff, reproducer),
    "Terminate": lambda ctx, solution: terminate(ctx, solution),
}

__all__ = [
    "ACTION_NAMES",
    "CONTRACTS",
    "IMPLEMENTATIONS",
    "REPRODUCER_PATH",
    "ActionContext",
    "ActionContract",
    "ActionOutput",
    "action_catalog",
    "code_retrieval",
    "edit_code",
    "execute_tests",
    "reproduction",
    "resolve_final_solution",
    "review_patch",
    "run_action",
    "terminate",
    "test_retrieval",
    "validate_arguments",
]

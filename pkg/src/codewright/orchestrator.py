"""The orchestration loop: select an action, dispatch it, observe, repeat.

At each round the decision backend sees the task description, the rendered
task state, and the previous action's output — not the full transcript —
and must name one enabled action with arguments. When the round cap is
reached without Terminate, a final candidate is selected from the diff
store (with a deterministic fallback). A static mode replays a fixed
workflow instead, for ablations.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

from .actions import (
    ACTION_NAMES,
    CONTRACTS,
    ActionContext,
    action_catalog,
    resolve_final_solution,
    run_action,
)
from .errors import (
    BackendError,
    EngineError,
    StructuredDecisionError,
    UnknownDiffError,
    WorkspaceError,
)
from .knowledge import ingest_docs
from .llm import ChatMessage, DecodeParams, FieldSpec, UsageLedger, select_structured
from .state import TaskState, new_task_state, render_state_summary
from .workspace import open_workspace

logger = logging.getLogger(__name__)

MAX_ROUNDS_DEFAULT = 20
NO_PREVIOUS_OUTPUT = "No previous action has been invoked yet."

# Final-solution kind the forced selection prefers, per task type.
SOLUTION_KINDS = {
    "program-repair": "code",
    "code-generation": "code",
    "partial-fix": "code",
    "regression-testing": "test",
    "test-generation": "test",
    "feature-development": None,
}


@dataclass
class StaticWorkflow:
    """A fixed action sequence with a trailing loop segment."""

    name: str
    prelude: list[str]
    loop: list[str]
    break_on: str  # review-approval | tests-pass

    def actions_used(self) -> set[str]:
        return set(self.prelude) | set(self.loop)


STATIC_WORKFLOWS: dict[str, StaticWorkflow] = {
    "repair": StaticWorkflow(
        "repair",
        ["Reproduction", "CodeRetrieval", "EditCode"],
        ["ReviewPatch", "EditCode"],
        "review-approval",
    ),
    "regression": StaticWorkflow(
        "regression",
        ["TestRetrieval", "CodeRetrieval", "EditCode"],
        ["ExecuteTests", "EditCode"],
        "tests-pass",
    ),
    "codegen": StaticWorkflow(
        "codegen",
        ["EditCode", "TestRetrieval", "EditCode"],
        ["ExecuteTests", "EditCode"],
        "tests-pass",
    ),
    "testgen": StaticWorkflow(
        "testgen",
        ["TestRetrieval", "EditCode"],
        ["ExecuteTests", "EditCode"],
        "tests-pass",
    ),
}

# Which static workflow fits which task type (partial fixes reuse repair).
WORKFLOW_FOR_TASK_TYPE = {
    "program-repair": "repair",
    "partial-fix": "repair",
    "regression-testing": "regression",
    "code-generation": "codegen",
    "test-generation": "testgen",
    "feature-development": "codegen",
}


@dataclass
class RunConfig:
    max_rounds: int = MAX_ROUNDS_DEFAULT
    params: DecodeParams = field(default_factory=DecodeParams)
    mode: str = "dynamic"  # dynamic | static:<workflow name>
    enabled_actions: list[str] = field(default_factory=lambda: list(ACTION_NAMES))
    summary_budget: int = 8000

    def __post_init__(self):
        if self.max_rounds < 1:
            raise EngineError("max_rounds must be positive")
        unknown = [a for a in self.enabled_actions if a not in ACTION_NAMES]
        if unknown:
            raise EngineError(f"unknown actions in enabled set: {unknown}")
        if self.mode == "dynamic":
            if "Terminate" not in self.enabled_actions:
                raise EngineError("Terminate must stay enabled in dynamic mode")
        elif self.mode.startswith("static:"):
            name = self.mode.split(":", 1)[1]
            workflow = STATIC_WORKFLOWS.get(name)
            if workflow is None:
                raise EngineError(f"unknown static workflow {name!r}")
            missing = workflow.actions_used() - set(self.enabled_actions)
            if missing:
                raise EngineError(f"static workflow {name!r} references disabled actions: {sorted(missing)}")
        else:
            raise EngineError(f"bad mode {self.mode!r}")


@dataclass
class RunResult:
    task_id: str
    terminal_reason: str  # finish | forced-selection | error
    solution_id: str
    solution_text: str
    header: dict
    steps: list[dict]
    terminal: dict
    ledger: UsageLedger
    error: str | None = None

    def records(self) -> list[dict]:
        return [self.header, *self.steps, self.terminal]


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def select_next_action(
    backend,
    task_description: str,
    state: TaskState,
    last_output: str | None,
    enabled: list[str],
    params: DecodeParams,
    ledger: UsageLedger,
    summary_budget: int = 8000,
) -> tuple[str, dict, str]:
    """One decision round; returns (action, arguments, prompt digest)."""
    catalog = action_catalog(enabled)
    prompt = (
        "You are orchestrating a software-engineering task by invoking "
        "actions, one per round.\n\n"
        f"Task:\n{task_description}\n\n"
        f"Current task state:\n{render_state_summary(state, summary_budget)}\n\n"
        f"Previous action output:\n{last_output or NO_PREVIOUS_OUTPUT}\n\n"
        f"Available actions:\n{catalog}\n\n"
        'Select the next action. Reply with one fenced json block: '
        '{"action": "<name>", "arguments": {...}}'
    )
    schema = {
        "action": FieldSpec("enum", choices=tuple(enabled)),
        "arguments": FieldSpec("object", required=False, default={}),
    }
    decision = select_structured(
        backend, [ChatMessage("user", prompt)], schema, params, ledger, label="MetaAgent"
    )
    return decision["action"], decision.get("arguments") or {}, _digest(prompt)


def select_static_arguments(
    backend,
    action: str,
    task_description: str,
    state: TaskState,
    last_output: str | None,
    params: DecodeParams,
    ledger: UsageLedger,
    summary_budget: int = 8000,
) -> tuple[dict, str]:
    """Arguments for a fixed workflow step (action choice is not free)."""
    contract = CONTRACTS[action]
    prompt = (
        f"You are executing a fixed workflow step: {action}.\n"
        f"{contract.description}\n\n"
        f"Task:\n{task_description}\n\n"
        f"Current task state:\n{render_state_summary(state, summary_budget)}\n\n"
        f"Previous action output:\n{last_output or NO_PREVIOUS_OUTPUT}\n\n"
        'Provide the arguments. Reply with one fenced json block: {"arguments": {...}}'
    )
    schema = {"arguments": FieldSpec("object", required=False, default={})}
    decision = select_structured(
        backend, [ChatMessage("user", prompt)], schema, params, ledger, label="MetaAgent"
    )
    return decision.get("arguments") or {}, _digest(prompt)


def forced_selection(
    backend,
    state: TaskState,
    kind: str | None = None,
    params: DecodeParams | None = None,
    ledger: UsageLedger | None = None,
) -> str:
    """Pick a final diff when the round cap was reached without Terminate.

    The backend sees diff summaries and execution records; when it fails
    to name a stored diff, the deterministic fallback picks the most
    recent diff of the appropriate kind passing the most recorded tests.
    Total: always returns an id or 'empty'.
    """
    if not state.diff_store:
        return "empty"
    if backend is not None:
        listing = []
        for did, diff in state.diff_store.items():
            listing.append(f"- {did} [{diff.kind}] from {diff.origin}: {diff.summary}")
        records = []
        for i, rec in enumerate(state.exec_records, 1):
            records.append(
                f"- #{i} diffs=[{','.join(rec.diff_selection) or 'pristine'}] "
                f"tests=[{','.join(rec.test_selection)}] {rec.outcome_label()}"
            )
        prompt = (
            "The run is out of rounds. Select the best final solution from "
            "the stored diffs.\n\nDiffs:\n"
            + "\n".join(listing)
            + "\n\nExecution records:\n"
            + ("\n".join(records) or "(none)")
            + '\n\nReply with one fenced json block: {"solution": "<diff id>"}'
        )
        try:
            decision = select_structured(
                backend,
                [ChatMessage("user", prompt)],
                {"solution": FieldSpec("string")},
                params or DecodeParams(),
                ledger,
                label="ForcedSelection",
            )
            chosen = decision["solution"]
            if chosen in state.diff_store:
                return chosen
        except BackendError:
            pass
    eligible = [d for d in state.diff_store.values() if kind is None or d.kind == kind]
    if not eligible:
        eligible = list(state.diff_store.values())
    pass_counts: dict[str, int] = {}
    for rec in state.exec_records:
        if rec.exit_status != 0:
            continue
        for did in rec.diff_selection:
            pass_counts[did] = pass_counts.get(did, 0) + 1
    best = None
    best_count = -1
    for diff in eligible:  # store order; later wins ties → most recent
        count = pass_counts.get(diff.id, 0)
        if count >= best_count:
            best, best_count = diff, count
    return best.id if best else "empty"


def _make_context(manifest, backend, ledger: UsageLedger, config: RunConfig) -> ActionContext:
    ws = open_workspace(manifest.workspace_spec())
    ctx = ActionContext(
        ws=ws,
        state=new_task_state(),
        backend=backend,
        ledger=ledger,
        task_description=manifest.description,
        params=config.params,
    )
    ctx.docstore = ingest_docs(ws)
    ctx.pristine_index()
    return ctx


def _step_usage(ledger: UsageLedger, start_index: int) -> dict:
    records = ledger.records[start_index:]
    return {
        "prompt_tokens": sum(r.prompt_tokens for r in records),
        "completion_tokens": sum(r.completion_tokens for r in records),
        "cost": sum(r.cost for r in records if r.cost is not None),
    }


def run_task(manifest, config: RunConfig, backend, ledger: UsageLedger | None = None) -> RunResult:
    """Dynamic mode: loop select → dispatch → record until Terminate or the
    round cap, then force a selection."""
    if config.mode != "dynamic":
        workflow = STATIC_WORKFLOWS[config.mode.split(":", 1)[1]]
        return run_static_workflow(manifest, workflow, config, backend, ledger)
    ledger = ledger if ledger is not None else UsageLedger()
    header = {
        "type": "header",
        "task_id": manifest.id,
        "task_type": manifest.task_type,
        "mode": "dynamic",
        "max_rounds": config.max_rounds,
        "enabled_actions": list(config.enabled_actions),
        "model": getattr(backend, "model", "unknown"),
    }
    steps: list[dict] = []
    kind = SOLUTION_KINDS.get(manifest.task_type)
    try:
        ctx = _make_context(manifest, backend, ledger, config)
    except (WorkspaceError, EngineError) as exc:
        terminal = {"type": "terminal", "reason": "error", "solution_id": None, "detail": str(exc)}
        return RunResult(manifest.id, "error", "empty", "", header, steps, terminal, ledger, str(exc))
    try:
        last_output: str | None = None
        terminal_reason = None
        solution_id = "empty"
        for round_no in range(1, config.max_rounds + 1):
            usage_start = len(ledger.records)
            try:
                action, arguments, digest = select_next_action(
                    backend,
                    manifest.description,
                    ctx.state,
                    last_output,
                    config.enabled_actions,
                    config.params,
                    ledger,
                    config.summary_budget,
                )
            except (StructuredDecisionError, BackendError) as exc:
                terminal_reason = "error"
                terminal_detail = f"action selection failed: {exc}"
                break
            step = {
                "type": "step",
                "round": round_no,
                "action": action,
                "arguments": arguments,
                "prompt_sha256": digest,
            }
            try:
                output = run_action(ctx, action, arguments)
            except UnknownDiffError as exc:
                last_output = f"{action} failed: {exc}. Choose again."
                step.update(
                    narrative=last_output,
                    success_hint=False,
                    state_delta={},
                    usage=_step_usage(ledger, usage_start),
                )
                steps.append(step)
                continue
            except EngineError as exc:
                last_output = f"{action} failed: {exc}"
                step.update(
                    narrative=last_output,
                    success_hint=False,
                    state_delta={},
                    usage=_step_usage(ledger, usage_start),
                )
                steps.append(step)
                continue
            step.update(
                narrative=output.narrative,
                success_hint=output.success_hint,
                state_delta=output.state_delta,
                usage=_step_usage(ledger, usage_start),
            )
            steps.append(step)
            last_output = output.narrative
            if action == "Terminate":
                solution_id = arguments.get("solution", "empty")
                terminal_reason = "finish"
                break
        if terminal_reason is None:
            solution_id = forced_selection(backend, ctx.state, kind, config.params, ledger)
            terminal_reason = "forced-selection"
            terminal_detail = f"round cap {config.max_rounds} reached without Terminate"
        elif terminal_reason == "finish":
            terminal_detail = "Terminate invoked"
        solution_text = resolve_final_solution(ctx.state, solution_id)
        terminal = {
            "type": "terminal",
            "reason": terminal_reason,
            "solution_id": solution_id,
            "detail": terminal_detail,
        }
        return RunResult(
            manifest.id,
            terminal_reason,
            solution_id,
            solution_text,
            header,
            steps,
            terminal,
            ledger,
            terminal_detail if terminal_reason == "error" else None,
        )
    finally:
        ctx.ws.close()


def run_static_workflow(
    manifest,
    workflow: StaticWorkflow,
    config: RunConfig,
    backend,
    ledger: UsageLedger | None = None,
) -> RunResult:
    """Static mode: execute the fixed sequence, looping the trailing segment
    until its break predicate fires or the round cap is reached."""
    ledger = ledger if ledger is not None else UsageLedger()
    header = {
        "type": "header",
        "task_id": manifest.id,
        "task_type": manifest.task_type,
        "mode": f"static:{workflow.name}",
        "max_rounds": config.max_rounds,
        "enabled_actions": list(config.enabled_actions),
        "model": getattr(backend, "model", "unknown"),
    }
    steps: list[dict] = []
    kind = SOLUTION_KINDS.get(manifest.task_type)
    try:
        ctx = _make_context(manifest, backend, ledger, config)
    except (WorkspaceError, EngineError) as exc:
        terminal = {"type": "terminal", "reason": "error", "solution_id": None, "detail": str(exc)}
        return RunResult(manifest.id, "error", "empty", "", header, steps, terminal, ledger, str(exc))

    def plan():
        yield from workflow.prelude
        while True:
            yield from workflow.loop

    try:
        last_output: str | None = None
        terminal_reason = None
        terminal_detail = ""
        broke = False
        round_no = 0
        for action in plan():
            if round_no >= config.max_rounds or broke:
                break
            round_no += 1
            usage_start = len(ledger.records)
            try:
                arguments, digest = select_static_arguments(
                    backend,
                    action,
                    manifest.description,
                    ctx.state,
                    last_output,
                    config.params,
                    ledger,
                    config.summary_budget,
                )
            except (StructuredDecisionError, BackendError) as exc:
                terminal_reason = "error"
                terminal_detail = f"argument selection failed: {exc}"
                break
            step = {
                "type": "step",
                "round": round_no,
                "action": action,
                "arguments": arguments,
                "prompt_sha256": digest,
            }
            try:
                output = run_action(ctx, action, arguments)
            except EngineError as exc:
                last_output = f"{action} failed: {exc}"
                step.update(
                    narrative=last_output,
                    success_hint=False,
                    state_delta={},
                    usage=_step_usage(ledger, usage_start),
                )
                steps.append(step)
                continue
            step.update(
                narrative=output.narrative,
                success_hint=output.success_hint,
                state_delta=output.state_delta,
                usage=_step_usage(ledger, usage_start),
            )
            steps.append(step)
            last_output = output.narrative
            in_loop = round_no > len(workflow.prelude)
            if in_loop and output.success_hint:
                if workflow.break_on == "review-approval" and action == "ReviewPatch":
                    broke = True
                elif workflow.break_on == "tests-pass" and action == "ExecuteTests":
                    broke = True
        if terminal_reason == "error":
            solution_id = "empty"
            solution_text = ""
        else:
            solution_id = forced_selection(backend, ctx.state, kind, config.params, ledger)
            terminal_reason = "finish" if broke else "forced-selection"
            terminal_detail = (
                "static workflow loop break" if broke else f"round cap {config.max_rounds} reached"
            )
            solution_text = resolve_final_solution(ctx.state, solution_id)
        terminal = {
            "type": "terminal",
            "reason": terminal_reason,
            "solution_id": solution_id if terminal_reason != "error" else None,
            "detail": terminal_detail,
        }
        return RunResult(
            manifest.id,
            terminal_reason,
            solution_id,
            solution_text,
            header,
            steps,
            terminal,
            ledger,
            terminal_detail if terminal_reason == "error" else None,
        )
    finally:
        ctx.ws.close()

"""Action contracts, dispatch, and the shared action context.

Every action is an encapsulated sub-workflow with an intent-based input
and a declared task-state read/write set. Dispatch snapshots the state
around each invocation so the confinement of writes is observable, and
verifies the workspace is back at the pristine baseline afterwards.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from ..codeindex import CodeIndex, build_index
from ..errors import EngineError
from ..knowledge import DocStore, TestCommand
from ..llm import DecodeParams, FieldSpec, UsageLedger
from ..state import TaskState, state_delta
from ..workspace import Workspace

logger = logging.getLogger(__name__)

REPRODUCER_PATH = "test_reproduction.py"

ACTION_NAMES = (
    "CodeRetrieval",
    "TestRetrieval",
    "Reproduction",
    "ExecuteTests",
    "EditCode",
    "ReviewPatch",
    "Terminate",
)

# Inner loop caps; the round cap of the orchestrator is separate.
RETRIEVAL_TOOL_CALL_CAP = 15
EDIT_ATTEMPT_CAP = 5
REVIEW_ROUND_CAP = 3
REPRODUCTION_ATTEMPT_CAP = 3


@dataclass
class ActionContract:
    name: str
    description: str
    input_schema: dict[str, FieldSpec]
    reads: frozenset[str]
    writes: frozenset[str]


@dataclass
class ActionOutput:
    """What the orchestrator observes after an action returns."""

    narrative: str
    artifacts: list[str] = field(default_factory=list)
    success_hint: bool = True
    state_delta: dict = field(default_factory=dict)


@dataclass
class ActionContext:
    """Everything an action may touch for one task run."""

    ws: Workspace
    state: TaskState
    backend: object
    ledger: UsageLedger
    task_description: str
    params: DecodeParams = field(default_factory=DecodeParams)
    docstore: DocStore = field(default_factory=DocStore)
    index: CodeIndex | None = None
    test_command: TestCommand | None = None  # cached per run

    def fresh_index(self) -> CodeIndex:
        """Index of the current workspace tree (not necessarily pristine)."""
        return build_index(self.ws)

    def pristine_index(self) -> CodeIndex:
        if self.index is None or self.index.fingerprint != self.ws.baseline_fingerprint:
            self.ws.reset()
            self.index = build_index(self.ws)
        return self.index


CONTRACTS: dict[str, ActionContract] = {
    "CodeRetrieval": ActionContract(
        name="CodeRetrieval",
        description=(
            "Collect program code relevant to the task. Give an instruction "
            "describing what to look for; search tools locate matching code "
            "units and record them as known code locations."
        ),
        input_schema={"instruction": FieldSpec("string")},
        reads=frozenset(),
        writes=frozenset({"code_locations"}),
    ),
    "TestRetrieval": ActionContract(
        name="TestRetrieval",
        description=(
            "Collect test code relevant to the task. Like CodeRetrieval but "
            "restricted to test files; records known test locations."
        ),
        input_schema={"instruction": FieldSpec("string")},
        reads=frozenset({"code_locations"}),
        writes=frozenset({"test_locations"}),
    ),
    "Reproduction": ActionContract(
        name="Reproduction",
        description=(
            "Write a standalone reproduction test at "
            f"{REPRODUCER_PATH} that fails while the reported issue is "
            "present and passes once it is fixed, then execute it on the "
            "pristine project and record the outcome."
        ),
        input_schema={"instruction": FieldSpec("string")},
        reads=frozenset(),
        writes=frozenset({"diff_store", "reproducer", "exec_records"}),
    ),
    "ExecuteTests": ActionContract(
        name="ExecuteTests",
        description=(
            "Execute a subset of the test suite on a chosen project version. "
            "'tests' lists test file paths and/or the word 'reproducer'; "
            "'diffs' lists diff ids applied (in order) before running."
        ),
        input_schema={
            "tests": FieldSpec("string_list", required=False, default=[]),
            "diffs": FieldSpec("string_list", required=False, default=[]),
        },
        reads=frozenset({"test_locations"}),
        writes=frozenset({"exec_records"}),
    ),
    "EditCode": ActionContract(
        name="EditCode",
        description=(
            "Modify the codebase (program or test code). Give the desired "
            "behavior change, the target location (file plus qualified "
            "name), and optionally base diff ids to build on. A missing "
            "file is created outright. Produces a new diff."
        ),
        input_schema={
            "goal": FieldSpec("string"),
            "file": FieldSpec("string"),
            "qualified_name": FieldSpec("string", required=False, default=""),
            "base_diffs": FieldSpec("string_list", required=False, default=[]),
        },
        reads=frozenset({"code_locations", "test_locations"}),
        writes=frozenset({"diff_store"}),
    ),
    "ReviewPatch": ActionContract(
        name="ReviewPatch",
        description=(
            "Review a candidate code diff against the reproduction test: "
            "execute the test on pristine and patched code, judge the "
            "patch, and refine it when revision is needed."
        ),
        input_schema={
            "code_diff": FieldSpec("string"),
            "reproducer": FieldSpec("string", required=False, default=""),
        },
        reads=frozenset({"diff_store", "reproducer"}),
        writes=frozenset({"diff_store"}),
    ),
    "Terminate": ActionContract(
        name="Terminate",
        description=(
            "Finish the run and output a final solution: a diff id from "
            "the store, or the word 'empty' for no solution."
        ),
        input_schema={"solution": FieldSpec("string")},
        reads=frozenset(),
        writes=frozenset(),
    ),
}


def validate_arguments(contract: ActionContract, arguments: dict) -> dict:
    """Fill defaults and type-check arguments against the contract."""
    cleaned: dict = {}
    for name, spec in contract.input_schema.items():
        if name not in arguments or arguments[name] is None:
            if spec.required:
                raise EngineError(f"{contract.name}: missing argument {name!r}")
            cleaned[name] = spec.default
            continue
        problem = spec.validate(arguments[name])
        if problem:
            raise EngineError(f"{contract.name}: argument {name!r}: {problem}")
        cleaned[name] = arguments[name]
    return cleaned


def run_action(ctx: ActionContext, name: str, arguments: dict) -> ActionOutput:
    """Dispatch one action, recording its state delta.

    The workspace must be back at the pristine baseline when the action
    returns; a violation is repaired by reset and flagged in the delta.
    """
    from . import IMPLEMENTATIONS  # late import: registry lives in __init__

    contract = CONTRACTS.get(name)
    if contract is None:
        raise EngineError(f"unknown action {name!r}")
    impl = IMPLEMENTATIONS[name]
    cleaned = validate_arguments(contract, arguments)
    before = ctx.state.field_fingerprint()
    output = impl(ctx, **cleaned)
    after = ctx.state.field_fingerprint()
    output.state_delta = state_delta(before, after)
    if ctx.ws.fingerprint() != ctx.ws.baseline_fingerprint:
        logger.warning("action %s left the workspace dirty; resetting", name)
        ctx.ws.reset()
        output.state_delta["_workspace_dirty"] = True
    missing = [a for a in output.artifacts if a not in ctx.state.diff_store]
    if missing:
        raise EngineError(f"{name} reported artifacts not in the store: {missing}")
    return output


def detect_framework(ctx: ActionContext) -> str | None:
    """Runner family guessed from the classified test files' imports."""
    index = ctx.pristine_index()
    for path in index.test_files:
        content = index._contents.get(path, "")
        if "import pytest" in content or "from pytest" in content:
            return "pytest"
        if "import unittest" in content or "from unittest" in content:
            return "unittest"
    return "pytest" if index.test_files else None


def action_catalog(enabled: list[str]) -> str:
    """Prompt-ready catalog of the enabled actions and their inputs."""
    parts = []
    for name in ACTION_NAMES:
        if name not in enabled:
            continue
        contract = CONTRACTS[name]
        args = []
        for arg, spec in contract.input_schema.items():
            kind = spec.kind if spec.kind != "enum" else "|".join(spec.choices)
            args.append(f"{arg}: {kind}" + ("" if spec.required else "?"))
        parts.append(f"- {name}({', '.join(args)}): {contract.description}")
    return "\n".join(parts)

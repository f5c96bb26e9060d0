"""Run artifact layout: one directory per run, stable files, replayable.

    <out>/<task-id>/run-NNN/
        trajectory.jsonl   line-delimited header/step/terminal records
        solution.diff      final composite solution (may be empty)
        verdict.json       evaluation outcome
        ledger.json        deterministic usage rows and totals
        meta.json          timestamps and wall-clock figures (nondeterministic)

Everything wall-clock flavored lives in meta.json so repeated scripted
runs produce byte-identical trajectories, solutions, and ledgers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .errors import EngineError
from .llm import UsageLedger
from .orchestrator import RunResult
from .trajectory import read_trajectory, write_trajectory


@dataclass
class RunArtifacts:
    task_id: str
    run_dir: Path
    records: list[dict]
    verdict: dict
    ledger_rows: list[dict]
    ledger_totals: dict
    meta: dict

    @property
    def task_type(self) -> str:
        for record in self.records:
            if record.get("type") == "header":
                return record.get("task_type", "unknown")
        return "unknown"

    @property
    def resolved(self) -> bool:
        return bool(self.verdict.get("resolved"))


def next_run_dir(out_dir: str | Path, task_id: str) -> Path:
    base = Path(out_dir) / task_id
    base.mkdir(parents=True, exist_ok=True)
    existing = sorted(p.name for p in base.glob("run-*") if p.is_dir())
    next_no = 1
    if existing:
        next_no = max(int(name.split("-")[1]) for name in existing) + 1
    run_dir = base / f"run-{next_no:03d}"
    run_dir.mkdir()
    return run_dir


def write_run_artifacts(
    run_dir: str | Path,
    result: RunResult,
    verdict: dict | None,
    started_at: datetime,
    finished_at: datetime,
) -> None:
    run_dir = Path(run_dir)
    write_trajectory(run_dir / "trajectory.jsonl", result.records())
    (run_dir / "solution.diff").write_text(result.solution_text)
    if verdict is not None:
        (run_dir / "verdict.json").write_text(json.dumps(verdict, sort_keys=True, indent=2) + "\n")
    ledger: UsageLedger = result.ledger
    totals = ledger.totals()
    totals.pop("wall_time", None)
    ledger_payload = {"records": ledger.to_records(), "totals": totals, "by_label": ledger.by_label()}
    (run_dir / "ledger.json").write_text(json.dumps(ledger_payload, sort_keys=True, indent=2) + "\n")
    meta = {
        "started_at": started_at.astimezone(timezone.utc).isoformat(),
        "finished_at": finished_at.astimezone(timezone.utc).isoformat(),
        "duration": (finished_at - started_at).total_seconds(),
        "call_wall_times": ledger.wall_times(),
        "llm_wall_time": sum(ledger.wall_times()),
    }
    (run_dir / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")


def load_run(run_dir: str | Path) -> RunArtifacts:
    run_dir = Path(run_dir)
    trajectory_path = run_dir / "trajectory.jsonl"
    if not trajectory_path.is_file():
        raise EngineError(f"not a run directory (no trajectory.jsonl): {run_dir}")
    records = read_trajectory(trajectory_path)
    task_id = "unknown"
    for record in records:
        if record.get("type") == "header":
            task_id = record.get("task_id", "unknown")
    verdict = {}
    verdict_path = run_dir / "verdict.json"
    if verdict_path.is_file():
        verdict = json.loads(verdict_path.read_text())
    ledger_rows: list[dict] = []
    ledger_totals: dict = {}
    ledger_path = run_dir / "ledger.json"
    if ledger_path.is_file():
        payload = json.loads(ledger_path.read_text())
        ledger_rows = payload.get("records", [])
        ledger_totals = payload.get("totals", {})
    meta = {}
    meta_path = run_dir / "meta.json"
    if meta_path.is_file():
        meta = json.loads(meta_path.read_text())
    return RunArtifacts(task_id, run_dir, records, verdict, ledger_rows, ledger_totals, meta)


def collect_runs(root: str | Path) -> list[RunArtifacts]:
    """All runs below a results directory, ordered by (task, run number)."""
    root = Path(root)
    if not root.is_dir():
        raise EngineError(f"no such results directory: {root}")
    runs = []
    for trajectory_path in sorted(root.rglob("trajectory.jsonl")):
        runs.append(load_run(trajectory_path.parent))
    return runs

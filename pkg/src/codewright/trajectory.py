"""Trajectory logs: line-delimited step records, reading, and replay.

Each run writes one JSON object per line: a header record, one record per
step, and exactly one terminal record. The files are deterministic for
scripted backends; anything wall-clock flavored lives in the run's
separate metadata file.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import EngineError


def write_trajectory(path: str | Path, records: list[dict]):
    lines = [json.dumps(r, sort_keys=True) for r in records]
    Path(path).write_text("\n".join(lines) + "\n" if lines else "")


def read_trajectory(path: str | Path) -> list[dict]:
    """Parse a trajectory log; a corrupt line fails with its line number."""
    records = []
    text = Path(path).read_text()
    for line_no, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise EngineError(f"corrupt trajectory line {line_no}: {exc.msg}") from exc
    return records


def _format_delta(delta: dict) -> str:
    if not delta:
        return "no state change"
    parts = []
    for key, value in delta.items():
        if key.startswith("_"):
            parts.append(f"{key.lstrip('_')}!")
        elif isinstance(value, list):
            parts.append(f"{key} +[{', '.join(map(str, value))}]")
        elif isinstance(value, int):
            parts.append(f"{key} {value:+d}")
        else:
            parts.append(f"{key} → {value}")
    return ", ".join(parts)


def render_transcript(records: list[dict]) -> str:
    """Human-readable step-by-step rendering of a trajectory."""
    out: list[str] = []
    for record in records:
        kind = record.get("type")
        if kind == "header":
            out.append(f"Run {record.get('task_id')} [{record.get('mode')}] "
                       f"max_rounds={record.get('max_rounds')} model={record.get('model')}")
            out.append(f"Enabled actions: {', '.join(record.get('enabled_actions', []))}")
            out.append("")
        elif kind == "step":
            usage = record.get("usage", {})
            out.append(
                f"[{record.get('round')}] {record.get('action')} "
                f"args={json.dumps(record.get('arguments', {}), sort_keys=True)}"
            )
            out.append(f"    state: {_format_delta(record.get('state_delta', {}))}")
            cost = usage.get("cost")
            out.append(
                f"    tokens: {usage.get('prompt_tokens', 0)}→{usage.get('completion_tokens', 0)}"
                + (f", cost ${cost:.4f}" if cost else "")
            )
            narrative = record.get("narrative", "")
            for line in narrative.splitlines()[:6]:
                out.append(f"    | {line}")
            out.append("")
        elif kind == "terminal":
            out.append(
                f"Terminal: {record.get('reason')} solution={record.get('solution_id')} "
                f"({record.get('detail', '')})"
            )
    if not records:
        out.append("(empty trajectory)")
    return "\n".join(out) + "\n"


def step_records(records: list[dict]) -> list[dict]:
    return [r for r in records if r.get("type") == "step"]


def terminal_record(records: list[dict]) -> dict | None:
    for record in records:
        if record.get("type") == "terminal":
            return record
    return None

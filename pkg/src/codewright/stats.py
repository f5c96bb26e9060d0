"""Fleet statistics over run artifacts: step-position action histograms,
per-action cost, pass@k, and the wall-time/cost correlation."""

from __future__ import annotations

import statistics
from collections import defaultdict

from .bench import pass_at_k
from .runio import RunArtifacts
from .trajectory import step_records


def step_histogram(runs: list[RunArtifacts]) -> dict[str, dict[int, dict[str, int]]]:
    """Per task type: how often each action occurs at each step position."""
    histogram: dict[str, dict[int, dict[str, int]]] = {}
    for run in runs:
        by_type = histogram.setdefault(run.task_type, {})
        for position, step in enumerate(step_records(run.records), 1):
            bin_counts = by_type.setdefault(position, {})
            action = step.get("action", "?")
            bin_counts[action] = bin_counts.get(action, 0) + 1
    return histogram


def action_cost_breakdown(runs: list[RunArtifacts]) -> dict[str, dict]:
    """Total and average cost per ledger label (action name)."""
    agg: dict[str, dict] = defaultdict(lambda: {"calls": 0, "cost": 0.0, "runs": set()})
    for run in runs:
        for row in run.ledger_rows:
            label = row.get("label", "?")
            agg[label]["calls"] += 1
            if row.get("cost") is not None:
                agg[label]["cost"] += row["cost"]
            agg[label]["runs"].add(str(run.run_dir))
    out: dict[str, dict] = {}
    for label, data in agg.items():
        n_runs = len(data["runs"]) or 1
        out[label] = {
            "calls": data["calls"],
            "cost": data["cost"],
            "avg_cost_per_run": data["cost"] / n_runs,
        }
    return out


def outcome_matrix(runs: list[RunArtifacts]) -> dict[str, list[bool]]:
    """Per task id, run outcomes ordered by run directory name."""
    grouped: dict[str, list[tuple[str, bool]]] = defaultdict(list)
    for run in runs:
        grouped[run.task_id].append((run.run_dir.name, run.resolved))
    return {
        task_id: [ok for _name, ok in sorted(outcomes)]
        for task_id, outcomes in grouped.items()
    }


def pass_at_k_table(runs: list[RunArtifacts]) -> dict[int, float]:
    matrix = outcome_matrix(runs)
    if not matrix:
        return {}
    max_k = min(len(v) for v in matrix.values())
    return {k: pass_at_k(matrix, k) for k in range(1, max_k + 1)}


def time_cost_pairs(runs: list[RunArtifacts]) -> list[tuple[float, float]]:
    pairs = []
    for run in runs:
        wall = run.meta.get("duration")
        cost = run.ledger_totals.get("cost")
        if wall is None or cost is None:
            continue
        pairs.append((float(wall), float(cost)))
    return pairs


def time_cost_correlation(runs: list[RunArtifacts]) -> float | None:
    """Pearson correlation between run wall time and run cost."""
    pairs = time_cost_pairs(runs)
    if len(pairs) < 2:
        return None
    times = [p[0] for p in pairs]
    costs = [p[1] for p in pairs]
    try:
        return statistics.correlation(times, costs)
    except statistics.StatisticsError:
        return None  # constant input


def render_report(runs: list[RunArtifacts]) -> str:
    out: list[str] = []
    out.append(f"Runs analyzed: {len(runs)}")
    out.append("")
    out.append("Step-position histograms (per task type)")
    histogram = step_histogram(runs)
    for task_type in sorted(histogram):
        out.append(f"  {task_type}:")
        for position in sorted(histogram[task_type]):
            bins = histogram[task_type][position]
            row = ", ".join(f"{a}×{n}" for a, n in sorted(bins.items()))
            out.append(f"    step {position}: {row}")
    out.append("")
    out.append("Cost per action label")
    breakdown = action_cost_breakdown(runs)
    total_cost = sum(d["cost"] for d in breakdown.values())
    for label in sorted(breakdown, key=lambda l: -breakdown[l]["cost"]):
        data = breakdown[label]
        share = (data["cost"] / total_cost * 100) if total_cost else 0.0
        out.append(
            f"  {label}: {data['calls']} call(s), ${data['cost']:.4f} total "
            f"({share:.1f}%), ${data['avg_cost_per_run']:.4f}/run"
        )
    out.append("")
    out.append("pass@k")
    table = pass_at_k_table(runs)
    if table:
        for k, fraction in table.items():
            out.append(f"  pass@{k}: {fraction:.3f}")
    else:
        out.append("  (no verdicts found)")
    out.append("")
    r = time_cost_correlation(runs)
    if r is None:
        out.append("time/cost correlation: n/a (need ≥2 runs with variance)")
    else:
        out.append(f"time/cost correlation (Pearson r): {r:.4f}")
    return "\n".join(out) + "\n"

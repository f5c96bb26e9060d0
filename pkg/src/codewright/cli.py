"""Command-line surface: run tasks, evaluate solutions, replay trajectories,
and compute fleet statistics."""

from __future__ import annotations

import concurrent.futures
import sys
from datetime import datetime, timezone
from pathlib import Path

import click

from . import bench, runio, stats as stats_mod, trajectory
from .errors import EngineError, ManifestError
from .llm import HttpChatBackend, ScriptedBackend, UsageLedger
from .orchestrator import ACTION_NAMES, STATIC_WORKFLOWS, RunConfig, run_task


def _build_backend(spec: str, model: str, base_url: str):
    if spec == "live":
        if not base_url:
            raise click.UsageError("--backend live needs --base-url")
        return lambda: HttpChatBackend(base_url=base_url, model=model)
    if spec.startswith("scripted:"):
        script_path = spec.split(":", 1)[1]
        if not Path(script_path).is_file():
            raise click.UsageError(f"no such script file: {script_path}")
        return lambda: ScriptedBackend.from_file(script_path)
    raise click.UsageError("--backend must be 'live' or 'scripted:<script file>'")


def _manifest_paths(path: Path) -> list[Path]:
    if path.is_dir():
        found = sorted(path.glob("*.json"))
        if not found:
            raise click.UsageError(f"no manifests (*.json) under {path}")
        return found
    return [path]


@click.group()
def main():
    """Unified software-engineering agent engine and benchmark harness."""


@main.command("run")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, path_type=Path),
              help="Task manifest file, or a directory of manifests.")
@click.option("--backend", "backend_spec", required=True,
              help="'live' or 'scripted:<script file>'.")
@click.option("--model", default="claude-3-5-sonnet-20241022", show_default=True)
@click.option("--base-url", default="", help="Chat endpoint base URL for the live backend.")
@click.option("--max-rounds", default=20, show_default=True, type=int)
@click.option("--static", "static_name", default=None,
              type=click.Choice(sorted(STATIC_WORKFLOWS)), help="Run a fixed workflow instead of dynamic selection.")
@click.option("--disable-action", "disabled", multiple=True, type=click.Choice(ACTION_NAMES),
              help="Remove an action from the enabled set (repeatable).")
@click.option("--parallel", default=1, show_default=True, type=int)
@click.option("--out-dir", default="runs", show_default=True, type=click.Path(path_type=Path))
@click.option("--skip-eval", is_flag=True, help="Do not evaluate the final solution.")
def cmd_run(manifest_path, backend_spec, model, base_url, max_rounds, static_name, disabled, parallel, out_dir, skip_eval):
    """Run the agent on one task (or every task in a directory)."""
    make_backend = _build_backend(backend_spec, model, base_url)
    mode = f"static:{static_name}" if static_name else "dynamic"
    enabled = [a for a in ACTION_NAMES if a not in disabled]
    try:
        config = RunConfig(max_rounds=max_rounds, mode=mode, enabled_actions=enabled)
    except EngineError as exc:
        raise click.UsageError(str(exc))
    paths = _manifest_paths(manifest_path)

    def one(path: Path) -> tuple[str, bool, bool]:
        try:
            manifest = bench.load_task(path)
        except ManifestError as exc:
            click.echo(f"[{path.name}] manifest error: {exc}", err=True)
            return str(path), False, False
        started = datetime.now(timezone.utc)
        result = run_task(manifest, config, make_backend(), UsageLedger())
        verdict = None
        if not skip_eval and result.terminal_reason != "error":
            try:
                verdict = bench.evaluate(manifest, result.solution_text).to_dict()
            except EngineError as exc:
                verdict = {"resolved": False, "metric": {}, "detail": f"evaluation error: {exc}"}
        finished = datetime.now(timezone.utc)
        run_dir = runio.next_run_dir(out_dir, manifest.id)
        runio.write_run_artifacts(run_dir, result, verdict, started, finished)
        resolved = bool(verdict and verdict.get("resolved"))
        status = "resolved" if resolved else ("error" if result.terminal_reason == "error" else "unresolved")
        click.echo(
            f"[{manifest.id}] {result.terminal_reason} solution={result.solution_id} "
            f"{status} → {run_dir}"
        )
        return manifest.id, result.terminal_reason != "error", resolved

    if parallel > 1 and len(paths) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=parallel) as pool:
            outcomes = list(pool.map(one, paths))
    else:
        outcomes = [one(p) for p in paths]
    if not all(ok for _task, ok, _resolved in outcomes):
        sys.exit(1)


@main.command("eval")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.argument("solution", type=click.Path(exists=True, path_type=Path))
def cmd_eval(manifest_path, solution):
    """Evaluate a solution diff file against a task's criterion.

    Exit code: 0 resolved, 1 unresolved, 2 error.
    """
    try:
        manifest = bench.load_task(manifest_path)
        verdict = bench.evaluate(manifest, Path(solution).read_text())
    except EngineError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    click.echo(f"resolved: {verdict.resolved}")
    click.echo(f"metric: {verdict.metric}")
    if verdict.detail:
        click.echo(f"detail: {verdict.detail}")
    sys.exit(0 if verdict.resolved else 1)


@main.command("stats")
@click.argument("results_dir", type=click.Path(exists=True, path_type=Path))
def cmd_stats(results_dir):
    """Report step histograms, action costs, pass@k, and the time/cost
    correlation over a directory of run artifacts."""
    try:
        runs = runio.collect_runs(results_dir)
    except EngineError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    if not runs:
        click.echo("error: no run artifacts found", err=True)
        sys.exit(2)
    click.echo(stats_mod.render_report(runs), nl=False)


@main.command("replay")
@click.argument("trajectory_path", type=click.Path(exists=True, path_type=Path))
def cmd_replay(trajectory_path):
    """Render a trajectory log as a human-readable transcript."""
    try:
        records = trajectory.read_trajectory(trajectory_path)
    except EngineError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    click.echo(trajectory.render_transcript(records), nl=False)


@main.command("selfcheck")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, path_type=Path),
              help="Task manifest file, or a directory of manifests.")
def cmd_selfcheck(manifest_path):
    """Verify fixture sanity: gold patches resolve, empty diffs do not."""
    problems: list[str] = []
    for path in _manifest_paths(manifest_path):
        try:
            manifest = bench.load_task(path)
        except ManifestError as exc:
            problems.append(f"{path.name}: {exc}")
            continue
        problems.extend(bench.self_check(manifest))
        click.echo(f"checked {manifest.id}")
    for problem in problems:
        click.echo(f"PROBLEM: {problem}", err=True)
    sys.exit(1 if problems else 0)


if __name__ == "__main__":
    main()

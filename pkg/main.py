import asyncio
import logging
import shutil
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional, Tuple

import click
import numpy as np

from app.core.config import (
    GlobalConfig,
    load_global_config,
    settings,
    validate_paths,
    with_replay,
)
from app.core.decorator import cli_errors
from app.core.exceptions import (
    EXIT_OK,
    EXIT_TOOL,
    EXIT_UNSOLVED,
    ConfigError,
    RtlAgentError,
)
from app.core.log_setup import setup_logging
from app.schemas.forge import ExamplePool, SpecCodePair
from app.schemas.orchestrator import OutcomeFile, ParallelOutcome
from app.schemas.task import RtlTask
from app.services.evalkit import aggregate_outcomes, build_metric_report, emit_report
from app.services.forge import (
    ForgeService,
    load_corpus,
    load_golden_set,
    load_pool,
    write_filter_report,
    write_jsonl,
)
from app.services.orchestrator import OrchestratorService
from app.services.run_store import TrajectoryWriter, load_outcomes
from app.services.sim_harness import SimHarnessService
from app.services.workspace import WorkspaceService, discover_tasks, load_task
from app.utils.llm_component.service import build_backend, make_backend_factory

logger = logging.getLogger("app")

# Seed distance between independent benchmark runs of one task
RUN_SEED_STRIDE = 100


# ============================================================================
# Helpers
# ============================================================================
def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _resolve_config(
    ctx: click.Context,
    parallel: Optional[int] = None,
    max_iter: Optional[int] = None,
    seed: Optional[int] = None,
) -> GlobalConfig:
    """Config file, then --replay, then per-command flag overrides"""
    config = load_global_config(ctx.obj["config_path"])
    if ctx.obj["replay"]:
        config = with_replay(config, ctx.obj["replay"])

    loop = config.parallel.loop or config.loop
    loop_updates = {}
    if max_iter is not None:
        loop_updates["max_iterations"] = max_iter
    if seed is not None:
        loop_updates["seed"] = seed
    loop = loop.model_copy(update=loop_updates)

    parallel_updates = {"loop": loop}
    if parallel is not None:
        parallel_updates["processes"] = parallel
    return config.model_copy(
        update={"loop": loop, "parallel": config.parallel.model_copy(update=parallel_updates)}
    )


def _harness(config: GlobalConfig) -> SimHarnessService:
    workspaces = WorkspaceService(
        config.workspace.scratch_root,
        keep=config.workspace.keep_workspaces,
        retain_failed=config.workspace.retain_failed,
    )
    return SimHarnessService(config.sim, workspaces)


def _fresh_dir(path: Path) -> Path:
    if path.exists():
        shutil.rmtree(path)
    path.mkdir(parents=True)
    return path


async def execute_run(
    task: RtlTask,
    config: GlobalConfig,
    run_dir: Path,
    processes: int,
    seed: int,
    run_index: int = 0,
    baseline: bool = False,
) -> Tuple[ParallelOutcome, OutcomeFile]:
    """One race of `processes` loops on a task, persisted into run_dir"""
    writer = TrajectoryWriter(_fresh_dir(run_dir))
    orchestrator = OrchestratorService(_harness(config), writer)
    loop = config.parallel.loop.model_copy(update={"seed": seed})
    pconfig = config.parallel.model_copy(update={"processes": processes, "loop": loop})

    started_at = _now()
    outcome = await orchestrator.run_parallel(task, make_backend_factory(config), pconfig, loop)
    if outcome.winning_code is not None:
        writer.write_code(task.candidate_filename, outcome.winning_code)

    summary = OutcomeFile(
        task_id=task.id,
        category=task.category.value,
        run_index=run_index,
        seed=seed,
        processes=processes,
        baseline=baseline,
        winner=outcome.winner,
        iterations_to_success=outcome.iterations_to_success,
        total_iterations_executed=outcome.total_iterations_executed,
        error=outcome.error,
        process_summaries=outcome.summaries(),
        started_at=started_at,
        finished_at=_now(),
    )
    writer.write_outcome(summary)
    return outcome, summary


def _write_reports(runs_root: Path, output: Path) -> str:
    outcomes = load_outcomes(runs_root)
    if not outcomes:
        raise ConfigError(f"No outcome files found under {runs_root}")
    matrix, stats = aggregate_outcomes(outcomes)
    report = build_metric_report(matrix, stats)
    output.mkdir(parents=True, exist_ok=True)
    (output / "report.json").write_text(emit_report(report, "json"), encoding="utf-8")
    markdown = emit_report(report, "markdown")
    (output / "report.md").write_text(markdown, encoding="utf-8")
    return markdown


# ============================================================================
# CLI Commands
# ============================================================================
@click.group()
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="JSON run configuration",
)
@click.option(
    "--replay",
    type=click.Path(dir_okay=False),
    default=None,
    help="Serve every LLM role from this cassette",
)
@click.option("--log-level", default=None, help="Override LOG_LEVEL")
@click.pass_context
def cli(ctx: click.Context, config_path: Optional[str], replay: Optional[str], log_level: Optional[str]):
    """Agentic RTL generation: generate, simulate, reflect, coordinate."""
    setup_logging(
        log_level or ("debug" if settings.debug else settings.log_level),
        settings.log_dir if settings.log_to_file else None,
    )
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path
    ctx.obj["replay"] = replay


@cli.command()
@click.argument("task_path", type=click.Path(exists=True, file_okay=False))
@click.option("--parallel", type=click.IntRange(min=1), default=None, help="Racing processes")
@click.option("--max-iter", type=click.IntRange(min=1), default=None, help="Iterations per process")
@click.option("--seed", type=int, default=None, help="Base seed")
@click.option("--output", type=click.Path(file_okay=False), default=None, help="Run directory")
@click.pass_context
@cli_errors
def run(ctx, task_path, parallel, max_iter, seed, output):
    """Solve one task bundle; exit 0 iff a process solved it."""
    config = _resolve_config(ctx, parallel, max_iter, seed)
    validate_paths(config)
    task = load_task(task_path)

    run_dir = Path(output) if output else Path(config.output_root) / task.id / "run_00"
    outcome, _ = asyncio.run(
        execute_run(
            task,
            config,
            run_dir,
            processes=config.parallel.processes,
            seed=config.parallel.loop.seed,
        )
    )

    if outcome.solved:
        click.echo(
            f"{task.id}: solved by process {outcome.winner} at iteration "
            f"{outcome.iterations_to_success} ({outcome.total_iterations_executed} "
            f"iterations executed) -> {run_dir}"
        )
        ctx.exit(EXIT_OK)
    if outcome.error:
        click.echo(f"{task.id}: aborted: {outcome.error}", err=True)
        ctx.exit(EXIT_TOOL)
    click.echo(
        f"{task.id}: unsolved after {outcome.total_iterations_executed} iterations -> {run_dir}"
    )
    ctx.exit(EXIT_UNSOLVED)


@cli.command()
@click.argument("suite_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--runs", type=click.IntRange(min=1), default=5, show_default=True)
@click.option("--parallel", type=click.IntRange(min=1), default=None, help="Racing processes")
@click.option("--max-iter", type=click.IntRange(min=1), default=None, help="Iterations per process")
@click.option("--seed", type=int, default=None, help="Base seed")
@click.option("--output", type=click.Path(file_okay=False), default=None, help="Suite output directory")
@click.option("--solo-baseline", is_flag=True, help="Also run each run with one process")
@click.pass_context
@cli_errors
def bench(ctx, suite_dir, runs, parallel, max_iter, seed, output, solo_baseline):
    """Run every task bundle of a suite `--runs` times and report metrics."""
    config = _resolve_config(ctx, parallel, max_iter, seed)
    task_dirs = discover_tasks(suite_dir)
    if not task_dirs:
        raise ConfigError(f"No task bundles in {suite_dir}")
    validate_paths(config)

    out = Path(output) if output else Path(config.output_root) / Path(suite_dir).name
    base_seed = config.parallel.loop.seed
    processes = config.parallel.processes

    for task_dir in task_dirs:
        try:
            task = load_task(task_dir)
        except RtlAgentError as e:
            logger.warning(f"Skipping {task_dir.name}: {e.message}")
            continue

        for run_index in range(runs):
            run_seed = base_seed + run_index * RUN_SEED_STRIDE
            plan = [(f"run_{run_index:02d}", processes, False)]
            if solo_baseline:
                plan.append((f"run_{run_index:02d}_solo", 1, True))
            for name, count, baseline in plan:
                try:
                    outcome, _ = asyncio.run(
                        execute_run(
                            task,
                            config,
                            out / task.id / name,
                            processes=count,
                            seed=run_seed,
                            run_index=run_index,
                            baseline=baseline,
                        )
                    )
                except RtlAgentError as e:
                    logger.error(f"{task.id} {name} failed: {e.message}")
                    continue
                status = "solved" if outcome.solved else "unsolved"
                click.echo(f"{task.id} {name}: {status}")

    click.echo(_write_reports(out, out))
    ctx.exit(EXIT_OK)


@cli.command()
@click.argument("corpus_dir", type=click.Path(exists=True))
@click.argument("golden_dir", type=click.Path(), required=False)
@click.option("--output", type=click.Path(file_okay=False), default=None, help="Forge output directory")
@click.option("--pool", type=click.Path(exists=True, dir_okay=False), default=None, help="Example pool for pair generation")
@click.option("--progress/--no-progress", default=False)
@click.pass_context
@cli_errors
def forge(ctx, corpus_dir, golden_dir, output, pool, progress):
    """Curate a raw RTL corpus and optionally generate spec/code pairs."""
    config = _resolve_config(ctx)
    stages = config.forge.stages
    corpus = load_corpus(corpus_dir)

    golden_set = None
    if stages.contamination:
        if golden_dir is None:
            raise ConfigError("Contamination stage needs GOLDEN_DIR")
        golden_set = load_golden_set(golden_dir)
        if not golden_set:
            raise ConfigError(f"No golden solutions in {golden_dir}")

    validate_paths(config, need_simulator=bool(corpus) and (stages.syntax or pool is not None))
    service = ForgeService(config.forge, _harness(config))

    async def curate():
        retained, report = await service.run_pipeline(corpus, golden_set, progress=progress)
        pairs: List[SpecCodePair] = []
        if pool is not None and retained:
            example_pool: ExamplePool = load_pool(pool)
            await service.validate_pool(example_pool)
            backend = build_backend(config.backends.generator, seed=config.forge.pair_seed)
            rng = np.random.default_rng(config.forge.pair_seed)
            try:
                for script in retained:
                    result = await service.generate_pairs(
                        script, example_pool, backend, golden_set or {}, rng
                    )
                    if result.reason:
                        logger.info(f"No pair from {script.id}: {result.reason}")
                    pairs.extend(result.pairs)
            finally:
                await backend.close()
        return retained, report, pairs

    retained, report, pairs = asyncio.run(curate())

    out = Path(output) if output else Path(config.output_root) / "forge"
    write_jsonl(retained, out / "retained.jsonl")
    write_filter_report(report, out / "filter_report.json")
    if pool is not None:
        write_jsonl(pairs, out / "pairs.jsonl")

    click.echo(f"Retained {len(retained)} of {len(corpus)} scripts -> {out}")
    for stage in report.stages:
        click.echo(f"  {stage.name}: {stage.input} in, {stage.rejected} rejected, {stage.retained} kept")
    if pool is not None:
        click.echo(f"Accepted {len(pairs)} spec/code pairs")
    ctx.exit(EXIT_OK)


@cli.command()
@click.argument("runs_root", type=click.Path(exists=True, file_okay=False))
@click.option("--output", type=click.Path(file_okay=False), default=None, help="Report directory (default RUNS_ROOT)")
@click.pass_context
@cli_errors
def report(ctx, runs_root, output):
    """Aggregate outcome files into report.json and report.md."""
    root = Path(runs_root)
    click.echo(_write_reports(root, Path(output) if output else root))
    ctx.exit(EXIT_OK)


@cli.command()
@click.pass_context
def info(ctx):
    """Display settings and tool availability."""
    click.echo(f"Application: {settings.app_name}")
    click.echo(f"Version: {settings.app_version}")
    click.echo(f"Debug Mode: {settings.debug}")
    click.echo(f"Output Root: {Path(settings.output_root).absolute()}")
    click.echo(f"Scratch Root: {Path(settings.scratch_root).absolute()}")
    for tool in (settings.iverilog_path, settings.vvp_path):
        location = shutil.which(tool)
        click.echo(f"{tool}: {location or 'NOT FOUND'}")


if __name__ == "__main__":
    cli()

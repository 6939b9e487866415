"""Command-line entry point: `python -m api.cli <command>`.

Exit codes: 0 success, 1 library or data error, 2 usage error.
"""
from pathlib import Path
from typing import Any, Dict, List, Optional

import typer
from dotenv import load_dotenv
from rich.console import Console
from rich.table import Table

from config.logger_config import setup_logging
from config.settings import config_hash, load_config
from noise_adapter.errors import NoiseAdapterError
from noise_adapter.evalrep.report import IN_DOMAIN, ZERO_SHOT
from noise_adapter.workflows import RunContext, StageResult, default_stages, full_pipeline

console = Console(stderr=True)

app = typer.Typer(
    name="noise-adapter",
    help="Cross-device residual noise adapter pipeline",
    add_completion=False,
    no_args_is_help=True,
)

EXIT_FAILURE = 1


class CliState:
    def __init__(self, config_path: Optional[Path], run_dir: Optional[Path], log_level: Optional[str]):
        self.config_path = config_path
        self.run_dir = run_dir
        self.log_level = log_level

    def context(self, new: bool = False) -> RunContext:
        '''Explicit --run-dir, else a fresh run (new=True) or the latest run for this config'''
        cfg = load_config(self.config_path)
        if self.run_dir is not None:
            context = RunContext.open(cfg, self.run_dir)
        else:
            latest = None if new else _latest_run(Path(cfg.runs_root), config_hash(cfg))
            context = RunContext.open(cfg, latest) if latest else RunContext.create(cfg)
        setup_logging(self.log_level, log_file=context.log_file)
        return context


def _latest_run(root: Path, hash_: str) -> Optional[Path]:
    if not root.is_dir():
        return None
    runs = sorted(p for p in root.iterdir() if p.is_dir() and p.name.endswith(f"-{hash_}"))
    return runs[-1] if runs else None


def parse_int_list(value: str) -> List[int]:
    '''"5,10,20" or an inclusive range "0..4"'''
    try:
        if ".." in value:
            lo, hi = value.split("..", 1)
            values = list(range(int(lo), int(hi) + 1))
        else:
            values = [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise typer.BadParameter(f"expected a comma list or a range like 0..4, got {value!r}") from None
    if not values:
        raise typer.BadParameter(f"empty list {value!r}")
    return values


def _show(title: str, data: Dict[str, Any]) -> None:
    table = Table(title=title)
    table.add_column("key")
    table.add_column("value", justify="right")
    for key, value in data.items():
        table.add_row(str(key), f"{value:.4f}" if isinstance(value, float) else str(value))
    console.print(table)


def _finish(result: StageResult, title: str) -> None:
    if not result.success:
        for error in result.errors:
            console.print(f"[bold red]error:[/] {error}", soft_wrap=True)
        raise typer.Exit(EXIT_FAILURE)
    if isinstance(result.output, dict):
        _show(title, result.output)
    elif result.output is not None:
        console.print(f"{title}: {result.output}")


def _run_stage(ctx: typer.Context, stage: str, new: bool = False, **params) -> None:
    state: CliState = ctx.obj
    try:
        context = state.context(new=new)
    except NoiseAdapterError as e:
        console.print(f"[bold red]error:[/] {e}", soft_wrap=True)
        raise typer.Exit(EXIT_FAILURE)
    stages = default_stages()
    result = stages.execute(stage, context, **params)
    context.write_metrics()
    _finish(result, f"{stage} ({context.run_dir})")


@app.callback()
def main_options(
    ctx: typer.Context,
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="YAML run configuration"),
    run_dir: Optional[Path] = typer.Option(None, "--run-dir", help="Work on this run directory"),
    log_level: Optional[str] = typer.Option(None, "--log-level", help="Overrides LOG_LEVEL"),
):
    load_dotenv()
    ctx.obj = CliState(config, run_dir, log_level)


@app.command()
def gen(ctx: typer.Context):
    '''Write the circuit suite manifest into a new run directory'''
    _run_stage(ctx, "gen", new=ctx.obj.run_dir is None)


@app.command()
def simulate(ctx: typer.Context, backend: Optional[str] = typer.Option(None, "--backend", help="Device name; default both")):
    '''Simulate the suite and write the dataset JSONL'''
    _run_stage(ctx, "simulate", backend=backend)


@app.command()
def train(ctx: typer.Context):
    '''Train on the source device; writes checkpoint and train log'''
    _run_stage(ctx, "train")


@app.command("eval")
def evaluate(
    ctx: typer.Context,
    condition: Optional[str] = typer.Option(None, "--condition", help=f"{IN_DOMAIN} or {ZERO_SHOT}; default both"),
):
    '''Evaluate the source model'''
    if condition not in (None, IN_DOMAIN, ZERO_SHOT):
        raise typer.BadParameter(f"must be {IN_DOMAIN} or {ZERO_SHOT}", param_hint="--condition")
    _run_stage(ctx, "eval", condition=condition)


@app.command()
def adapt(
    ctx: typer.Context,
    k: Optional[str] = typer.Option(None, "--k", help="K values, e.g. 5,10,20"),
    seeds: Optional[str] = typer.Option(None, "--seeds", help="Seeds, e.g. 0..4"),
    replay: Optional[bool] = typer.Option(None, "--replay/--no-replay", help="Only this replay variant"),
):
    '''Few-shot adaptation grid'''
    _run_stage(
        ctx,
        "adapt",
        k_values=parse_int_list(k) if k else None,
        seeds=parse_int_list(seeds) if seeds else None,
        replay=replay,
    )


@app.command()
def ablate(ctx: typer.Context):
    '''Leave-one-out calibration feature ablation'''
    _run_stage(ctx, "ablate")


@app.command()
def report(ctx: typer.Context):
    '''Aggregate stored records into report/'''
    _run_stage(ctx, "report")


@app.command("all")
def run_all(ctx: typer.Context):
    '''Full pipeline in a new run directory'''
    state: CliState = ctx.obj
    try:
        context = state.context(new=state.run_dir is None)
    except NoiseAdapterError as e:
        console.print(f"[bold red]error:[/] {e}", soft_wrap=True)
        raise typer.Exit(EXIT_FAILURE)
    result = full_pipeline().execute(context)
    if not result.success:
        for error in result.errors:
            console.print(f"[bold red]error:[/] {error}", soft_wrap=True)
        raise typer.Exit(EXIT_FAILURE)
    _show("pipeline", {name: f"{r.duration:.1f}s" for name, r in result.results.items()})
    console.print(f"Run directory: {context.run_dir}")


def main() -> None:
    app()


if __name__ == "__main__":
    main()

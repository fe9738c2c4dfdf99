"""
Command-line interface: ``python -m tsr analyze|stage1|stage2|validate|generate|serve``

Exit statuses:
  0 success / converged, 2 annealing budget exhausted, 3 input error,
  4 packing failure, 5 synthesis failure or library audit failure
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Annotated, Any, Callable, List, Optional

import typer

from tsr import database, metrics
from tsr.config import LOG_LEVEL, RunConfig, configure_logging, load_run_config
from tsr.errors import (
    InputError,
    InvalidArgumentError,
    LibraryAuditError,
    PackingError,
    SynthesisError,
)
from tsr.pipeline import (
    ExitStatus,
    cmd_analyze,
    cmd_generate,
    cmd_stage1,
    cmd_stage2,
    cmd_validate,
)

logger = logging.getLogger("tsr.cli")

app = typer.Typer(
    name="tsr",
    help="Two-stage statistical reconstruction of two-phase microstructures",
    add_completion=False,
)

ConfigOption = Annotated[Optional[Path], typer.Option("--config", "-c", help="key = value config file")]
SeedOption = Annotated[Optional[int], typer.Option("--seed", help="Master seed (overrides config)")]
OutOption = Annotated[Optional[Path], typer.Option("--out", "-o", help="Output directory")]


# ------------------------------------------------------------------------------
# Error handling
# ------------------------------------------------------------------------------
def _execute(
    command: str,
    config: RunConfig,
    action: Callable[[], ExitStatus],
    ledger: Optional[dict[str, Any]] = None,
) -> None:
    """Run ``action``, map failures to exit statuses and record the outcome.

    ``ledger`` may be filled by ``action`` with energies for the run ledger.
    """
    ledger = {} if ledger is None else ledger
    status = ExitStatus.OK
    try:
        status = action()
    except PackingError as exc:
        logger.error("Packing failure: %s", exc)
        status = ExitStatus.PACKING_FAILURE
    except (SynthesisError, LibraryAuditError) as exc:
        logger.error("Stage one failure: %s", exc)
        status = ExitStatus.SYNTHESIS_FAILURE
    except (InputError, InvalidArgumentError) as exc:
        logger.error("Input error: %s", exc)
        status = ExitStatus.INPUT_ERROR

    metrics.record_run(success=status in (ExitStatus.OK, ExitStatus.BUDGET_EXHAUSTED))
    database.record_run(
        command=command,
        master_seed=config.master_seed,
        status=status.name.lower(),
        exit_code=int(status),
        target=str(config.target_path) if config.target_path else None,
        **ledger,
    )
    if status != ExitStatus.OK:
        raise typer.Exit(code=int(status))


def _load(config_file: Optional[Path], **overrides: Any) -> RunConfig:
    try:
        return load_run_config(config_file, **overrides)
    except InputError as exc:
        logger.error("Input error: %s", exc)
        raise typer.Exit(code=int(ExitStatus.INPUT_ERROR)) from exc


# ------------------------------------------------------------------------------
# Commands
# ------------------------------------------------------------------------------
@app.command()
def analyze(
    target: Annotated[Path, typer.Argument(help="Target image (PBM or PNG)")],
    config: ConfigOption = None,
    seed: SeedOption = None,
    out: OutOption = None,
    scale_stride: Annotated[Optional[int], typer.Option(help="Scale stride for the ED curves")] = None,
) -> None:
    """Report clusters, volume fraction, <q> and target curves."""
    run = _load(config, target_path=target, master_seed=seed, out_dir=out, scale_stride=scale_stride)

    def action() -> ExitStatus:
        summary = cmd_analyze(run)
        typer.echo(
            f"phi={summary.black_fraction:.4f} clusters={summary.cluster_count} "
            f"<q>={summary.mean_shape_index:.6f}"
        )
        return ExitStatus.OK

    _execute("analyze", run, action)


@app.command()
def stage1(
    target: Annotated[Path, typer.Argument(help="Target image (PBM or PNG)")],
    config: ConfigOption = None,
    seed: SeedOption = None,
    out: OutOption = None,
    library_seed: Annotated[
        Optional[List[int]], typer.Option("--library-seed", help="Library seed (repeatable)")
    ] = None,
    selection: Annotated[Optional[str], typer.Option(help="first | lineal")] = None,
    budget_factor: Annotated[Optional[int], typer.Option(help="Attempt budget factor")] = None,
    patience: Annotated[
        Optional[int], typer.Option(help="Stale-attempt factor once the interface matches (0: full budget)")
    ] = None,
    workers: Annotated[Optional[int], typer.Option(help="Parallel synthesis workers")] = None,
) -> None:
    """Synthesize one surrogate library per seed."""
    run = _load(
        config,
        target_path=target,
        master_seed=seed,
        out_dir=out,
        library_seeds=library_seed or None,
        library_selection=selection,
        budget_factor=budget_factor,
        patience=patience,
        workers=workers,
    )

    def action() -> ExitStatus:
        result = cmd_stage1(run)
        for summary in result.libraries:
            marker = "*" if summary.selected else " "
            typer.echo(
                f"{marker} seed={summary.seed} <q>={summary.mean_shape_index:.6f} "
                f"lineal_sse={summary.lineal_sse:.3e}"
            )
        return ExitStatus.OK

    _execute("stage1", run, action)


@app.command()
def stage2(
    target: Annotated[Path, typer.Argument(help="Target image (PBM or PNG)")],
    library: Annotated[Path, typer.Argument(help="Library file from stage1")],
    config: ConfigOption = None,
    seed: SeedOption = None,
    out: OutOption = None,
    starts: Annotated[Optional[int], typer.Option(help="Random starts M")] = None,
    t0: Annotated[Optional[float], typer.Option(help="Initial temperature")] = None,
    ratio: Annotated[Optional[float], typer.Option(help="Cooling ratio per loop")] = None,
    delta: Annotated[Optional[float], typer.Option(help="Energy tolerance")] = None,
    max_step: Annotated[Optional[int], typer.Option(help="Largest displacement per axis")] = None,
    max_loops: Annotated[Optional[int], typer.Option(help="Temperature loop budget")] = None,
    scale_stride: Annotated[Optional[int], typer.Option(help="Scale stride for the cost")] = None,
    loop_c: Annotated[Optional[int], typer.Option(help="Loop length factor")] = None,
    count_infeasible: Annotated[
        Optional[bool],
        typer.Option("--count-infeasible/--feasible-only", help="Whether infeasible draws fill a loop"),
    ] = None,
) -> None:
    """Select the best random start and anneal cluster positions."""
    run = _load(
        config,
        target_path=target,
        master_seed=seed,
        out_dir=out,
        starts=starts,
        t0=t0,
        ratio=ratio,
        delta=delta,
        max_step=max_step,
        max_loops=max_loops,
        scale_stride=scale_stride,
        loop_c=loop_c,
        count_infeasible=count_infeasible,
    )
    ledger: dict[str, Any] = {}

    def action() -> ExitStatus:
        result = cmd_stage2(run, library)
        ledger.update(
            energy_start=result.anneal.start_energy,
            energy_final=result.anneal.energy,
            accepted_steps=result.anneal.accepted_steps,
        )
        typer.echo(
            f"E_start={result.anneal.start_energy:.4g} E_final={result.anneal.energy:.4g} "
            f"accepted={result.anneal.accepted_steps} converged={result.anneal.converged}"
        )
        return result.status

    _execute("stage2", run, action, ledger)


@app.command()
def validate(
    target: Annotated[Path, typer.Argument(help="Target image (PBM or PNG)")],
    reconstruction: Annotated[Path, typer.Argument(help="Reconstructed image")],
    config: ConfigOption = None,
    seed: SeedOption = None,
    out: OutOption = None,
    scale_stride: Annotated[Optional[int], typer.Option(help="Scale stride for the ED curves")] = None,
) -> None:
    """Compare descriptor curves of a reconstruction against its target."""
    run = _load(config, target_path=target, master_seed=seed, out_dir=out, scale_stride=scale_stride)

    def action() -> ExitStatus:
        report = cmd_validate(run, reconstruction)
        for deviation in report.deviations:
            typer.echo(f"{deviation.kind:<16} max={deviation.max_abs:.4f} mean={deviation.mean_abs:.4f}")
        return ExitStatus.OK

    _execute("validate", run, action)


@app.command()
def generate(
    side: Annotated[int, typer.Option(help="Domain side length")] = 64,
    clusters: Annotated[int, typer.Option(help="Number of inclusions")] = 20,
    min_area: Annotated[int, typer.Option(help="Smallest inclusion area")] = 4,
    max_area: Annotated[int, typer.Option(help="Largest inclusion area")] = 30,
    name: Annotated[str, typer.Option(help="Output file name")] = "target.pbm",
    config: ConfigOption = None,
    seed: SeedOption = None,
    out: OutOption = None,
) -> None:
    """Write a random synthetic target of 8-separated polyominoes."""
    run = _load(config, master_seed=seed, out_dir=out)

    def action() -> ExitStatus:
        path = cmd_generate(run, side, clusters, min_area, max_area, name)
        typer.echo(str(path))
        return ExitStatus.OK

    _execute("generate", run, action)


@app.command()
def serve(
    host: Annotated[str, typer.Option(help="Bind address")] = "127.0.0.1",
    port: Annotated[int, typer.Option(help="Bind port")] = 8000,
) -> None:
    """Serve the analysis API with uvicorn."""
    import uvicorn

    uvicorn.run("tsr.service:app", host=host, port=port, log_level=LOG_LEVEL.lower())


def main() -> None:
    configure_logging()
    database.configure()
    app()


if __name__ == "__main__":
    main()

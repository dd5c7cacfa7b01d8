#!/usr/bin/env python3

"""Run the simulation study: degrade phantoms, register them with every cost, record the errors."""

from pathlib import Path

import typer
from rich.live import Live

from njtvreg.evaluation import table_from_records
from njtvreg.run.utils.progress import SimulationProgress
from njtvreg.run.utils.run_config import load_run_config, parse_list, usage_errors
from njtvreg.run.utils.save import atomic_path, save_jsonl
from njtvreg.simulation.run import run_simulation
from njtvreg.utils.log import add_file_handler, logger

_HELP_TEXT = """Run seeded registration trials on degraded synthetic phantoms.

[not dim]
Writes [bold green]trials.jsonl[/bold green] (ground truth, degradations and estimates per trial),
[bold green]errors.csv[/bold green] (one row per trial, cost, channel, axis and error kind) and [bold green]njtvreg.log[/bold green].
Use [bold green]-c desk[/bold green] for the desk-scale suite.
[/not dim]
"""

app = typer.Typer(rich_markup_mode="rich", add_completion=False)


# fmt: off
@app.command(help=_HELP_TEXT)
def main(
    trials: int | None = typer.Option(None, "-n", "--trials", help="Number of trials", rich_help_panel="Basic"),
    seed: int | None = typer.Option(None, "--seed", help="Master seed", rich_help_panel="Basic"),
    costs: str | None = typer.Option(None, "--costs", help="Comma separated costs, e.g. njtv,mi", rich_help_panel="Basic"),
    output: Path = typer.Option(Path("simulation"), "-o", "--out", help="Output directory", rich_help_panel="Basic"),
    config_spec: Path = typer.Option(Path("default"), "-c", "--config", help="Path to a config file or name of a built-in one", rich_help_panel="Basic"),
    workers: int | None = typer.Option(None, "-w", "--workers", help="Trials run in parallel", rich_help_panel="Basic"),
    threads: int | None = typer.Option(None, "--threads", help="Threads per cost evaluation", rich_help_panel="Basic"),
    channels: int | None = typer.Option(None, "--channels", help="Phantom channels", rich_help_panel="Phantom"),
    dims: str | None = typer.Option(None, "--dims", help="Phantom grid size, e.g. 64,64,64", rich_help_panel="Phantom"),
    inu: float | None = typer.Option(None, "--inu", help="Maximum bias field magnitude in [0, 1]", rich_help_panel="Degradation"),
    noise: float | None = typer.Option(None, "--noise", help="Maximum Rician noise in percent of the maximum intensity", rich_help_panel="Degradation"),
    ds: int | None = typer.Option(None, "--ds", help="Maximum thick-slice factor (1 to 6)", rich_help_panel="Degradation"),
    translation: float | None = typer.Option(None, "--translation", help="Maximum offset per axis (mm)", rich_help_panel="Degradation"),
    rotation: float | None = typer.Option(None, "--rotation", help="Maximum rotation per axis (degrees)", rich_help_panel="Degradation"),
    crop: bool | None = typer.Option(None, "--crop/--no-crop", help="Crop the field of view of every channel", rich_help_panel="Degradation"),
    randomize_levels: bool | None = typer.Option(None, "--randomize-levels/--fixed-levels", help="Draw degradation levels up to the maxima, or apply the maxima exactly", rich_help_panel="Degradation"),
    save_volumes: bool | None = typer.Option(None, "--save-volumes/--no-save-volumes", help="Keep the degraded volumes as NIfTI", rich_help_panel="Advanced"),
) -> None:
    # fmt: on
    with usage_errors():
        config = load_run_config(
            "simulate",
            config_spec,
            seed=seed,
            threads=threads,
            output=output,
            overrides={
                "simulation": {
                    "trials": trials,
                    "costs": parse_list(costs) if costs is not None else None,
                    "workers": workers,
                    "channels": channels,
                    "dims": parse_list(dims, int) if dims is not None else None,
                    "save_volumes": save_volumes,
                },
                "degradation": {
                    "inu_magnitude": inu,
                    "noise_percent": noise,
                    "downsample_factor": ds,
                    "translation_range": translation,
                    "rotation_range": rotation,
                    "crop": crop,
                    "randomize_levels": randomize_levels,
                },
            },
        )
    settings = config.simulation
    output.mkdir(parents=True, exist_ok=True)
    logger.info(f"Results will be saved to {output}")
    add_file_handler(output / "njtvreg.log")
    logger.info(
        f"Running {settings.trials} trials with costs {settings.costs} "
        f"(seed {config.seed}, {settings.workers} workers, {config.threads} threads per evaluation)"
    )

    progress = SimulationProgress(settings.trials, settings.costs, output / "exit_statuses.yaml")
    try:
        with Live(progress.render_group, refresh_per_second=4):
            records = run_simulation(
                config.degradation,
                settings.trials,
                channels=settings.channels,
                dims=settings.dims,
                costs=settings.costs,
                options=config.registration,
                workers=settings.workers,
                volumes_dir=output / "volumes" if settings.save_volumes else None,
                progress=progress,
            )
        save_jsonl((record.to_dict() for record in records), output / "trials.jsonl", print_fct=logger.info)
        table = table_from_records(records)
        with atomic_path(output / "errors.csv") as tmp:
            table.to_csv(tmp)
    except Exception as e:
        logger.error(f"Simulation failed: {e}", exc_info=True)
        raise typer.Exit(1)
    if n_failed := sum(len(record.failures) for record in records):
        logger.warning(f"{n_failed} registrations failed, see '{output / 'exit_statuses.yaml'}'")
    logger.info(f"Wrote {len(table)} error rows to '{output / 'errors.csv'}'")


if __name__ == "__main__":
    app()

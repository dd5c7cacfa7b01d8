#!/usr/bin/env python3

"""Tabulate the NJTV integrand as one channel's gradient magnitude is swept, the others held fixed."""

from pathlib import Path

import numpy as np
import typer

from njtvreg.costs.njtv import SWEEP_MEASURES, integrand_sweep
from njtvreg.run.utils.run_config import parse_list, usage_errors
from njtvreg.run.utils.save import atomic_path
from njtvreg.utils.log import logger

app = typer.Typer(rich_markup_mode="rich", add_completion=False)


# fmt: off
@app.command(help="Write an [bold green]m,<measure>[/bold green] CSV of the integrand over the swept magnitude.")
def main(
    n_channels: int = typer.Option(2, "-C", "--C", help="Number of channels"),
    fixed: str = typer.Option("8", "--fixed", help="Comma separated magnitudes of the C-1 other channels"),
    start: float = typer.Option(0.0, "--start", help="First swept magnitude"),
    stop: float = typer.Option(16.0, "--stop", help="Last swept magnitude"),
    step: float = typer.Option(0.01, "--step", help="Sweep step"),
    measure: str = typer.Option("njtv", "--measure", help=f"One of {', '.join(SWEEP_MEASURES)}"),
    output: Path = typer.Option(Path("sweep.csv"), "-o", "--out", help="Output CSV"),
) -> None:
    # fmt: on
    with usage_errors():
        rows = integrand_sweep(n_channels, parse_list(fixed, float), (start, stop, step), measure)
    with atomic_path(output) as tmp:
        np.savetxt(tmp, rows, delimiter=",", header=f"m,{measure}", comments="", fmt="%.10g")
    best = rows[np.argmin(rows[:, 1])]
    logger.info(f"Wrote {len(rows)} rows to '{output}'; minimum {best[1]:.6g} at m = {best[0]:.6g}")


if __name__ == "__main__":
    app()

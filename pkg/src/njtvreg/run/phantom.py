#!/usr/bin/env python3

"""Write a synthetic multimodal phantom as one NIfTI-1 file per channel."""

import os
from pathlib import Path

import typer

from njtvreg.nifti import save_nifti
from njtvreg.run.utils.run_config import parse_list, usage_errors
from njtvreg.simulation.phantom import make_phantom
from njtvreg.utils.log import logger

app = typer.Typer(rich_markup_mode="rich", add_completion=False)


# fmt: off
@app.command(help="Write [bold green]channel_<c>.nii.gz[/bold green] for every phantom channel.")
def main(
    dims: str = typer.Option("64,64,64", "--dims", help="Grid size, e.g. 96,96,96 (at least 32 per axis)"),
    channels: int = typer.Option(3, "--channels", help="Number of contrasts (at least 2)"),
    seed: int | None = typer.Option(None, "--seed", help="Texture seed (default: NJTV_SEED or 0)"),
    output: Path = typer.Option(Path("phantom"), "-o", "--out", help="Output directory"),
) -> None:
    # fmt: on
    with usage_errors():
        shape = parse_list(dims, int)
        seed = seed if seed is not None else int(os.getenv("NJTV_SEED", "0"))
        volumes = make_phantom(shape, channels, seed=seed)
    output.mkdir(parents=True, exist_ok=True)
    for c, v in enumerate(volumes):
        save_nifti(v, output / f"channel_{c}.nii.gz")
    logger.info(f"Wrote {len(volumes)} phantom channels of shape {tuple(shape)} to '{output}'")


if __name__ == "__main__":
    app()

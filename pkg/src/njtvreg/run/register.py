#!/usr/bin/env python3

"""Register two or more NIfTI volumes with NJTV (groupwise) or a pairwise baseline cost."""

from pathlib import Path

import typer
from rich.console import Console

from njtvreg.nifti import load_nifti, save_nifti
from njtvreg.registration import APPLY_MODES, apply_result, estimate_scales, register
from njtvreg.run.utils.run_config import load_run_config, usage_errors
from njtvreg.run.utils.save import save_json
from njtvreg.utils.log import logger

_HELP_TEXT = """Register NIfTI-1 volumes rigidly.

[not dim]
With [bold green]--cost njtv[/bold green] (default) all volumes are aligned jointly; the baselines
[bold green]mi[/bold green], [bold green]nmi[/bold green], [bold green]ecc[/bold green] and [bold green]ncc[/bold green] align every moving volume to the fixed one separately.
The estimate is written to [bold green]<out>/transforms.json[/bold green].
[/not dim]
"""

app = typer.Typer(rich_markup_mode="rich", add_completion=False)
console = Console(highlight=False, stderr=True)


def split_nifti_name(path: Path) -> tuple[str, str]:
    """``a.nii.gz`` -> (``a``, ``.nii.gz``)."""
    for suffix in (".nii.gz", ".nii"):
        if path.name.endswith(suffix):
            return path.name[: -len(suffix)], suffix
    return path.stem, path.suffix


# fmt: off
@app.command(help=_HELP_TEXT)
def main(
    volumes: list[Path] = typer.Argument(..., exists=True, dir_okay=False, help="Input NIfTI-1 volumes (at least two)", show_default=False),
    cost: str | None = typer.Option(None, "--cost", help="Cost function: njtv, mi, nmi, ecc or ncc", rich_help_panel="Basic"),
    output: Path = typer.Option(Path("."), "-o", "--out", help="Output directory", rich_help_panel="Basic"),
    apply: str | None = typer.Option(None, "--apply", help="Also write realigned volumes: header or reslice", rich_help_panel="Basic"),
    fixed_index: int | None = typer.Option(None, "--fixed-index", help="Index of the fixed (reference) volume", rich_help_panel="Basic"),
    seed: int | None = typer.Option(None, "--seed", help="Master seed (sampling grid jitter)", rich_help_panel="Advanced"),
    threads: int | None = typer.Option(None, "--threads", help="Threads per cost evaluation", rich_help_panel="Advanced"),
    config_spec: Path = typer.Option(Path("default"), "-c", "--config", help="Path to a config file or name of a built-in one", rich_help_panel="Advanced"),
    dump_mixtures: bool = typer.Option(False, "--dump-mixtures", help="Write the intensity mixture fits to mixtures.json", rich_help_panel="Advanced"),
) -> None:
    # fmt: on
    with usage_errors():
        if len(volumes) < 2:
            raise ValueError(f"Need at least two volumes, got {len(volumes)}")
        if apply is not None and apply not in APPLY_MODES:
            raise ValueError(f"--apply must be one of {APPLY_MODES}, got {apply!r}")
        config = load_run_config(
            "register",
            config_spec,
            seed=seed,
            threads=threads,
            output=output,
            inputs=volumes,
            overrides={"registration": {"cost": cost, "fixed_index": fixed_index}},
        )
        if config.registration.fixed_index >= len(volumes):
            raise ValueError(f"--fixed-index {config.registration.fixed_index} out of range for {len(volumes)} volumes")
        loaded = [load_nifti(path) for path in volumes]

    try:
        result = register(loaded, config.registration)
        output.mkdir(parents=True, exist_ok=True)
        save_json(
            result.to_dict() | {"inputs": [str(p) for p in volumes], "seed": config.seed},
            output / "transforms.json",
            print_fct=logger.info,
        )
        if dump_mixtures:
            scales = result.scales or estimate_scales(loaded, config.registration.lambda_bins)
            channels = [
                {
                    "path": str(p),
                    "lambda": s.lam,
                    "provenance": s.provenance,
                    "mixture": s.mixture.to_dict() if s.mixture else None,
                }
                for p, s in zip(volumes, scales)
            ]
            save_json({"channels": channels}, output / "mixtures.json", print_fct=logger.info)
        if apply is not None:
            tag = "resliced" if apply == "reslice" else "realigned"
            for c, (path, v) in enumerate(zip(volumes, apply_result(loaded, result, apply))):
                if c == result.fixed_index:
                    continue
                stem, suffix = split_nifti_name(path)
                save_nifti(v, output / f"{stem}_{tag}{suffix}")
    except Exception as e:
        logger.error(f"Registration failed: {e}", exc_info=True)
        raise typer.Exit(1)
    console.print(f"Registered {len(volumes)} volumes with [bold green]{result.cost}[/bold green]")


if __name__ == "__main__":
    app()

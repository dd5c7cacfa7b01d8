#!/usr/bin/env python3

"""Summarise the error table of a simulation run."""

from pathlib import Path

import typer
from rich.console import Console
from rich.table import Table

from njtvreg.evaluation import ErrorTable, MethodSummary, render_report, summarize
from njtvreg.run.utils.run_config import load_run_config, usage_errors
from njtvreg.run.utils.save import save_json, save_text
from njtvreg.utils.log import logger

_HELP_TEXT = """Geometric mean (s.d.) of the absolute errors per method and the log-linear fit of the translation errors.

[not dim]
Writes [bold green]summary.json[/bold green] and the rendered [bold green]report.md[/bold green] next to the error table unless [bold green]--out[/bold green] is given.
[/not dim]
"""

app = typer.Typer(rich_markup_mode="rich", add_completion=False)
console = Console(highlight=False)


def summary_table(summaries: list[MethodSummary]) -> Table:
    t = Table(title="Absolute registration errors: geometric mean (geometric s.d.)")
    t.add_column("Method", style="bold green")
    t.add_column("Translation (mm)", justify="right")
    t.add_column("Rotation (deg)", justify="right")
    t.add_column("< 1 mm", justify="right")
    t.add_column("Failed", justify="right", style="red")
    for name in ("b_INU", "b_noise", "b_DS", "b_offset"):
        t.add_column(name, justify="right", style="cyan")
    for s in summaries:
        fit = [f"{v:.4f}" for v in (s.fit.inu, s.fit.noise, s.fit.ds, s.fit.offset)] if s.fit else ["-"] * 4
        t.add_row(
            s.method,
            f"{s.t_gmean:.3f} ({s.t_gsd:.2f})",
            f"{s.r_gmean:.3f} ({s.r_gsd:.2f})",
            f"{100 * s.t_success:.0f}%",
            str(s.failed_trials),
            *fit,
        )
    return t


# fmt: off
@app.command(help=_HELP_TEXT)
def main(
    errors: Path = typer.Argument(..., exists=True, dir_okay=False, help="errors.csv written by simulate", show_default=False),
    output: Path | None = typer.Option(None, "-o", "--out", help="Output directory (default: next to the error table)"),
    config_spec: Path = typer.Option(Path("default"), "-c", "--config", help="Config file providing the report template"),
) -> None:
    # fmt: on
    with usage_errors():
        config = load_run_config("evaluate", config_spec, output=output, inputs=[errors])
        table = ErrorTable.from_csv(errors)
        summaries = summarize(table)
    output = output or errors.parent
    try:
        console.print(summary_table(summaries))
        save_json(
            {"source": str(errors), "n_rows": len(table), "methods": [s.to_dict() for s in summaries]},
            output / "summary.json",
            print_fct=logger.info,
        )
        if config.evaluate.report_template:
            report = render_report(summaries, config.evaluate.report_template, n_rows=len(table))
            save_text(report, output / "report.md")
    except Exception as e:
        logger.error(f"Evaluation failed: {e}", exc_info=True)
        raise typer.Exit(1)


if __name__ == "__main__":
    app()

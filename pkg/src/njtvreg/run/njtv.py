#!/usr/bin/env python3

import sys
from importlib import import_module

from rich.console import Console

subcommands = [
    ("njtvreg.run.register", ["register", "reg"], "Register two or more NIfTI volumes"),
    ("njtvreg.run.phantom", ["phantom"], "Write a synthetic multimodal phantom"),
    ("njtvreg.run.simulate", ["simulate", "sim"], "Run the degradation and registration simulation study"),
    ("njtvreg.run.evaluate", ["evaluate", "eval"], "Summarise an error table from a simulation run"),
    ("njtvreg.run.sweep", ["sweep"], "Tabulate the NJTV integrand against one channel's gradient magnitude"),
]


def get_docstring() -> str:
    lines = [
        "This is the [yellow]central entry point for all commands[/yellow] of njtvreg.",
        "",
        "Available sub-commands:",
        "",
    ]
    for _, aliases, description in subcommands:
        alias_text = " or ".join(f"[bold green]{alias}[/bold green]" for alias in aliases)
        lines.append(f"  {alias_text}: {description}")
    return "\n".join(lines)


def main():
    args = sys.argv[1:]

    if len(args) == 0 or len(args) == 1 and args[0] in ["-h", "--help"]:
        return Console().print(get_docstring())

    for module_path, aliases, _ in subcommands:
        if args[0] in aliases:
            return import_module(module_path).app(args[1:], prog_name=f"njtv {aliases[0]}")

    Console(stderr=True).print(f"[bold red]Unknown command {args[0]!r}[/bold red]\n")
    Console(stderr=True).print(get_docstring())
    sys.exit(2)


if __name__ == "__main__":
    main()

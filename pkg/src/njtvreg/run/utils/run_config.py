"""Resolved configuration of one CLI invocation.

Values come from three layers, later ones winning: the built-in ``default.yaml``, the file named by
``--config``, and the command-line flags. Unknown keys raise ``TypeError`` when the section
dataclasses are built, before any heavy work starts.
"""

import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import typer
import yaml

from njtvreg.config import builtin_config_dir, get_config_path
from njtvreg.costs import COST_NAMES
from njtvreg.registration import RegistrationOptions
from njtvreg.simulation.run import DegradationSpec
from njtvreg.utils.log import logger

SECTIONS = ("registration", "degradation", "simulation", "evaluate")


@dataclass
class SimulationSettings:
    trials: int = 20
    channels: int = 3
    dims: list[int] = field(default_factory=lambda: [64, 64, 64])
    costs: list[str] = field(default_factory=lambda: ["njtv", "mi"])
    workers: int = 1
    save_volumes: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.channels < 2:
            raise ValueError(f"channels must be >= 2, got {self.channels}")
        if len(self.dims) != 3:
            raise ValueError(f"dims must have three entries, got {self.dims}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if unknown := [c for c in self.costs if c not in COST_NAMES]:
            raise ValueError(f"Unknown costs {unknown}, available: {list(COST_NAMES)}")
        if not self.costs:
            raise ValueError("At least one cost is needed")


@dataclass
class EvaluateSettings:
    report_template: str = ""


@dataclass
class RunConfig:
    command: str
    config_path: Path
    seed: int
    registration: RegistrationOptions
    degradation: DegradationSpec
    simulation: SimulationSettings
    evaluate: EvaluateSettings
    output: Path | None = None
    inputs: list[Path] = field(default_factory=list)

    @property
    def threads(self) -> int:
        return self.registration.threads


def _read_yaml(path: Path) -> dict:
    data = yaml.safe_load(path.read_text()) or {}
    if not isinstance(data, dict):
        raise TypeError(f"Config file '{path}' must contain a mapping, got {type(data).__name__}")
    if unknown := set(data) - {"seed", *SECTIONS}:
        raise TypeError(f"Config file '{path}' has unknown sections {sorted(unknown)}")
    return data


def _env_int(name: str) -> int | None:
    value = os.getenv(name)
    return int(value) if value else None


def load_run_config(
    command: str,
    config_spec: Path | str = "default",
    *,
    seed: int | None = None,
    threads: int | None = None,
    output: Path | None = None,
    inputs: list[Path] | None = None,
    overrides: dict[str, dict] | None = None,
) -> RunConfig:
    """Build the run configuration; flag overrides set to None leave the file value in place.

    The master seed resolves as flag, then ``NJTV_SEED``, then the file's ``seed``; it seeds both the
    sampling-grid jitter and the degradations. Threads resolve as flag, then ``NJTV_THREADS``, then
    ``registration.threads``.
    """
    config_path = get_config_path(config_spec)
    logger.info(f"Loading config from '{config_path}'")
    data = _read_yaml(builtin_config_dir / "default.yaml")
    user = _read_yaml(config_path)
    sections = {name: dict(data.get(name) or {}) | dict(user.get(name) or {}) for name in SECTIONS}
    for name, values in (overrides or {}).items():
        sections[name] |= {k: v for k, v in values.items() if v is not None}

    master_seed = next(s for s in (seed, _env_int("NJTV_SEED"), user.get("seed"), data.get("seed"), 0) if s is not None)
    sections["registration"]["seed"] = master_seed
    sections["degradation"]["seed"] = master_seed
    if (n_threads := threads if threads is not None else _env_int("NJTV_THREADS")) is not None:
        sections["registration"]["threads"] = n_threads

    return RunConfig(
        command=command,
        config_path=config_path,
        seed=master_seed,
        registration=RegistrationOptions(**sections["registration"]),
        degradation=DegradationSpec(**sections["degradation"]),
        simulation=SimulationSettings(**sections["simulation"]),
        evaluate=EvaluateSettings(**sections["evaluate"]),
        output=output,
        inputs=list(inputs or []),
    )


@contextmanager
def usage_errors():
    """Report configuration and validation failures as usage errors (exit code 2)."""
    try:
        yield
    except (TypeError, ValueError, FileNotFoundError) as e:
        raise typer.BadParameter(str(e)) from e


def parse_list(value: str, convert=str) -> list:
    """Parse a comma separated flag value such as ``njtv,mi`` or ``64,64,64``."""
    try:
        return [convert(item.strip()) for item in value.split(",") if item.strip()]
    except ValueError as e:
        raise typer.BadParameter(f"Cannot parse {value!r}: {e}") from e

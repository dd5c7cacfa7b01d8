"""
This file provides:

- Path settings for global config file & relative directories
- Version numbering
- The protocols that the optimiser and the registration driver program against:
  ``Objective`` for anything Powell minimises and ``CostFunction`` for the registry's cost classes.
"""

__version__ = "0.4.0"

import os
from pathlib import Path
from typing import Protocol, runtime_checkable

import dotenv
import numpy as np
from platformdirs import user_config_dir
from rich.console import Console

from njtvreg.utils.log import logger

package_dir = Path(__file__).resolve().parent

global_config_dir = Path(os.getenv("NJTV_GLOBAL_CONFIG_DIR") or user_config_dir("njtvreg"))
global_config_dir.mkdir(parents=True, exist_ok=True)
global_config_file = Path(global_config_dir) / ".env"

if not os.getenv("NJTV_SILENT_STARTUP"):
    Console(stderr=True).print(
        f"This is [bold green]njtvreg[/bold green] version [bold green]{__version__}[/bold green]. "
        f"Loading global config from [bold green]'{global_config_file}'[/bold green]"
    )
dotenv.load_dotenv(dotenv_path=global_config_file)


# === Protocols ===


class Objective(Protocol):
    """Anything Powell can minimise: a scalar function of a parameter vector."""

    def __call__(self, x: np.ndarray) -> float: ...


@runtime_checkable
class CostFunction(Protocol):
    """Protocol for registration cost functions over stacked rigid parameters."""

    n_params: int
    n_evals: int

    def __call__(self, x: np.ndarray) -> float: ...


__all__ = [
    "CostFunction",
    "Objective",
    "package_dir",
    "__version__",
    "global_config_file",
    "global_config_dir",
    "logger",
]

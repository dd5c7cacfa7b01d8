"""Atomic writers for the JSON, JSON-lines and CSV outputs of the run commands.

Every writer stages its output in a temporary file next to the target and renames it into place,
so re-running a command never leaves a half-written file behind.
"""

import dataclasses
import json
import os
import uuid
from collections.abc import Callable, Iterable
from contextlib import contextmanager
from pathlib import Path
from typing import Any

import numpy as np

from njtvreg import __version__


def _to_jsonable(obj: Any) -> Any:
    """Fallback for ``json.dumps``: dataclasses, numpy arrays and scalars, paths."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return dataclasses.asdict(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


@contextmanager
def atomic_path(path: Path):
    """Yield a temporary sibling of ``path`` and move it onto ``path`` when the block succeeds."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".tmp-{uuid.uuid4().hex[:8]}-{path.name}")
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        tmp.unlink(missing_ok=True)


def save_json(
    data: dict,
    path: Path | None,
    *,
    print_path: bool = True,
    print_fct: Callable = print,
) -> None:
    """Save ``data`` (plus the njtvreg version) as indented JSON."""
    if path is None:
        return
    data = {"njtvreg_version": __version__} | data
    with atomic_path(path) as tmp:
        tmp.write_text(json.dumps(data, indent=2, default=_to_jsonable))
    if print_path:
        print_fct(f"Saved results to '{path}'")


def save_jsonl(records: Iterable[dict], path: Path, *, print_fct: Callable | None = None) -> None:
    with atomic_path(path) as tmp:
        with open(tmp, "w") as f:
            for record in records:
                f.write(json.dumps(record, default=_to_jsonable) + "\n")
    if print_fct is not None:
        print_fct(f"Saved records to '{path}'")


def load_jsonl(path: Path) -> list[dict]:
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def save_text(text: str, path: Path) -> None:
    with atomic_path(path) as tmp:
        tmp.write_text(text)

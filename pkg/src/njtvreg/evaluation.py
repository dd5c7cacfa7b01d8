"""Registration error metrics and the statistics used to compare cost functions.

Errors are measured on the composed transform ``exp(q_est) exp(q_true)^-1``: absolute translation
components (mm) and absolute extrinsic x-y-z Euler angles (degrees).
"""

import csv
import math
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from jinja2 import StrictUndefined, Template

from njtvreg.se3 import euler_from_rigid, exp_se3
from njtvreg.volume import Volume

ZERO_FLOOR = 1e-6
# every axis of a channel whose registration raised
FAILED_ERROR = math.inf
MIN_FIT_ROWS = 10
SUCCESS_CUTOFF = 1.0
AXES = ("x", "y", "z")
REGRESSORS = ("inu", "noise", "ds", "offset")


class RankDeficientError(ValueError):
    """Raised when the regression design matrix does not have full column rank."""


class ErrorRow(NamedTuple):
    trial: int
    method: str
    channel: int
    kind: str
    """``t`` for translation (mm), ``r`` for rotation (degrees)."""
    axis: str
    error: float
    inu: float
    noise: float
    ds: float
    offset: float
    """True offset along this axis as a percentage of the maximum simulated offset."""


ERROR_COLUMNS = ErrorRow._fields


class ErrorTable:
    def __init__(self, rows: Iterable[ErrorRow] = ()):
        self.rows = list(rows)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def methods(self) -> list[str]:
        return sorted({row.method for row in self.rows})

    def select(self, *, method: str | None = None, kind: str | None = None) -> "ErrorTable":
        return ErrorTable(
            row
            for row in self.rows
            if (method is None or row.method == method) and (kind is None or row.kind == kind)
        )

    def errors(self) -> np.ndarray:
        return np.array([row.error for row in self.rows], dtype=np.float64)

    def failed(self) -> "ErrorTable":
        return ErrorTable(row for row in self.rows if not math.isfinite(row.error))

    def succeeded(self) -> "ErrorTable":
        return ErrorTable(row for row in self.rows if math.isfinite(row.error))

    def to_csv(self, path: Path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(ERROR_COLUMNS)
            writer.writerows((*row[:5], repr(row.error), *(repr(v) for v in row[6:])) for row in self.rows)

    @classmethod
    def from_csv(cls, path: Path) -> "ErrorTable":
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames is None or tuple(reader.fieldnames) != ERROR_COLUMNS:
                raise ValueError(f"'{path}' does not have the error table columns {ERROR_COLUMNS}")
            rows = []
            for line, raw in enumerate(reader, start=2):
                try:
                    row = ErrorRow(
                        trial=int(raw["trial"]),
                        method=raw["method"],
                        channel=int(raw["channel"]),
                        kind=raw["kind"],
                        axis=raw["axis"],
                        **{name: float(raw[name]) for name in ("error", *REGRESSORS)},
                    )
                except (TypeError, ValueError) as e:
                    raise ValueError(f"'{path}' line {line}: {e}") from e
                if row.kind not in ("t", "r") or row.axis not in AXES or not row.error >= 0:
                    raise ValueError(f"'{path}' line {line}: invalid row {raw}")
                rows.append(row)
        return cls(rows)


def param_error(q_est, q_true) -> tuple[np.ndarray, np.ndarray]:
    delta = exp_se3(q_est) @ np.linalg.inv(exp_se3(q_true))
    translation, angles = euler_from_rigid(delta)
    return np.abs(translation), np.abs(angles)


def table_from_records(records: Iterable) -> ErrorTable:
    """Error rows for every (trial, method, moving channel).

    A method whose registration raised on a trial contributes rows with error ``FAILED_ERROR``, so the
    trial stays in that method's success-rate denominator.
    """
    rows = []
    for record in records:
        regressors = record.regressors
        for method in sorted({*record.estimates, *record.failures}):
            estimates = record.estimates.get(method)
            for channel in range(1, len(record.truths)):
                q_true = record.truths[channel]
                if estimates is None:
                    abs_t = abs_r = np.full(3, FAILED_ERROR)
                else:
                    abs_t, abs_r = param_error(estimates[channel], q_true)
                true_t, true_r = euler_from_rigid(exp_se3(q_true))
                for kind, errors, truth, limit in (
                    ("t", abs_t, true_t, record.translation_range),
                    ("r", abs_r, true_r, record.rotation_range),
                ):
                    for axis, error, component in zip(AXES, errors, truth):
                        offset = 100.0 * abs(component) / limit if limit > 0 else 0.0
                        rows.append(
                            ErrorRow(record.trial, method, channel, kind, axis, float(error), offset=offset, **regressors)
                        )
    return ErrorTable(rows)


def geometric_stats(values: Sequence[float] | np.ndarray) -> tuple[float, float]:
    """Geometric mean and geometric standard deviation of the finite values, floored at 1e-6.

    NaN for both when no finite value is left.
    """
    values = np.asarray(values, dtype=np.float64)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return math.nan, math.nan
    logs = np.log(np.maximum(values, ZERO_FLOOR))
    return float(np.exp(logs.mean())), float(np.exp(logs.std()))


@dataclass
class LogLinearFit:
    intercept: float
    inu: float
    noise: float
    ds: float
    offset: float
    residual_variance: float
    n: int

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([self.intercept, self.inu, self.noise, self.ds, self.offset])


def loglinear_fit(table: ErrorTable, kind: str = "t") -> LogLinearFit:
    """Least squares of log(error) on 1 + INU + noise + downsampling + offset, one row per axis error.

    Rows of failed registrations are left out.
    """
    rows = table.succeeded().select(kind=kind).rows
    if len(rows) < MIN_FIT_ROWS:
        raise ValueError(f"Need at least {MIN_FIT_ROWS} rows for the log-linear fit, got {len(rows)}")
    design = np.array([[1.0, *(getattr(row, name) for name in REGRESSORS)] for row in rows])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise RankDeficientError(f"Regressors {REGRESSORS} are collinear or constant over {len(rows)} rows")
    target = np.log(np.maximum([row.error for row in rows], ZERO_FLOOR))
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    residuals = target - design @ coef
    dof = max(len(rows) - design.shape[1], 1)
    return LogLinearFit(*(float(c) for c in coef), float(residuals @ residuals / dof), len(rows))


def corner_error(R_est: np.ndarray, R_true: np.ndarray, v: Volume) -> tuple[float, float]:
    """Median and maximum displacement (mm) of the eight corner voxels of ``v`` between two transforms."""
    corners = np.array(np.meshgrid(*[[0.0, n - 1.0] for n in v.dims], indexing="ij")).reshape(3, -1).T
    world = v.voxel_to_world(corners)
    homogeneous = np.column_stack([world, np.ones(len(world))])
    moved_est = homogeneous @ np.asarray(R_est).T
    moved_true = homogeneous @ np.asarray(R_true).T
    displacement = np.linalg.norm(moved_est[:, :3] - moved_true[:, :3], axis=1)
    return float(np.median(displacement)), float(displacement.max())


@dataclass
class MethodSummary:
    method: str
    n_rows: int
    t_gmean: float
    t_gsd: float
    r_gmean: float
    r_gsd: float
    t_success: float
    r_success: float
    t_normalised: float
    r_normalised: float
    failed_trials: int
    fit: LogLinearFit | None

    def to_dict(self) -> dict:
        return asdict(self)


def success_rate(errors: np.ndarray) -> float:
    """Fraction of errors below 1 mm (or 1 degree); failed registrations count as misses."""
    return float(np.mean(errors < SUCCESS_CUTOFF)) if errors.size else math.nan


def summarize(table: ErrorTable) -> list[MethodSummary]:
    """Per-method geometric statistics, success rates at 1 mm / 1 deg, and the translation log-linear fit.

    Normalised values divide a method's geometric mean by the geometric mean over all methods. Failed
    registrations count as unsuccessful and are left out of the geometric statistics; a method without
    any finite error of one kind gets NaN statistics for it.
    """
    if len(table) == 0:
        raise ValueError("Cannot summarise an empty error table")
    overall = {kind: geometric_stats(table.select(kind=kind).errors())[0] for kind in ("t", "r")}
    summaries = []
    for method in table.methods:
        selected = table.select(method=method)
        t = selected.select(kind="t").errors()
        r = selected.select(kind="r").errors()
        t_gmean, t_gsd = geometric_stats(t)
        r_gmean, r_gsd = geometric_stats(r)
        try:
            fit = loglinear_fit(selected, kind="t")
        except ValueError:
            fit = None
        summaries.append(
            MethodSummary(
                method=method,
                n_rows=len(t) + len(r),
                t_gmean=t_gmean,
                t_gsd=t_gsd,
                r_gmean=r_gmean,
                r_gsd=r_gsd,
                t_success=success_rate(t),
                r_success=success_rate(r),
                t_normalised=t_gmean / overall["t"],
                r_normalised=r_gmean / overall["r"],
                failed_trials=len({row.trial for row in selected.failed().rows}),
                fit=fit,
            )
        )
    return summaries


def render_report(summaries: Sequence[MethodSummary], template: str, **kwargs) -> str:
    return Template(template, undefined=StrictUndefined).render(summaries=summaries, **kwargs)

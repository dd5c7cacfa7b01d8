"""Live view of a simulation run: one bar per cost, the trials in flight and a YAML status report."""

import collections
import time
from collections.abc import Sequence
from dataclasses import dataclass, field
from datetime import timedelta
from pathlib import Path
from threading import Lock

import numpy as np
import yaml
from rich.console import Group
from rich.progress import (
    BarColumn,
    MofNCompleteColumn,
    Progress,
    SpinnerColumn,
    TaskID,
    TaskProgressColumn,
    TextColumn,
    TimeElapsedColumn,
)
from rich.table import Table

import njtvreg.costs
from njtvreg.evaluation import SUCCESS_CUTOFF, param_error
from njtvreg.simulation.run import TrialRecord, trial_id


def _fit(s: str, width: int) -> str:
    if len(s) > width:
        s = s[: width - 3] + "..."
    return f"{s:<{width}}"


def recovered(record: TrialRecord, cost: str) -> bool:
    """Every moving channel of the trial is within 1 mm and 1 degree on every axis."""
    estimates = record.estimates.get(cost)
    if estimates is None:
        return False
    for q_est, q_true in zip(estimates[1:], record.truths[1:]):
        abs_t, abs_r = param_error(q_est, q_true)
        if np.any(abs_t >= SUCCESS_CUTOFF) or np.any(abs_r >= SUCCESS_CUTOFF):
            return False
    return True


@dataclass
class CostTally:
    registered: int = 0
    recovered: int = 0
    failed_trials: list[int] = field(default_factory=list)


class SimulationProgress:
    def __init__(self, n_trials: int, costs: Sequence[str], yaml_report_path: Path | None = None):
        """Track a simulation run.

        Args:
            n_trials: Number of trials in the run
            costs: Costs registered on every trial, one progress bar each
            yaml_report_path: Where to keep the exit statuses and per-cost tallies up to date
        """
        self._lock = Lock()
        self._start_time = time.time()
        self._n_trials = n_trials
        self._yaml_report_path = yaml_report_path
        self._trials_by_status: dict[str, list[int]] = collections.defaultdict(list)
        self.tallies = {cost: CostTally() for cost in costs}

        self._cost_bars = Progress(
            TextColumn("[bold green]{task.description:>8}"),
            BarColumn(),
            MofNCompleteColumn(),
            TextColumn("[green]{task.fields[recovered]} within 1 mm / 1 deg"),
            TextColumn("[red]{task.fields[failed]} failed"),
        )
        self._cost_tasks: dict[str, TaskID] = {
            cost: self._cost_bars.add_task(cost, total=n_trials, recovered=0, failed=0) for cost in costs
        }
        self._trial_spinners = Progress(
            SpinnerColumn(spinner_name="dots2"),
            TextColumn("{task.description}"),
            TextColumn("{task.fields[status]}"),
            TimeElapsedColumn(),
        )
        self._trial_tasks: dict[int, TaskID] = {}
        self._overall = Progress(
            TextColumn("[cyan]Trials"),
            BarColumn(),
            MofNCompleteColumn(),
            TaskProgressColumn(),
            TimeElapsedColumn(),
            TextColumn("[cyan]{task.fields[eta]}"),
            TextColumn("{task.fields[n_evals]} cost evaluations"),
            speed_estimate_period=60 * 5,
        )
        self._overall_task = self._overall.add_task("trials", total=n_trials, eta="", n_evals=0)
        self.render_group = Group(Table(), self._cost_bars, self._trial_spinners, self._overall)

    @property
    def n_completed(self) -> int:
        return sum(len(trials) for trials in self._trials_by_status.values())

    def eta(self) -> str:
        if self.n_completed == 0:
            return ""
        remaining = (time.time() - self._start_time) / self.n_completed * (self._n_trials - self.n_completed)
        return f"eta: {timedelta(seconds=int(remaining))}"

    def on_trial_start(self, trial: int) -> None:
        with self._lock:
            self._trial_tasks[trial] = self._trial_spinners.add_task(
                _fit(trial_id(trial), 12), total=None, status="Simulating"
            )

    def update_trial_status(self, trial: int, message: str) -> None:
        with self._lock:
            if trial in self._trial_tasks:
                self._trial_spinners.update(self._trial_tasks[trial], status=_fit(message, 30))
            self._overall.update(self._overall_task, n_evals=njtvreg.costs.GLOBAL_EVAL_STATS.n_evals)

    def on_trial_end(self, record: TrialRecord) -> None:
        with self._lock:
            for cost, tally in self.tallies.items():
                if cost in record.failures:
                    tally.failed_trials.append(record.trial)
                elif cost in record.estimates:
                    tally.registered += 1
                    tally.recovered += int(recovered(record, cost))
                else:
                    continue
                self._advance_cost(cost)
        self._finish(record.trial, record.exit_status)

    def on_uncaught_exception(self, trial: int, exception: Exception) -> None:
        with self._lock:
            for cost, tally in self.tallies.items():
                tally.failed_trials.append(trial)
                self._advance_cost(cost)
        self._finish(trial, f"Uncaught {type(exception).__name__}")

    def _advance_cost(self, cost: str) -> None:
        tally = self.tallies[cost]
        self._cost_bars.update(
            self._cost_tasks[cost], advance=1, recovered=tally.recovered, failed=len(tally.failed_trials)
        )

    def _finish(self, trial: int, status: str) -> None:
        with self._lock:
            self._trials_by_status[status].append(trial)
            if (task := self._trial_tasks.pop(trial, None)) is not None:
                self._trial_spinners.remove_task(task)
            self._overall.update(
                self._overall_task,
                advance=1,
                eta=self.eta(),
                n_evals=njtvreg.costs.GLOBAL_EVAL_STATS.n_evals,
            )
            self.render_group.renderables[0] = self.status_table()
            if self._yaml_report_path is not None:
                self._yaml_report_path.write_text(yaml.safe_dump(self.overview(), sort_keys=False))

    def status_table(self) -> Table:
        """Exit statuses, most frequent first, with the latest trials that ended in each."""
        t = Table()
        t.add_column("Exit status")
        t.add_column("Trials", justify="right", style="bold cyan")
        t.add_column("Latest")
        for status, trials in sorted(self._trials_by_status.items(), key=lambda item: -len(item[1])):
            t.add_row(status, str(len(trials)), _fit(", ".join(str(i) for i in reversed(trials[-8:])), 40))
        return t

    def overview(self) -> dict:
        return {
            "trials_by_exit_status": {status: sorted(trials) for status, trials in self._trials_by_status.items()},
            "costs": {
                cost: {
                    "registered": tally.registered,
                    "recovered": tally.recovered,
                    "failed_trials": sorted(tally.failed_trials),
                }
                for cost, tally in self.tallies.items()
            },
        }

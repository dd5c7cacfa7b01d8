"""Cost functions for rigid registration and a shortcut registry to select them by name.

All costs are minimised: ``njtv`` is groupwise, the baselines ``mi``, ``nmi``, ``ecc`` and ``ncc``
compare one moving image against the fixed one.
"""

import importlib
import os
import threading


class GlobalEvaluationStats:
    """Global cost evaluation counter with an optional limit."""

    def __init__(self):
        self._n_evals = 0
        self._lock = threading.Lock()
        self.eval_limit = int(os.getenv("NJTV_GLOBAL_EVAL_LIMIT", "0"))
        if self.eval_limit > 0 and not os.getenv("NJTV_SILENT_STARTUP"):
            print(f"Global cost evaluation limit: {self.eval_limit}")

    def add(self, n: int = 1) -> None:
        """Count cost evaluations, checking the limit."""
        with self._lock:
            self._n_evals += n
            n_evals = self._n_evals
        if 0 < self.eval_limit < n_evals:
            raise RuntimeError(f"Global cost evaluation limit exceeded: {n_evals} > {self.eval_limit}")

    def reset(self) -> None:
        with self._lock:
            self._n_evals = 0

    @property
    def n_evals(self) -> int:
        return self._n_evals


GLOBAL_EVAL_STATS = GlobalEvaluationStats()


_COST_CLASS_MAPPING = {
    "njtv": "njtvreg.costs.njtv.NJTVCost",
    "mi": "njtvreg.costs.baselines.MutualInformationCost",
    "nmi": "njtvreg.costs.baselines.NormalisedMutualInformationCost",
    "ecc": "njtvreg.costs.baselines.EntropyCorrelationCost",
    "ncc": "njtvreg.costs.baselines.NormalisedCrossCorrelationCost",
}

COST_NAMES = tuple(_COST_CLASS_MAPPING)
PAIRWISE_COST_NAMES = tuple(name for name in COST_NAMES if name != "njtv")


def get_cost_class(cost: str) -> type:
    """Select a cost class from a shortcut name (e.g. ``mi``) or a full import path."""
    full_path = _COST_CLASS_MAPPING.get(cost, cost)
    try:
        module_name, class_name = full_path.rsplit(".", 1)
        module = importlib.import_module(module_name)
        return getattr(module, class_name)
    except (ValueError, ImportError, AttributeError):
        msg = f"Unknown cost: {cost} (resolved to {full_path}, available: {list(_COST_CLASS_MAPPING)})"
        raise ValueError(msg)

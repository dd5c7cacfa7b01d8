"""Groupwise (NJTV) and pairwise (baseline) rigid registration with a coarse-to-fine pyramid.

Rigid parameters live in world units, so each pyramid level starts from the previous level's
solution unchanged. The fixed channel always keeps the identity transform.
"""

from collections.abc import Sequence
from dataclasses import asdict, dataclass, field

import numpy as np

from njtvreg import CostFunction
from njtvreg.costs import COST_NAMES, PAIRWISE_COST_NAMES, get_cost_class
from njtvreg.costs.grid import JitteredGrid
from njtvreg.costs.njtv import NJTVCost, TooFewChannelsError
from njtvreg.mixtures import ChannelScale, estimate_lambda
from njtvreg.optim.powell import StoppingCriteria, powell_minimize
from njtvreg.se3 import exp_se3, transform_from_json, transform_to_json
from njtvreg.utils.log import logger
from njtvreg.volume import Volume, downsample, reslice

APPLY_MODES = ("header", "reslice")


@dataclass
class RegistrationOptions:
    cost: str = "njtv"
    fixed_index: int = 0
    pyramid: list[int] = field(default_factory=lambda: [8, 1])
    seed: int | None = 0
    """Jitter seed; None disables the sampling-grid jitter."""
    translation_tol: float = 0.02
    rotation_tol: float = 0.001
    max_cycles: int = 64
    line_tol: float = 1e-4
    threads: int = 1
    max_points: int | None = None
    """Cap on fixed sampling points per evaluation (the grid is strided beyond it)."""
    bins: int = 64
    fwhm: float = 7.0
    lambda_bins: int = 1024

    def __post_init__(self):
        if self.cost not in COST_NAMES:
            raise ValueError(f"Unknown cost {self.cost!r}, available: {list(COST_NAMES)}")
        if self.fixed_index < 0:
            raise ValueError(f"fixed_index must be >= 0, got {self.fixed_index}")
        self.pyramid = [int(f) for f in self.pyramid]
        if not self.pyramid or min(self.pyramid) < 1:
            raise ValueError(f"Pyramid factors must be positive, got {self.pyramid}")
        if any(a < b for a, b in zip(self.pyramid, self.pyramid[1:])):
            raise ValueError(f"Pyramid factors must be non-increasing, got {self.pyramid}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")

    def criteria(self, n_transforms: int) -> StoppingCriteria:
        return StoppingCriteria.for_rigid(
            n_transforms,
            translation_tol=self.translation_tol,
            rotation_tol=self.rotation_tol,
            max_cycles=self.max_cycles,
            line_tol=self.line_tol,
        )

    def cost_kwargs(self) -> dict:
        kwargs: dict = {"threads": self.threads, "max_points": self.max_points}
        if self.cost != "njtv":
            kwargs |= {"bins": self.bins, "fwhm": self.fwhm}
        return kwargs


@dataclass
class LevelDiagnostics:
    factor: int
    cost_before: float
    cost_after: float
    cycles: int
    n_evals: int
    channel: int | None = None
    """Moving channel of a pairwise run; None for groupwise levels."""


@dataclass
class RegistrationResult:
    cost: str
    fixed_index: int
    params: np.ndarray
    """Shape ``(C, 6)``; the fixed channel's row is zero."""
    costs: list[float]
    levels: list[LevelDiagnostics] = field(default_factory=list)
    scales: list[ChannelScale] | None = field(default=None, repr=False)

    @property
    def matrices(self) -> list[np.ndarray]:
        return [exp_se3(q) for q in self.params]

    def to_dict(self) -> dict:
        return {
            "cost": self.cost,
            "fixed_index": self.fixed_index,
            "channels": [
                {**transform_to_json(q), "cost": float(c)} for q, c in zip(self.params, self.costs, strict=True)
            ],
            "levels": [asdict(level) for level in self.levels],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "RegistrationResult":
        channels = obj["channels"]
        return cls(
            cost=obj["cost"],
            fixed_index=int(obj["fixed_index"]),
            params=np.array([transform_from_json(c) for c in channels]),
            costs=[float(c["cost"]) for c in channels],
            levels=[LevelDiagnostics(**level) for level in obj.get("levels", [])],
        )


def pyramid_factors(dims: Sequence[int], factor: int) -> tuple[int, int, int]:
    """Per-axis pooling factor, reduced on thin axes so that at least four voxels remain."""
    return tuple(max(1, min(factor, n // 4)) for n in dims)  # type: ignore[return-value]


def _fixed_first(items: Sequence, fixed_index: int) -> list:
    if not 0 <= fixed_index < len(items):
        raise ValueError(f"fixed_index {fixed_index} out of range for {len(items)} volumes")
    return [items[fixed_index]] + [item for i, item in enumerate(items) if i != fixed_index]


def _run_pyramid(
    volumes: Sequence[Volume],
    scales: Sequence[ChannelScale] | None,
    opts: RegistrationOptions,
    channel: int | None = None,
) -> tuple[np.ndarray, float, list[LevelDiagnostics]]:
    """Optimise the stacked parameters of ``volumes[1:]`` against ``volumes[0]`` level by level."""
    cost_class = get_cost_class(opts.cost)
    n_moving = len(volumes) - 1
    crit = opts.criteria(n_moving)
    x = np.zeros(6 * n_moving)
    fun = float("nan")
    levels = []
    for level, factor in enumerate(opts.pyramid):
        level_volumes = [downsample(v, pyramid_factors(v.dims, factor)) for v in volumes]
        grid = JitteredGrid(level_volumes[0].dims, opts.seed, level)
        cost: CostFunction = cost_class.from_volumes(level_volumes, scales, grid, **opts.cost_kwargs())
        if cost.n_params != x.size:
            raise ValueError(f"{opts.cost} cost expects {cost.n_params} parameters, got {x.size}")
        before = cost(x)
        result = powell_minimize(cost, x, crit)
        x, fun = result.x, result.fun
        levels.append(LevelDiagnostics(factor, before, fun, result.cycles, result.n_evals, channel))
        logger.info(
            f"[bold]{opts.cost}[/bold] level x{factor}{'' if channel is None else f' channel {channel}'}: "
            f"cost {before:.6g} -> {fun:.6g} in {result.cycles} cycles, {result.n_evals} evaluations"
        )
    return x.reshape(n_moving, 6), fun, levels


def estimate_scales(volumes: Sequence[Volume], bins: int = 1024) -> list[ChannelScale]:
    return [estimate_lambda(v, bins) for v in volumes]


def register_groupwise(volumes: Sequence[Volume], opts: RegistrationOptions | None = None) -> RegistrationResult:
    opts = opts or RegistrationOptions()
    if len(volumes) < 2:
        raise TooFewChannelsError(f"Groupwise registration needs at least 2 volumes, got {len(volumes)}")
    if opts.cost != "njtv":
        raise ValueError(f"Groupwise registration uses the njtv cost, got {opts.cost!r}")
    scales = estimate_scales(volumes, opts.lambda_bins)
    ordered = _fixed_first(volumes, opts.fixed_index)
    moving_params, fun, levels = _run_pyramid(ordered, _fixed_first(scales, opts.fixed_index), opts)
    params = np.zeros((len(volumes), 6))
    moving_indices = [i for i in range(len(volumes)) if i != opts.fixed_index]
    params[moving_indices] = moving_params
    return RegistrationResult("njtv", opts.fixed_index, params, [fun] * len(volumes), levels, scales)


def register_pairwise(fixed: Volume, moving: Volume, opts: RegistrationOptions) -> RegistrationResult:
    if opts.cost not in PAIRWISE_COST_NAMES:
        raise ValueError(f"Pairwise registration needs one of {list(PAIRWISE_COST_NAMES)}, got {opts.cost!r}")
    q, fun, levels = _run_pyramid([fixed, moving], None, opts)
    return RegistrationResult(opts.cost, 0, np.vstack([np.zeros(6), q]), [fun, fun], levels)


def register(volumes: Sequence[Volume], opts: RegistrationOptions | None = None) -> RegistrationResult:
    """Groupwise for ``njtv``; otherwise every moving channel is registered to the fixed one on its own."""
    opts = opts or RegistrationOptions()
    if opts.cost == "njtv":
        return register_groupwise(volumes, opts)
    if len(volumes) < 2:
        raise TooFewChannelsError(f"Registration needs at least 2 volumes, got {len(volumes)}")
    fixed = _fixed_first(volumes, opts.fixed_index)[0]
    params = np.zeros((len(volumes), 6))
    costs = [0.0] * len(volumes)
    levels: list[LevelDiagnostics] = []
    for c, moving in enumerate(volumes):
        if c == opts.fixed_index:
            continue
        q, fun, channel_levels = _run_pyramid([fixed, moving], None, opts, channel=c)
        params[c], costs[c] = q[0], fun
        levels.extend(channel_levels)
    costs[opts.fixed_index] = float(np.mean([c for i, c in enumerate(costs) if i != opts.fixed_index]))
    return RegistrationResult(opts.cost, opts.fixed_index, params, costs, levels)


def apply_result(volumes: Sequence[Volume], result: RegistrationResult, mode: str = "header") -> list[Volume]:
    """Realign ``volumes`` with an estimate.

    ``header`` premultiplies each moving world matrix by its transform, so registering the output
    again yields the identity. ``reslice`` resamples each moving volume onto the fixed grid.
    """
    if mode not in APPLY_MODES:
        raise ValueError(f"Unknown apply mode {mode!r}, available: {APPLY_MODES}")
    if len(volumes) != len(result.params):
        raise ValueError(f"Result has {len(result.params)} transforms for {len(volumes)} volumes")
    fixed = volumes[result.fixed_index]
    out = []
    for c, (v, matrix) in enumerate(zip(volumes, result.matrices)):
        if c == result.fixed_index:
            out.append(v)
        elif mode == "header":
            out.append(v.with_world(matrix @ v.world))
        else:
            out.append(reslice(v, fixed.world, fixed.dims, transform=matrix))
    return out

"""Normalised joint total variation (NJTV) over precomputed gradient-magnitude channels.

For C channels with unit-free gradient magnitudes m_c = lambda_c * |grad f_c| the pointwise
integrand is ``sqrt(C) * sqrt(sum_c m_c^2) - sum_c m_c``. It is nonnegative and vanishes exactly
where all magnitudes agree. The cost is its sum over the (jittered) fixed grid times the fixed voxel
volume. The fixed channel is channel 0; the others are pulled back through their rigid transforms.
"""

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from njtvreg.costs import GLOBAL_EVAL_STATS
from njtvreg.costs.grid import GroupAlignment, JitteredGrid, chunked_sum
from njtvreg.mixtures import ChannelScale
from njtvreg.se3 import exp_se3
from njtvreg.spline import SplineField, spline_encode, spline_sample
from njtvreg.volume import Volume, apply_affine, gradient_magnitude

SWEEP_MEASURES = ("njtv", "unmodulated", "msd")


class TooFewChannelsError(ValueError):
    """Raised when a joint cost gets fewer than two channels."""


@dataclass(frozen=True, eq=False)
class ChannelField:
    mag: SplineField
    scale: ChannelScale

    @property
    def world(self) -> np.ndarray:
        return self.mag.world

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.mag.dims

    @property
    def voxel_volume(self) -> float:
        return float(abs(np.linalg.det(self.world[:3, :3])))


def prepare_channels(volumes: Sequence[Volume], scales: Sequence[ChannelScale]) -> list[ChannelField]:
    """Gradient magnitudes scaled by lambda and spline-encoded, once per registration level."""
    if len(volumes) < 2:
        raise TooFewChannelsError(f"Need at least 2 channels, got {len(volumes)}")
    if len(scales) != len(volumes):
        raise ValueError(f"Got {len(scales)} channel scales for {len(volumes)} volumes")
    return [ChannelField(spline_encode(gradient_magnitude(v, s.lam)), s) for v, s in zip(volumes, scales)]


def integrand(m: np.ndarray, modulated: bool = True) -> np.ndarray:
    """Pointwise NJTV integrand over the last axis of ``m`` (one entry per channel)."""
    m = np.asarray(m, dtype=np.float64)
    joint = np.sqrt(np.sum(m**2, axis=-1))
    if modulated:
        joint = np.sqrt(m.shape[-1]) * joint
    return joint - np.sum(m, axis=-1)


@dataclass
class NJTVCostConfig:
    threads: int = 1
    max_points: int | None = None


class NJTVCost:
    """Groupwise cost over the stacked parameter vector of all moving channels."""

    def __init__(
        self,
        channels: Sequence[ChannelField],
        grid: JitteredGrid | None = None,
        *,
        config_class: Callable = NJTVCostConfig,
        **kwargs,
    ):
        if len(channels) < 2:
            raise TooFewChannelsError(f"Need at least 2 channels, got {len(channels)}")
        self.config = config_class(**kwargs)
        self.channels = list(channels)
        fixed = self.channels[0]
        self.grid = grid if grid is not None else JitteredGrid(fixed.dims)
        points = self.grid.points(self.config.max_points)
        self._world_points = apply_affine(fixed.world, points)
        self._fixed_mags = np.maximum(np.nan_to_num(spline_sample(fixed.mag, points), nan=0.0), 0.0)
        self.n_params = 6 * (len(self.channels) - 1)
        self.n_evals = 0

    @classmethod
    def from_volumes(
        cls, volumes: Sequence[Volume], scales: Sequence[ChannelScale], grid: JitteredGrid | None = None, **kwargs
    ) -> "NJTVCost":
        return cls(prepare_channels(volumes, scales), grid, **kwargs)

    @property
    def n_points(self) -> int:
        return len(self._world_points)

    def sample_magnitudes(self, alignment: GroupAlignment, chunk: slice = slice(None)) -> np.ndarray:
        """Magnitudes of every channel at the fixed sampling points, shape ``(n, C)``.

        Moving samples outside their field of view count as zero; spline undershoot is clamped at zero.
        """
        if alignment.n_moving != len(self.channels) - 1:
            raise ValueError(f"Expected {len(self.channels) - 1} moving transforms, got {alignment.n_moving}")
        world = self._world_points[chunk]
        mags = np.empty((len(world), len(self.channels)))
        mags[:, 0] = self._fixed_mags[chunk]
        for c, (channel, q) in enumerate(zip(self.channels[1:], alignment.params), start=1):
            world_to_voxel = np.linalg.inv(channel.world) @ np.linalg.inv(exp_se3(q))
            values = spline_sample(channel.mag, apply_affine(world_to_voxel, world))
            mags[:, c] = np.maximum(np.nan_to_num(values, nan=0.0), 0.0)
        return mags

    def terms(self, alignment: GroupAlignment) -> dict[str, float]:
        """NJTV together with its joint (JTV) and per-channel (CTV) parts, all scaled by the fixed voxel volume."""

        def partial(chunk: slice) -> np.ndarray:
            mags = self.sample_magnitudes(alignment, chunk)
            return np.array(
                [integrand(mags).sum(), np.sqrt(np.sum(mags**2, axis=-1)).sum(), mags.sum()],
            )

        njtv, jtv, ctv = chunked_sum(partial, self.n_points, threads=self.config.threads)
        self.n_evals += 1
        GLOBAL_EVAL_STATS.add()
        scale = self.channels[0].voxel_volume
        return {"njtv": float(njtv * scale), "jtv": float(jtv * scale), "ctv": float(ctv * scale)}

    def __call__(self, x: np.ndarray) -> float:
        return self.terms(GroupAlignment(x))["njtv"]


def njtv_cost(channels: Sequence[ChannelField], a: GroupAlignment, grid: JitteredGrid | None = None) -> float:
    return NJTVCost(channels, grid).terms(a)["njtv"]


def jtv_cost(channels: Sequence[ChannelField], a: GroupAlignment, grid: JitteredGrid | None = None) -> float:
    return NJTVCost(channels, grid).terms(a)["jtv"]


def ctv_cost(channels: Sequence[ChannelField], a: GroupAlignment, grid: JitteredGrid | None = None) -> float:
    return NJTVCost(channels, grid).terms(a)["ctv"]


def sweep_values(start: float, stop: float, step: float) -> np.ndarray:
    if step <= 0 or stop < start:
        raise ValueError(f"Invalid sweep range: start={start}, stop={stop}, step={step}")
    return start + step * np.arange(int(round((stop - start) / step)) + 1)


def integrand_sweep(
    C: int,
    fixed_mags: Sequence[float],
    sweep_range: tuple[float, float, float] = (0.0, 16.0, 0.01),
    measure: str = "njtv",
) -> np.ndarray:
    """Integrand as a function of the last channel's magnitude, others held at ``fixed_mags``.

    Returns an ``(n, 2)`` array of ``(m, value)`` rows, written to CSV as ``m,<measure>``. ``measure`` is ``njtv``, ``unmodulated``
    (no sqrt(C) factor) or ``msd`` (mean squared difference to the fixed magnitudes).
    """
    if C < 2:
        raise TooFewChannelsError(f"Need at least 2 channels, got {C}")
    if len(fixed_mags) != C - 1:
        raise ValueError(f"Need {C - 1} fixed magnitudes for C={C}, got {len(fixed_mags)}")
    if measure not in SWEEP_MEASURES:
        raise ValueError(f"Unknown sweep measure {measure!r}, available: {SWEEP_MEASURES}")
    swept = sweep_values(*sweep_range)
    fixed = np.asarray(fixed_mags, dtype=np.float64)
    if measure == "msd":
        values = np.mean((swept[:, None] - fixed) ** 2, axis=1)
    else:
        m = np.column_stack([np.broadcast_to(fixed, (len(swept), C - 1)), swept])
        values = integrand(m, modulated=measure == "njtv")
    return np.column_stack([swept, values])

"""Pairwise baselines: joint-histogram information measures (MI, NMI, ECC) and normalised cross correlation.

Every cost is returned negated so that all registration costs are minimised.
"""

from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import ClassVar

import numpy as np
from scipy import ndimage, special

from njtvreg.costs import GLOBAL_EVAL_STATS
from njtvreg.costs.grid import JitteredGrid, chunked_sum, pullback_matrix
from njtvreg.mixtures import ChannelScale
from njtvreg.volume import Volume, apply_affine, sample_grid, trilinear_sample

FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))


class NoOverlapError(ValueError):
    """Raised when fixed and moving images share no sampled voxel."""

    def __init__(self, params):
        self.params = np.asarray(params, dtype=np.float64)
        super().__init__(f"Fixed and moving images do not overlap at parameters {self.params.tolist()}")


class ZeroVarianceError(ValueError):
    """Raised when one image is constant over the overlap."""


@dataclass(frozen=True, eq=False)
class JointHistogram:
    counts: np.ndarray
    fixed_window: tuple[float, float]
    moving_window: tuple[float, float]

    @property
    def bins(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    def probabilities(self) -> np.ndarray:
        return self.counts / self.total


def _entropies(h: JointHistogram) -> tuple[float, float, float]:
    """Marginal and joint entropies (nats), with 0 log 0 = 0."""
    p = h.probabilities()
    return (
        float(special.entr(p.sum(axis=1)).sum()),
        float(special.entr(p.sum(axis=0)).sum()),
        float(special.entr(p).sum()),
    )


def mi(h: JointHistogram) -> float:
    h1, h2, h12 = _entropies(h)
    return h1 + h2 - h12


def nmi(h: JointHistogram) -> float:
    h1, h2, h12 = _entropies(h)
    if h12 <= 0.0:
        return 1.0
    return (h1 + h2) / h12


def ecc(h: JointHistogram) -> float:
    h1, h2, h12 = _entropies(h)
    if h1 + h2 <= 0.0:
        return 0.0
    return 2.0 - 2.0 * h12 / (h1 + h2)


def _intensity_window(v: Volume) -> tuple[float, float]:
    values = v.valid_values
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        raise ZeroVarianceError(f"Image is constant ({lo}); no intensity window")
    return lo, hi


def _bin_positions(values: np.ndarray, window: tuple[float, float], bins: int) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = window
    u = np.clip((values - lo) / (hi - lo), 0.0, 1.0) * (bins - 1)
    lower = np.minimum(np.floor(u).astype(np.intp), bins - 2)
    return lower, u - lower


@dataclass
class PairwiseCostConfig:
    threads: int = 1
    max_points: int | None = None
    bins: int = 64
    fwhm: float = 7.0


class PairwiseCost:
    """Base class: samples (fixed, moving) intensity pairs over the jittered fixed grid."""

    name: ClassVar[str] = ""
    n_params = 6

    def __init__(
        self,
        fixed: Volume,
        moving: Volume,
        grid: JitteredGrid | None = None,
        *,
        config_class: Callable = PairwiseCostConfig,
        **kwargs,
    ):
        self.config = config_class(**kwargs)
        if self.config.bins < 2:
            raise ValueError(f"Need at least 2 histogram bins, got {self.config.bins}")
        self.fixed = fixed
        self.moving = moving
        self.grid = grid if grid is not None else JitteredGrid(fixed.dims)
        points = self.grid.points(self.config.max_points)
        values = trilinear_sample(fixed, points)
        keep = ~np.isnan(values) & ~_flagged(fixed, points)
        self._fixed_points = points[keep]
        self._fixed_values = values[keep]
        self.fixed_window = _intensity_window(fixed)
        self.moving_window = _intensity_window(moving)
        self.n_evals = 0

    @classmethod
    def from_volumes(
        cls,
        volumes: Sequence[Volume],
        scales: Sequence[ChannelScale] | None = None,
        grid: JitteredGrid | None = None,
        **kwargs,
    ) -> "PairwiseCost":
        if len(volumes) != 2:
            raise ValueError(f"Pairwise costs take exactly 2 volumes, got {len(volumes)}")
        return cls(volumes[0], volumes[1], grid, **kwargs)

    @property
    def n_points(self) -> int:
        return len(self._fixed_points)

    def pairs(self, q, chunk: slice = slice(None)) -> tuple[np.ndarray, np.ndarray]:
        """Fixed and moving intensities at the sampling points that fall inside the moving image."""
        to_moving = pullback_matrix(q, self.fixed.world, self.moving.world)
        moving_points = apply_affine(to_moving, self._fixed_points[chunk])
        moving_values = trilinear_sample(self.moving, moving_points)
        keep = ~np.isnan(moving_values) & ~_flagged(self.moving, moving_points)
        return self._fixed_values[chunk][keep], moving_values[keep]

    def histogram(self, q) -> JointHistogram:
        bins = self.config.bins

        def partial(chunk: slice) -> np.ndarray:
            a, b = self.pairs(q, chunk)
            i, fi = _bin_positions(a, self.fixed_window, bins)
            j, fj = _bin_positions(b, self.moving_window, bins)
            counts = np.zeros(bins * bins)
            for di, wi in ((0, 1.0 - fi), (1, fi)):
                for dj, wj in ((0, 1.0 - fj), (1, fj)):
                    counts += np.bincount((i + di) * bins + (j + dj), weights=wi * wj, minlength=bins * bins)
            return counts

        counts = chunked_sum(partial, self.n_points, threads=self.config.threads).reshape(bins, bins)
        if counts.sum() <= 0:
            raise NoOverlapError(q)
        if self.config.fwhm > 0:
            counts = ndimage.gaussian_filter(counts, sigma=self.config.fwhm * FWHM_TO_SIGMA, mode="constant")
        return JointHistogram(counts, self.fixed_window, self.moving_window)

    def evaluate(self, q) -> float:
        raise NotImplementedError

    def __call__(self, x: np.ndarray) -> float:
        self.n_evals += 1
        GLOBAL_EVAL_STATS.add()
        return self.evaluate(np.asarray(x, dtype=np.float64))


def _flagged(v: Volume, points: np.ndarray) -> np.ndarray:
    if v.missing is None:
        return np.zeros(len(points), dtype=bool)
    return np.nan_to_num(sample_grid(v.missing.astype(np.float64), points, order=0), nan=0.0) > 0.5


class MutualInformationCost(PairwiseCost):
    name = "mi"

    def evaluate(self, q) -> float:
        return -mi(self.histogram(q))


class NormalisedMutualInformationCost(PairwiseCost):
    name = "nmi"

    def evaluate(self, q) -> float:
        return -nmi(self.histogram(q))


class EntropyCorrelationCost(PairwiseCost):
    name = "ecc"

    def evaluate(self, q) -> float:
        return -ecc(self.histogram(q))


class NormalisedCrossCorrelationCost(PairwiseCost):
    name = "ncc"

    def correlation(self, q) -> float:
        def partial(chunk: slice) -> np.ndarray:
            a, b = self.pairs(q, chunk)
            return np.array([len(a), a.sum(), b.sum(), (a * a).sum(), (b * b).sum(), (a * b).sum()])

        n, sa, sb, saa, sbb, sab = chunked_sum(partial, self.n_points, threads=self.config.threads)
        if n == 0:
            raise NoOverlapError(q)
        var_a = saa - sa * sa / n
        var_b = sbb - sb * sb / n
        if var_a <= 0 or var_b <= 0:
            raise ZeroVarianceError(f"Zero intensity variance over the overlap at parameters {np.asarray(q).tolist()}")
        return float((sab - sa * sb / n) / np.sqrt(var_a * var_b))

    def evaluate(self, q) -> float:
        return -self.correlation(q)


def joint_histogram(
    fixed: Volume,
    moving: Volume,
    q,
    bins: int = 64,
    fwhm: float = 7.0,
    grid: JitteredGrid | None = None,
) -> JointHistogram:
    return PairwiseCost(fixed, moving, grid, bins=bins, fwhm=fwhm).histogram(q)


def ncc(fixed: Volume, moving: Volume, q, grid: JitteredGrid | None = None) -> float:
    """Negated Pearson correlation of the paired samples."""
    return -NormalisedCrossCorrelationCost(fixed, moving, grid).correlation(q)

"""Degradations applied to clean volumes: bias field, thick slices, Rician noise, cropping and repositioning.

Every function takes ``seed`` as an int or a sequence of ints (fed to ``numpy.random.default_rng``)
and is the identity when its strength parameter is at its null value.
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from njtvreg.se3 import log_se3, rigid_from_euler
from njtvreg.volume import Volume, VolumeError, downsample, translation_matrix

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
DEFAULT_INU_FWHM = 50.0
DEFAULT_CROP_MM = 20.0

Seed = int | Sequence[int]


@dataclass(frozen=True)
class OffsetRanges:
    translation: float = 50.0
    """Maximum absolute translation per axis (mm)."""
    rotation: float = 15.0
    """Maximum absolute Euler angle per axis (degrees)."""


def inu_field(v: Volume, magnitude: float, fwhm: float = DEFAULT_INU_FWHM, seed: Seed = 0) -> np.ndarray:
    """Multiplicative field exp(a * g), g smoothed white noise, scaled so that max |field - 1| = magnitude."""
    if not 0.0 <= magnitude <= 1.0:
        raise ValueError(f"INU magnitude must be in [0, 1], got {magnitude}")
    if magnitude == 0.0:
        return np.ones(v.dims)
    rng = np.random.default_rng(seed)
    sigma = fwhm * FWHM_TO_SIGMA / v.voxel_size
    g = ndimage.gaussian_filter(rng.standard_normal(v.dims), sigma, mode="reflect")
    g -= g.mean()
    g_max, g_min = g.max(), g.min()
    scales = [math.log1p(magnitude) / g_max]
    if magnitude < 1.0:
        scales.append(-math.log1p(-magnitude) / abs(g_min))
    return np.exp(min(scales) * g)


def simulate_inu(v: Volume, magnitude: float, fwhm: float = DEFAULT_INU_FWHM, seed: Seed = 0) -> Volume:
    if magnitude == 0.0:
        return v
    return v.with_data(v.data * inu_field(v, magnitude, fwhm, seed), v.missing)


def simulate_thick_slices(v: Volume, factor: int, axis: int) -> Volume:
    """Mean-pool along one axis only."""
    factors = [1, 1, 1]
    factors[axis] = int(factor)
    return downsample(v, factors)


def add_rician_noise(v: Volume, percent: float, seed: Seed = 0) -> Volume:
    """sqrt((x + n1)^2 + n2^2) with n1, n2 ~ N(0, sigma^2) and sigma = percent/100 * max(v)."""
    if not 0.0 <= percent <= 50.0:
        raise ValueError(f"Noise percent must be in [0, 50], got {percent}")
    sigma = percent / 100.0 * float(np.max(v.data))
    rng = np.random.default_rng(seed)
    n1 = rng.normal(0.0, sigma, v.dims) if sigma > 0 else 0.0
    n2 = rng.normal(0.0, sigma, v.dims) if sigma > 0 else 0.0
    return v.with_data(np.hypot(v.data + n1, n2), v.missing)


def crop_voxels(v: Volume, axis: int, mm: float = DEFAULT_CROP_MM) -> int:
    """Voxels removed from each end of ``axis``."""
    return math.ceil(mm / v.voxel_size[axis] - 1e-9)


def crop_fov(v: Volume, axis: int, mm: float = DEFAULT_CROP_MM) -> Volume:
    """Remove ``mm`` from both ends of an axis; retained voxels keep their world positions."""
    k = crop_voxels(v, axis, mm)
    n = v.dims[axis]
    if n - 2 * k <= 0:
        raise VolumeError(f"Cropping {mm} mm ({k} voxels per side) leaves nothing of axis {axis} with {n} voxels")
    if k == 0:
        return v
    index = [slice(None)] * 3
    index[axis] = slice(k, n - k)
    shift = np.zeros(3)
    shift[axis] = k
    missing = None if v.missing is None else v.missing[tuple(index)]
    return Volume(v.data[tuple(index)], v.world @ translation_matrix(shift), missing)


def random_rigid(ranges: OffsetRanges, seed: Seed = 0) -> np.ndarray:
    """Rigid matrix from uniform translations and extrinsic x-y-z Euler angles."""
    rng = np.random.default_rng(seed)
    translation = rng.uniform(-ranges.translation, ranges.translation, 3)
    angles = rng.uniform(-ranges.rotation, ranges.rotation, 3)
    return rigid_from_euler(translation, angles)


def apply_random_rigid(v: Volume, ranges: OffsetRanges = OffsetRanges(), seed: Seed = 0) -> tuple[Volume, np.ndarray]:
    """Reposition ``v`` by editing its header (world <- T world).

    Returns the repositioned volume and the parameters that register it back onto the original,
    i.e. ``log(T^-1)``.
    """
    transform = random_rigid(ranges, seed)
    return v.with_world(transform @ v.world), log_se3(np.linalg.inv(transform))

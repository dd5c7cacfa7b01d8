"""Quadratic B-spline encoding of volumes.

Coefficients come from the recursive prefilter (single pole z = 2*sqrt(2) - 3) with mirror
boundaries, so sampling at integer voxel coordinates reproduces the source values.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from njtvreg.volume import Volume, VolumeError, sample_grid

SPLINE_DEGREE = 2


class SplineTooSmallError(VolumeError):
    """Raised when a volume is too small to carry a quadratic spline (fewer than 3 voxels on an axis)."""


@dataclass(frozen=True, eq=False)
class SplineField:
    coeffs: np.ndarray
    world: np.ndarray
    degree: int = SPLINE_DEGREE

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.coeffs.shape)  # type: ignore[return-value]


def spline_encode(v: Volume) -> SplineField:
    if min(v.dims) < 3:
        raise SplineTooSmallError(f"Quadratic spline encoding needs at least 3 voxels per axis, got {v.dims}")
    coeffs = ndimage.spline_filter(v.data, order=SPLINE_DEGREE, mode="mirror", output=np.float64)
    coeffs.setflags(write=False)
    return SplineField(coeffs, v.world)


def spline_sample(s: SplineField, points) -> np.ndarray | float:
    return sample_grid(s.coeffs, points, order=s.degree, mode="mirror")

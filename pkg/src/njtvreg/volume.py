"""Volumes on a voxel grid with a voxel-to-world affine, plus sampling, gradients and pooling.

All sampling functions take continuous voxel coordinates as arrays of shape ``(..., 3)`` and
return NaN for points outside ``[0, n - 1]`` along any axis (no extrapolation).
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


class VolumeError(ValueError):
    """Raised for invalid volume geometry or arguments."""


class NiftiFormatError(VolumeError):
    """Raised when a file cannot be parsed as a NIfTI-1 image."""


class UnsupportedFormatError(VolumeError):
    """Raised for valid NIfTI files that we do not handle (4D, exotic dtypes)."""


def check_affine(matrix: np.ndarray, *, name: str = "world") -> np.ndarray:
    """Return ``matrix`` as a read-only float64 4x4 affine, raising if it is not a valid Affine4."""
    m = np.array(matrix, dtype=np.float64)
    if m.shape != (4, 4):
        raise VolumeError(f"{name} must be 4x4, got shape {m.shape}")
    if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
        raise VolumeError(f"{name} last row must be (0, 0, 0, 1), got {m[3]}")
    if not np.all(np.isfinite(m)) or abs(np.linalg.det(m[:3, :3])) < 1e-12:
        raise VolumeError(f"{name} is not invertible")
    m.setflags(write=False)
    return m


def translation_matrix(offset) -> np.ndarray:
    m = np.eye(4)
    m[:3, 3] = offset
    return m


def apply_affine(matrix: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Apply a 4x4 affine to points of shape ``(..., 3)``."""
    points = np.asarray(points, dtype=np.float64)
    return points @ matrix[:3, :3].T + matrix[:3, 3]


@dataclass(frozen=True, eq=False)
class Volume:
    """A 3D scalar image. Immutable: the data array is read-only."""

    data: np.ndarray
    world: np.ndarray
    missing: np.ndarray | None = None

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise VolumeError(f"Volume data must be 3D, got shape {data.shape}")
        if min(data.shape) < 1:
            raise VolumeError(f"Volume dims must be positive, got {data.shape}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "world", check_affine(self.world))
        if self.missing is not None:
            missing = np.array(self.missing, dtype=bool)
            if missing.shape != data.shape:
                raise VolumeError(f"Missing mask shape {missing.shape} does not match data {data.shape}")
            missing.setflags(write=False)
            object.__setattr__(self, "missing", missing if missing.any() else None)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape)  # type: ignore[return-value]

    @property
    def voxel_size(self) -> np.ndarray:
        return np.linalg.norm(self.world[:3, :3], axis=0)

    @property
    def voxel_volume(self) -> float:
        return float(abs(np.linalg.det(self.world[:3, :3])))

    @property
    def valid_values(self) -> np.ndarray:
        """Finite intensities of voxels that are not flagged missing."""
        values = self.data if self.missing is None else self.data[~self.missing]
        return values[np.isfinite(values)].ravel()

    def voxel_to_world(self, points) -> np.ndarray:
        return apply_affine(self.world, points)

    def world_to_voxel(self, points) -> np.ndarray:
        return apply_affine(np.linalg.inv(self.world), points)

    def grid_points(self) -> np.ndarray:
        """All voxel coordinates in C order, shape ``(N, 3)``."""
        return np.stack(np.meshgrid(*[np.arange(n, dtype=np.float64) for n in self.dims], indexing="ij"), -1).reshape(
            -1, 3
        )

    def with_data(self, data: np.ndarray, missing: np.ndarray | None = None) -> "Volume":
        return Volume(data, self.world, missing)

    def with_world(self, world: np.ndarray) -> "Volume":
        return Volume(self.data, world, self.missing)


@dataclass(frozen=True, eq=False)
class VectorVolume:
    """Per-voxel spatial derivatives (intensity/mm), last axis holds the three components."""

    data: np.ndarray
    world: np.ndarray

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape[:3])  # type: ignore[return-value]

    def norm(self) -> np.ndarray:
        return np.linalg.norm(self.data, axis=-1)


def inside_fov(points: np.ndarray, dims) -> np.ndarray:
    """Mask of points with every coordinate in ``[0, n - 1]``."""
    upper = np.asarray(dims, dtype=np.float64) - 1.0
    return np.all((points >= 0.0) & (points <= upper), axis=-1)


def sample_grid(array: np.ndarray, points, *, order: int, mode: str = "nearest") -> np.ndarray | float:
    """Interpolate ``array`` at voxel coordinates; NaN outside the grid.

    ``array`` is used as-is (no prefiltering), so for ``order > 1`` it must already hold spline
    coefficients.
    """
    points = np.asarray(points, dtype=np.float64)
    flat = points.reshape(-1, 3)
    out = ndimage.map_coordinates(array, flat.T, order=order, mode=mode, prefilter=False)
    out[~inside_fov(flat, array.shape)] = np.nan
    if points.ndim == 1:
        return float(out[0])
    return out.reshape(points.shape[:-1])


def trilinear_sample(v: Volume, points) -> np.ndarray | float:
    return sample_grid(v.data, points, order=1)


def finite_diff_gradient(v: Volume) -> VectorVolume:
    """Central differences inside, one-sided on boundary faces, each axis divided by its voxel width."""
    if min(v.dims) < 2:
        raise VolumeError(f"Gradient needs at least 2 voxels per axis, got {v.dims}")
    components = np.gradient(v.data, *v.voxel_size, edge_order=1)
    return VectorVolume(np.stack(components, axis=-1), v.world)


def gradient_magnitude(v: Volume, lam: float) -> Volume:
    if not np.isfinite(lam):
        raise VolumeError(f"lambda must be finite, got {lam}")
    return v.with_data(lam * finite_diff_gradient(v).norm(), v.missing)


def _block_mean(array: np.ndarray, factors) -> np.ndarray:
    new = [n // f for n, f in zip(array.shape, factors)]
    trimmed = array[: new[0] * factors[0], : new[1] * factors[1], : new[2] * factors[2]]
    return trimmed.reshape(new[0], factors[0], new[1], factors[1], new[2], factors[2]).mean(axis=(1, 3, 5))


def pooled_world(world: np.ndarray, factors) -> np.ndarray:
    """World matrix of a block-pooled grid: new voxel j sits at old coordinate f*j + (f-1)/2."""
    factors = np.asarray(factors, dtype=np.float64)
    to_old = np.diag([*factors, 1.0])
    to_old[:3, 3] = (factors - 1.0) / 2.0
    return world @ to_old


def downsample(v: Volume, factors) -> Volume:
    """Block-mean pooling; trailing voxels that do not fill a block are dropped."""
    factors = tuple(int(f) for f in factors)
    if len(factors) != 3 or min(factors) < 1:
        raise VolumeError(f"Pooling factors must be three integers >= 1, got {factors}")
    if any(f > n for f, n in zip(factors, v.dims)):
        raise VolumeError(f"Pooling factors {factors} exceed volume dims {v.dims}")
    if factors == (1, 1, 1):
        return v
    missing = None if v.missing is None else _block_mean(v.missing.astype(np.float64), factors) > 0
    return Volume(_block_mean(v.data, factors), pooled_world(v.world, factors), missing)


def reslice(
    v: Volume,
    target_world: np.ndarray,
    target_dims,
    transform: np.ndarray | None = None,
) -> Volume:
    """Trilinearly resample ``v`` onto a target grid.

    ``transform`` is a world-space matrix R mapping ``v``'s world into the target world (the moving
    voxel for target voxel y is ``v.world^-1 R^-1 target_world y``). Out-of-FOV voxels become 0 and
    are flagged in the missing mask.
    """
    target_world = check_affine(target_world, name="target_world")
    transform = np.eye(4) if transform is None else np.asarray(transform, dtype=np.float64)
    grid = Volume(np.zeros(tuple(int(n) for n in target_dims)), target_world).grid_points()
    to_moving = np.linalg.inv(v.world) @ np.linalg.inv(transform) @ target_world
    values = trilinear_sample(v, apply_affine(to_moving, grid))
    missing = np.isnan(values)
    values[missing] = 0.0
    shape = tuple(int(n) for n in target_dims)
    return Volume(values.reshape(shape), target_world, missing.reshape(shape))

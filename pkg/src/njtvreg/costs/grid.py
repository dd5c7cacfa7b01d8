"""Fixed-image sampling grid, group alignment parameters and the fixed-to-moving voxel mapping."""

import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from njtvreg.se3 import exp_se3
from njtvreg.volume import apply_affine, inside_fov

CHUNK_SIZE = 32_768


@dataclass(frozen=True)
class JitteredGrid:
    """Fixed voxel centres plus one uniform [0, 1)^3 offset per voxel.

    The offsets are drawn once from ``default_rng([seed, level])``; ``seed=None`` disables jitter.
    Jittered points that leave the fixed field of view are dropped.
    """

    dims: tuple[int, int, int]
    seed: int | None = 0
    level: int = 0

    def offsets(self) -> np.ndarray:
        n = int(np.prod(self.dims))
        if self.seed is None:
            return np.zeros((n, 3))
        return np.random.default_rng([self.seed, self.level]).random((n, 3))

    def points(self, max_points: int | None = None) -> np.ndarray:
        """Jittered voxel centres, optionally thinned to at most ``max_points`` by a common stride on every axis."""
        stride = 1 if max_points is None else self.stride(max_points)
        axes = [np.arange(0, n, stride) for n in self.dims]
        index = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 3)
        points = index + self.offsets()[np.ravel_multi_index(tuple(index.T), self.dims)]
        return points[inside_fov(points, self.dims)]

    def stride(self, max_points: int) -> int:
        if max_points < 1:
            raise ValueError(f"max_points must be positive, got {max_points}")
        stride = max(1, math.ceil((math.prod(self.dims) / max_points) ** (1 / 3)))
        while math.prod(-(-n // stride) for n in self.dims) > max_points:
            stride += 1
        return stride


@dataclass(frozen=True, eq=False)
class GroupAlignment:
    """Rigid parameters of the moving channels, shape ``(C - 1, 6)``. The fixed channel is the identity."""

    params: np.ndarray

    def __post_init__(self):
        params = np.array(self.params, dtype=np.float64).reshape(-1, 6)
        if not np.all(np.isfinite(params)):
            raise ValueError(f"Rigid parameters must be finite, got {params}")
        params.setflags(write=False)
        object.__setattr__(self, "params", params)

    @classmethod
    def identity(cls, n_moving: int) -> "GroupAlignment":
        return cls(np.zeros((n_moving, 6)))

    @property
    def n_moving(self) -> int:
        return len(self.params)

    def as_vector(self) -> np.ndarray:
        """Channel-major stacking: q_2 then q_3 and so on, translations before rotations."""
        return self.params.ravel().copy()

    def transforms(self) -> list[np.ndarray]:
        return [exp_se3(q) for q in self.params]


def pullback_matrix(q, fixed_world: np.ndarray, moving_world: np.ndarray) -> np.ndarray:
    """Voxel-to-voxel matrix ``Mc^-1 exp(q)^-1 M1`` taking fixed voxels into the moving image."""
    return np.linalg.inv(moving_world) @ np.linalg.inv(exp_se3(q)) @ fixed_world


def fixed_to_moving(y, q, fixed_world: np.ndarray, moving_world: np.ndarray) -> np.ndarray:
    return apply_affine(pullback_matrix(q, fixed_world, moving_world), y)


def chunked_sum(fn: Callable[[slice], np.ndarray], n: int, *, threads: int = 1) -> np.ndarray:
    """Sum ``fn(chunk)`` over fixed-size slices of ``range(n)``.

    Chunk boundaries do not depend on ``threads`` and partials are added in chunk order, so the
    result is bit-identical for any thread count.
    """
    chunks: Sequence[slice] = [slice(i, min(i + CHUNK_SIZE, n)) for i in range(0, n, CHUNK_SIZE)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            partials = list(executor.map(fn, chunks))
    else:
        partials = [fn(chunk) for chunk in chunks]
    if not partials:
        raise ValueError("Nothing to sum: no sampling points")
    total = np.array(partials[0], dtype=np.float64)
    for partial in partials[1:]:
        total = total + partial
    return total

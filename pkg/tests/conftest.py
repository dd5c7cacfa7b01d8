import threading

import numpy as np
import pytest

from njtvreg.costs import GLOBAL_EVAL_STATS
from njtvreg.simulation.phantom import make_phantom
from njtvreg.volume import Volume, translation_matrix

# Global lock for tests that modify global state - this works across threads
_global_stats_lock = threading.Lock()


@pytest.fixture
def reset_global_stats():
    """Reset the global cost evaluation counter and ensure exclusive access for tests that need it."""
    with _global_stats_lock:
        GLOBAL_EVAL_STATS.reset()
        yield
        GLOBAL_EVAL_STATS.reset()


@pytest.fixture(scope="session")
def phantom32() -> list[Volume]:
    """Three-channel 32^3 phantom, shared read-only across tests (volumes are immutable)."""
    return make_phantom((32, 32, 32), channels=3, seed=0)


def centred_world(dims, voxel_size=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Voxel-to-world matrix with the given voxel size and the grid centre at the world origin."""
    size = np.asarray(voxel_size, dtype=np.float64)
    world = np.diag([*size, 1.0])
    return world @ translation_matrix(-(np.asarray(dims, dtype=np.float64) - 1.0) / 2.0)


def smooth_blob(dims=(24, 24, 24), voxel_size=(1.0, 1.0, 1.0), seed=0) -> Volume:
    """A smooth, positive, asymmetric test image (sum of off-centre Gaussians)."""
    rng = np.random.default_rng(seed)
    world = centred_world(dims, voxel_size)
    grid = np.stack(np.meshgrid(*[np.arange(n, dtype=np.float64) for n in dims], indexing="ij"), -1)
    x = grid @ world[:3, :3].T + world[:3, 3]
    data = np.zeros(dims)
    extent = np.asarray(dims) * np.asarray(voxel_size)
    for _ in range(4):
        centre = rng.uniform(-0.25, 0.25, 3) * extent
        width = rng.uniform(0.12, 0.2) * extent.min()
        data += rng.uniform(50, 100) * np.exp(-np.sum((x - centre) ** 2, axis=-1) / (2 * width**2))
    return Volume(data, world)

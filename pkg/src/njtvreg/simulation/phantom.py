"""Synthetic multimodal head-like phantom: nested, off-centre ellipsoids with per-channel contrasts."""

from collections.abc import Sequence

import numpy as np
from scipy import ndimage

from njtvreg.volume import Volume, VolumeError, translation_matrix

MIN_PHANTOM_DIM = 32
LABEL_SMOOTHING_SIGMA = 1.0
TEXTURE_STRENGTH = 0.05
TEXTURE_SIGMA = 3.0

LABELS = ("background", "shell", "compartment_a", "compartment_b")

# T1-like, T2-like and PD-like contrasts (mean intensity per label)
PHANTOM_CONTRASTS: tuple[dict[str, float], ...] = (
    {"background": 0.0, "shell": 60.0, "compartment_a": 100.0, "compartment_b": 20.0},
    {"background": 0.0, "shell": 80.0, "compartment_a": 50.0, "compartment_b": 150.0},
    {"background": 0.0, "shell": 90.0, "compartment_a": 70.0, "compartment_b": 110.0},
)

# (centre, semi-axes) as fractions of the grid extent
_ELLIPSOIDS = {
    "shell": ((0.0, 0.02, -0.01), (0.40, 0.36, 0.33)),
    "compartment_a": ((0.05, -0.03, 0.02), (0.28, 0.23, 0.21)),
    "compartment_b": ((-0.10, 0.09, -0.05), (0.09, 0.12, 0.08)),
}


def phantom_world(dims: Sequence[int]) -> np.ndarray:
    """1 mm isotropic voxels with the world origin at the grid centre."""
    return translation_matrix(-(np.asarray(dims, dtype=np.float64) - 1.0) / 2.0)


def _check_dims(dims: Sequence[int]) -> tuple[int, int, int]:
    dims = tuple(int(n) for n in dims)
    if len(dims) != 3 or min(dims) < MIN_PHANTOM_DIM:
        raise VolumeError(f"Phantom needs at least {MIN_PHANTOM_DIM} voxels per axis, got {dims}")
    return dims  # type: ignore[return-value]


def phantom_labels(dims: Sequence[int]) -> np.ndarray:
    """Hard label map (index into ``LABELS``); later compartments overwrite earlier ones."""
    dims = _check_dims(dims)
    extent = np.asarray(dims, dtype=np.float64)
    coords = np.meshgrid(*[np.arange(n) - (n - 1) / 2.0 for n in dims], indexing="ij")
    labels = np.zeros(dims, dtype=np.int8)
    for label, (centre, axes) in _ELLIPSOIDS.items():
        r2 = sum(((c - f * e) / (a * e)) ** 2 for c, f, a, e in zip(coords, centre, axes, extent))
        labels[r2 <= 1.0] = LABELS.index(label)
    return labels


def make_phantom(dims: Sequence[int] = (64, 64, 64), channels: int = 3, seed: int | Sequence[int] = 0) -> list[Volume]:
    if channels < 2:
        raise ValueError(f"Phantom needs at least 2 channels, got {channels}")
    dims = _check_dims(dims)
    labels = phantom_labels(dims)
    world = phantom_world(dims)
    indicators = {
        name: ndimage.gaussian_filter((labels == i).astype(np.float64), LABEL_SMOOTHING_SIGMA)
        for i, name in enumerate(LABELS)
    }
    seed_seq = [seed] if isinstance(seed, int) else list(seed)
    volumes = []
    for c in range(channels):
        contrast = PHANTOM_CONTRASTS[c % len(PHANTOM_CONTRASTS)]
        gain = 1.0 + 0.25 * (c // len(PHANTOM_CONTRASTS))
        data = sum(gain * contrast[name] * indicators[name] for name in LABELS)
        texture = ndimage.gaussian_filter(np.random.default_rng([*seed_seq, c]).standard_normal(dims), TEXTURE_SIGMA)
        texture /= texture.std()
        volumes.append(Volume(data * (1.0 + TEXTURE_STRENGTH * texture), world))
    return volumes

"""Simulation study: phantom, per-channel degradations, registration with each cost, ground truth bookkeeping.

Randomness is derived from the master seed by counters: ``[seed, trial, channel, step]``, so a
trial's outcome does not depend on which worker runs it or in which order.
"""

import concurrent.futures
import dataclasses
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from njtvreg.nifti import save_nifti
from njtvreg.registration import RegistrationOptions, register
from njtvreg.se3 import log_se3
from njtvreg.simulation.degrade import (
    DEFAULT_CROP_MM,
    DEFAULT_INU_FWHM,
    OffsetRanges,
    add_rician_noise,
    crop_fov,
    crop_voxels,
    random_rigid,
    simulate_inu,
    simulate_thick_slices,
)
from njtvreg.simulation.phantom import make_phantom
from njtvreg.utils.log import logger
from njtvreg.volume import Volume

MIN_CROPPED_VOXELS = 4


class Step(IntEnum):
    LEVELS = 0
    INU = 1
    THICK_SLICES = 2
    NOISE = 3
    CROP = 4
    RIGID = 5


@dataclass
class DegradationSpec:
    inu_magnitude: float = 0.4
    inu_fwhm: float = DEFAULT_INU_FWHM
    downsample_factor: int = 6
    noise_percent: float = 50.0
    crop: bool = True
    crop_mm: float = DEFAULT_CROP_MM
    translation_range: float = 50.0
    rotation_range: float = 15.0
    randomize_levels: bool = True
    """Draw each channel's levels uniformly up to the maxima above; otherwise apply the maxima exactly."""
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.inu_magnitude <= 1.0:
            raise ValueError(f"inu_magnitude must be in [0, 1], got {self.inu_magnitude}")
        if not 1 <= self.downsample_factor <= 6:
            raise ValueError(f"downsample_factor must be in 1..6, got {self.downsample_factor}")
        if not 0.0 <= self.noise_percent <= 50.0:
            raise ValueError(f"noise_percent must be in [0, 50], got {self.noise_percent}")
        if self.inu_fwhm <= 0 or self.crop_mm < 0 or self.translation_range < 0 or self.rotation_range < 0:
            raise ValueError("inu_fwhm must be positive and crop/offset ranges nonnegative")

    @property
    def offset_ranges(self) -> OffsetRanges:
        return OffsetRanges(self.translation_range, self.rotation_range)


@dataclass
class ChannelDegradation:
    inu: float
    ds_factor: int
    ds_axis: int
    noise: float
    """Noise level as a fraction of the maximum intensity."""
    crop_axis: int | None
    transform: list[list[float]]
    """Applied header transform T (world <- T world)."""


@dataclass
class TrialRecord:
    trial: int
    seed: int
    truths: list[list[float]]
    """Per-channel ground truth parameters; channel 0 is the fixed gauge (zeros)."""
    degradations: list[ChannelDegradation]
    translation_range: float
    rotation_range: float
    estimates: dict[str, list[list[float]]] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)
    volumes: list[str] = field(default_factory=list)

    @property
    def exit_status(self) -> str:
        return "Done" if not self.failures else f"Failed ({', '.join(sorted(self.failures))})"

    @property
    def regressors(self) -> dict[str, float]:
        """Trial-level regressors: channel means of the realised INU, noise fraction and slice factor."""
        return {
            "inu": float(np.mean([d.inu for d in self.degradations])),
            "noise": float(np.mean([d.noise for d in self.degradations])),
            "ds": float(np.mean([d.ds_factor for d in self.degradations])),
        }

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "TrialRecord":
        obj = dict(obj)
        obj["degradations"] = [ChannelDegradation(**d) for d in obj["degradations"]]
        return cls(**obj)


def trial_id(trial: int) -> str:
    return f"trial_{trial:04d}"


def _rng_seed(spec: DegradationSpec, trial: int, channel: int, step: Step) -> list[int]:
    return [spec.seed, trial, channel, int(step)]


def degrade_channel(v: Volume, spec: DegradationSpec, trial: int, channel: int) -> tuple[Volume, ChannelDegradation]:
    """Apply bias field, thick slices, noise, crop and repositioning in that order."""
    rng = np.random.default_rng(_rng_seed(spec, trial, channel, Step.LEVELS))
    if spec.randomize_levels:
        inu = float(rng.uniform(0.0, spec.inu_magnitude))
        noise_percent = float(rng.uniform(0.0, spec.noise_percent))
        ds_factor = int(rng.integers(1, spec.downsample_factor + 1))
    else:
        inu, noise_percent, ds_factor = spec.inu_magnitude, spec.noise_percent, spec.downsample_factor
    ds_axis = int(rng.integers(3))
    crop_axis: int | None = int(rng.integers(3)) if spec.crop else None

    v = simulate_inu(v, inu, spec.inu_fwhm, _rng_seed(spec, trial, channel, Step.INU))
    v = simulate_thick_slices(v, ds_factor, ds_axis)
    v = add_rician_noise(v, noise_percent, _rng_seed(spec, trial, channel, Step.NOISE))
    if crop_axis is not None:
        if v.dims[crop_axis] - 2 * crop_voxels(v, crop_axis, spec.crop_mm) < MIN_CROPPED_VOXELS:
            logger.debug(f"Trial {trial} channel {channel}: skipping crop of axis {crop_axis}, too few voxels left")
            crop_axis = None
        else:
            v = crop_fov(v, crop_axis, spec.crop_mm)
    transform = random_rigid(spec.offset_ranges, _rng_seed(spec, trial, channel, Step.RIGID))
    v = v.with_world(transform @ v.world)
    return v, ChannelDegradation(inu, ds_factor, ds_axis, noise_percent / 100.0, crop_axis, transform.tolist())


def simulate_trial(
    spec: DegradationSpec,
    trial: int,
    *,
    channels: int = 3,
    dims: Sequence[int] = (64, 64, 64),
    costs: Sequence[str] = ("njtv",),
    options: RegistrationOptions | None = None,
    output_dir: Path | None = None,
    progress=None,
) -> TrialRecord:
    options = options or RegistrationOptions()
    phantom = make_phantom(dims, channels, seed=[spec.seed, trial])
    degraded, degradations = zip(*(degrade_channel(v, spec, trial, c) for c, v in enumerate(phantom)))
    fixed_transform = np.array(degradations[0].transform)
    truths = [log_se3(fixed_transform @ np.linalg.inv(np.array(d.transform))).tolist() for d in degradations]
    truths[0] = [0.0] * 6
    record = TrialRecord(
        trial, spec.seed, truths, list(degradations), spec.translation_range, spec.rotation_range
    )
    if output_dir is not None:
        for c, v in enumerate(degraded):
            path = output_dir / trial_id(trial) / f"channel_{c}.nii.gz"
            path.parent.mkdir(parents=True, exist_ok=True)
            save_nifti(v, path)
            record.volumes.append(str(path))
    for cost in costs:
        if progress is not None:
            progress.update_trial_status(trial, f"Registering ({cost})")
        try:
            result = register(list(degraded), dataclasses.replace(options, cost=cost, fixed_index=0))
            record.estimates[cost] = result.params.tolist()
        except Exception as e:
            logger.error(f"Trial {trial} failed for cost {cost}: {e}", exc_info=True)
            record.failures[cost] = f"{type(e).__name__}: {e}"
    logger.info(f"Finished trial {trial}: {record.exit_status}")
    return record


def run_simulation(
    spec: DegradationSpec,
    n_trials: int,
    *,
    channels: int = 3,
    dims: Sequence[int] = (64, 64, 64),
    costs: Sequence[str] = ("njtv",),
    options: RegistrationOptions | None = None,
    workers: int = 1,
    volumes_dir: Path | None = None,
    progress=None,
) -> list[TrialRecord]:
    """Run ``n_trials`` independent trials (optionally in a thread pool); results come back in trial order."""
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")

    def process(trial: int) -> TrialRecord:
        if progress is not None:
            progress.on_trial_start(trial)
        try:
            record = simulate_trial(
                spec,
                trial,
                channels=channels,
                dims=dims,
                costs=costs,
                options=options,
                output_dir=volumes_dir,
                progress=progress,
            )
        except Exception as e:
            if progress is not None:
                progress.on_uncaught_exception(trial, e)
            raise
        if progress is not None:
            progress.on_trial_end(record)
        return record

    if workers <= 1:
        return [process(trial) for trial in range(n_trials)]
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(process, range(n_trials)))

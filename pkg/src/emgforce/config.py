"""Dataclass configs shared across the pipeline."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

SAMPLE_RATE = 1000
N_CHANNELS = 12
N_FINGERS = 5

FINGER_NAMES = ("little", "ring", "middle", "index", "thumb")

ARTIFACT_KINDS = ("dc", "mains", "drift")


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs of the synthetic sEMG generator.

    The carrier band sits inside the 10-450 Hz preprocessing pass-band so
    the envelope scaling survives filtering. Crosstalk between finger
    muscle groups is a free parameter (no published value to pin it to).
    """

    sample_rate: int = SAMPLE_RATE
    noise_band: tuple[float, float] = (20.0, 400.0)
    noise_floor_frac: float = 0.01  # fraction of the max mixing gain
    crosstalk: float = 0.3
    subject_jitter: float = 0.2  # +/- multiplicative jitter on the mixing matrix
    dc_offset: float = 0.3
    mains_freq: float = 50.0
    mains_amp: float = 0.15
    drift_freq: float = 0.3  # < 5 Hz
    drift_amp: float = 0.25


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.002
    epochs: int = 15
    folds: int = 10
    batch_size: int = 64
    seed: int = 42
    split_seed: int = 42
    hidden: int = 64
    cnn_channels: tuple[int, int] = (8, 16)
    cnn_fc: int = 64


@dataclass(frozen=True)
class SweepConfig:
    grid_start: float = 0.1
    grid_stop: float = 1.0
    grid_step: float = 0.1
    rho_min: float = 0.99
    r2_min: float = 0.95


@dataclass(frozen=True)
class RuntimeConfig:
    tick_samples: int = 50  # 50 ms hop at 1 kHz
    window_samples: int = 200
    k_alpha: float = 60.0  # deg/s^2 per unit label
    k_force: float = 10.0  # N per unit label
    label_clip: float = 1.5
    angle_min: float = 0.0
    angle_max: float = 90.0
    sine_freq: float = 0.1
    sine_amplitude: float = 1.0
    fault_burst_limit: int = 10


def asdict(cfg) -> dict:
    return dataclasses.asdict(cfg)

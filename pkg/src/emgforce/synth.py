"""Synthetic 12-channel sEMG cohorts with known force-label ground truth.

Stands in for human data acquisition. The generator's amplitude law is
exactly linear in the muscle-group activations: per channel the signal is
(noise_floor + mixing @ activation) * unit-RMS band-limited noise, so the
envelope is degree-1 homogeneous in the activation and interpolation
claims can be checked against known ground truth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal as sig

from .config import FINGER_NAMES, GeneratorConfig

# Sub-stream ids for per-channel seeded RNGs.
_STREAM_NOISE = 0
_STREAM_MAINS = 1
_STREAM_DRIFT = 2
_STREAM_JITTER = 100


@dataclass(frozen=True)
class FingerLabels:
    """Per-finger force labels in [-1, 1], index order little -> thumb."""

    values: tuple[float, float, float, float, float]

    def __post_init__(self):
        if len(self.values) != 5:
            raise ValueError("need exactly 5 finger labels")
        if any(not (-1.0 <= v <= 1.0) for v in self.values):
            raise ValueError(f"labels must lie in [-1, 1], got {self.values}")

    @classmethod
    def of(cls, values) -> "FingerLabels":
        return cls(tuple(float(v) for v in values))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


@dataclass(frozen=True)
class GestureSpec:
    gesture_id: int
    labels: FingerLabels
    name: str


def _gesture(gid, name, extended=(), flexed=()):
    # Flexed fingers map to +1, extended to -1; each gesture is all-or-nothing.
    values = []
    for finger in FINGER_NAMES:
        if finger in extended:
            values.append(-1.0)
        elif finger in flexed:
            values.append(+1.0)
        else:
            raise ValueError(f"gesture {gid}: finger {finger} unassigned")
    return GestureSpec(gid, FingerLabels.of(values), name)


_ALL = set(FINGER_NAMES)


def gesture_table() -> list[GestureSpec]:
    """The ten source gestures; every finger appears in both directions."""
    defs = [
        (1, "extend all fingers", _ALL, set()),
        (2, "extend index+middle", {"index", "middle"}, None),
        (3, "flex index+middle", None, {"index", "middle"}),
        (4, "extend index", {"index"}, None),
        (5, "extend thumb+index", {"thumb", "index"}, None),
        (6, "flex thumb+index", None, {"thumb", "index"}),
        (7, "flex thumb+little", None, {"thumb", "little"}),
        (8, "flex all fingers", set(), _ALL),
        (9, "extend little+middle", {"little", "middle"}, None),
        (10, "extend thumb+little", {"thumb", "little"}, None),
    ]
    table = []
    for gid, name, extended, flexed in defs:
        if extended is None:
            extended = _ALL - flexed
        if flexed is None:
            flexed = _ALL - extended
        table.append(_gesture(gid, name, extended=extended, flexed=flexed))
    return table


def labels_to_activation(labels: FingerLabels) -> np.ndarray:
    """Split labels into the 10 muscle-group activations: 5 flexor, 5 extensor.

    flexor_j = max(l_j, 0), extensor_j = max(-l_j, 0); at most one of the
    pair is nonzero per finger.
    """
    l = labels.as_array() if isinstance(labels, FingerLabels) else np.asarray(labels, dtype=np.float64)
    return np.concatenate([np.maximum(l, 0.0), np.maximum(-l, 0.0)])


# One forearm compartment block: 6 electrodes over 5 muscle groups.
# Dominant gain 1.0 on each group's own electrode, neighbour pickup <= 0.25,
# plus one shared electrode spanning the compartment.
_GROUP_GAINS = np.array(
    [
        # little  ring  middle index thumb
        [1.00, 0.20, 0.00, 0.00, 0.00],
        [0.15, 1.00, 0.15, 0.00, 0.00],
        [0.00, 0.20, 1.00, 0.10, 0.00],
        [0.00, 0.00, 0.15, 1.00, 0.10],
        [0.00, 0.00, 0.00, 0.20, 1.00],
        [0.25, 0.25, 0.25, 0.25, 0.25],
    ]
)


def mixing_matrix(crosstalk: float = 0.3) -> np.ndarray:
    """Fixed 12x10 nonnegative mixing matrix, full column rank.

    Channels 0-5 sit over the flexor compartment, 6-11 over the extensor
    compartment; `crosstalk` scales the bleed of each group into the
    opposite compartment's electrodes.
    """
    a = np.zeros((12, 10))
    a[0:6, 0:5] = _GROUP_GAINS
    a[0:6, 5:10] = crosstalk * _GROUP_GAINS
    a[6:12, 5:10] = _GROUP_GAINS
    a[6:12, 0:5] = crosstalk * _GROUP_GAINS
    return a


def subject_mixing(base: np.ndarray, seed, subject: int, jitter: float) -> np.ndarray:
    """Per-subject +/-`jitter` multiplicative perturbation of the mixing matrix."""
    rng = _channel_rng(seed, subject, _STREAM_JITTER)
    return base * (1.0 + jitter * rng.uniform(-1.0, 1.0, size=base.shape))


@dataclass
class MultiChannelSignal:
    samples: np.ndarray  # (12, N), millivolt-scale arbitrary units
    sample_rate: int = 1000
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise ValueError("samples must be (channels, N)")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]


def _seed_entropy(seed):
    if isinstance(seed, (tuple, list)):
        return tuple(int(v) for v in seed)
    return int(seed)


def _channel_rng(seed, channel: int, stream: int) -> np.random.Generator:
    entropy = _seed_entropy(seed)
    key = (entropy,) if isinstance(entropy, int) else entropy
    ss = np.random.SeedSequence(list(key) + [channel, stream])
    return np.random.Generator(np.random.PCG64(ss))


def _noise_filter(cfg: GeneratorConfig):
    lo, hi = cfg.noise_band
    return sig.butter(2, (lo, hi), btype="bandpass", fs=cfg.sample_rate)


def _carrier_noise(seed, channel: int, n: int, cfg: GeneratorConfig) -> np.ndarray:
    """Unit-RMS band-limited Gaussian noise, deterministic in (seed, channel)."""
    rng = _channel_rng(seed, channel, _STREAM_NOISE)
    white = rng.standard_normal(n)
    b, a = _noise_filter(cfg)
    shaped = sig.lfilter(b, a, white)
    rms = np.sqrt(np.mean(shaped * shaped))
    return shaped / rms


def generate_signal(
    a,
    duration_s: float,
    seed,
    artifacts=frozenset(),
    cfg: GeneratorConfig = GeneratorConfig(),
    mixing: np.ndarray | None = None,
    noise_floor: float | None = None,
    meta: dict | None = None,
) -> MultiChannelSignal:
    """Generate a 12-channel record for a 10-vector activation.

    `a` may be a constant (10,) activation or a per-sample (10, N) series.
    Artifacts in {"dc", "mains", "drift"} are additive and individually
    toggled. Same seed => same noise realization, so with the noise floor
    at zero the output is degree-1 homogeneous in `a`.
    """
    if duration_s <= 0:
        raise ValueError(f"duration must be positive, got {duration_s}")
    artifacts = frozenset(artifacts)
    unknown = artifacts - {"dc", "mains", "drift"}
    if unknown:
        raise ValueError(f"unknown artifacts: {sorted(unknown)}")
    if mixing is None:
        mixing = mixing_matrix(cfg.crosstalk)
    if noise_floor is None:
        noise_floor = cfg.noise_floor_frac * mixing.max()

    n = int(round(duration_s * cfg.sample_rate))
    a = np.asarray(a, dtype=np.float64)
    if np.any(a < 0) or np.any(a > 1):
        raise ValueError("activations must lie in [0, 1]")
    if a.ndim == 1:
        envelope = (noise_floor + mixing @ a)[:, None]  # (12, 1)
    elif a.ndim == 2:
        if a.shape != (10, n):
            raise ValueError(f"time-varying activation must be (10, {n}), got {a.shape}")
        envelope = noise_floor + mixing @ a  # (12, N)
    else:
        raise ValueError("activation must be a 10-vector or a (10, N) series")

    n_channels = mixing.shape[0]
    samples = np.empty((n_channels, n))
    t = np.arange(n) / cfg.sample_rate
    for c in range(n_channels):
        x = envelope[c] * _carrier_noise(seed, c, n, cfg)
        if "dc" in artifacts:
            x = x + cfg.dc_offset
        if "mains" in artifacts:
            phase = _channel_rng(seed, c, _STREAM_MAINS).uniform(0, 2 * np.pi)
            x = x + cfg.mains_amp * np.sin(2 * np.pi * cfg.mains_freq * t + phase)
        if "drift" in artifacts:
            phase = _channel_rng(seed, c, _STREAM_DRIFT).uniform(0, 2 * np.pi)
            x = x + cfg.drift_amp * np.sin(2 * np.pi * cfg.drift_freq * t + phase)
        samples[c] = x

    meta = dict(meta or {})
    meta.setdefault("seed", list(seed) if isinstance(seed, (tuple, list)) else int(seed))
    meta["artifacts"] = sorted(artifacts)
    return MultiChannelSignal(samples=samples, sample_rate=cfg.sample_rate, meta=meta)


@dataclass
class CohortDataset:
    records: list  # of (MultiChannelSignal, FingerLabels)
    manifest: dict


def generate_cohort(
    n_subjects: int,
    reps: int = 3,
    duration_s: float = 30.0,
    seed: int = 42,
    artifacts=frozenset(),
    cfg: GeneratorConfig = GeneratorConfig(),
) -> CohortDataset:
    """10 gestures x `reps` records per subject, each subject with its own
    jittered mixing matrix. Fully deterministic in the arguments."""
    if n_subjects < 1:
        raise ValueError("need at least one subject")
    base = mixing_matrix(cfg.crosstalk)
    gestures = gesture_table()
    records = []
    manifest_records = []
    for s in range(n_subjects):
        a_s = subject_mixing(base, seed, s, cfg.subject_jitter)
        for g in gestures:
            activation = labels_to_activation(g.labels)
            for r in range(reps):
                rec_seed = (seed, s, g.gesture_id, r)
                sigrec = generate_signal(
                    activation,
                    duration_s,
                    rec_seed,
                    artifacts=artifacts,
                    cfg=cfg,
                    mixing=a_s,
                    meta={"subject": s, "gesture": g.gesture_id, "rep": r},
                )
                records.append((sigrec, g.labels))
                manifest_records.append(
                    {
                        "subject": s,
                        "gesture": g.gesture_id,
                        "rep": r,
                        "labels": list(g.labels.values),
                        "n_samples": sigrec.n_samples,
                        "seed": list(rec_seed),
                    }
                )
    manifest = {
        "n_subjects": n_subjects,
        "reps": reps,
        "duration_s": duration_s,
        "seed": seed,
        "sample_rate": cfg.sample_rate,
        "artifacts": sorted(artifacts),
        "crosstalk": cfg.crosstalk,
        "subject_jitter": cfg.subject_jitter,
        "noise_floor_frac": cfg.noise_floor_frac,
        "gestures": [
            {"gesture_id": g.gesture_id, "name": g.name, "labels": list(g.labels.values)}
            for g in gestures
        ],
        "records": manifest_records,
    }
    return CohortDataset(records=records, manifest=manifest)


def _record_filename(subject: int, gesture: int, rep: int) -> str:
    return f"s{subject:02d}_g{gesture:02d}_r{rep}.f32"


def save_dataset(dataset: CohortDataset, outdir) -> None:
    """Manifest JSON plus one raw file per record: little-endian float32,
    channel-major (all of channel 0, then channel 1, ...)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = dict(dataset.manifest)
    recs = []
    for (sigrec, _labels), entry in zip(dataset.records, manifest["records"]):
        fname = _record_filename(entry["subject"], entry["gesture"], entry["rep"])
        (outdir / fname).write_bytes(sigrec.samples.astype("<f4").tobytes())
        recs.append({**entry, "file": fname})
    manifest["records"] = recs
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(path) -> CohortDataset:
    path = Path(path)
    with open(path / "manifest.json") as fh:
        manifest = json.load(fh)
    records = []
    for entry in manifest["records"]:
        raw = np.frombuffer((path / entry["file"]).read_bytes(), dtype="<f4")
        samples = raw.astype(np.float64).reshape(12, entry["n_samples"])
        sigrec = MultiChannelSignal(
            samples=samples,
            sample_rate=manifest["sample_rate"],
            meta={
                "subject": entry["subject"],
                "gesture": entry["gesture"],
                "rep": entry["rep"],
                "seed": entry["seed"],
            },
        )
        records.append((sigrec, FingerLabels.of(entry["labels"])))
    return CohortDataset(records=records, manifest=manifest)


class StreamingSynth:
    """Incremental signal source for the live service.

    Keeps per-channel noise filter state so successive chunks join
    seamlessly; the activation can change between chunks (it is applied
    per sample from the moment it is set). Noise is normalized by the
    shaping filter's theoretical power gain, so the carrier RMS is unity
    in expectation rather than exactly.
    """

    def __init__(self, seed, cfg: GeneratorConfig = GeneratorConfig(),
                 mixing: np.ndarray | None = None, noise_floor: float | None = None):
        self.cfg = cfg
        self.mixing = mixing_matrix(cfg.crosstalk) if mixing is None else mixing
        self.noise_floor = (
            cfg.noise_floor_frac * self.mixing.max() if noise_floor is None else noise_floor
        )
        self._rngs = [_channel_rng(seed, c, _STREAM_NOISE) for c in range(12)]
        b, a = _noise_filter(cfg)
        self._ba = (b, a)
        self._zi = np.zeros((12, max(len(b), len(a)) - 1))
        # Steady-state power gain of the shaping filter on white noise.
        impulse = np.zeros(4096)
        impulse[0] = 1.0
        h = sig.lfilter(b, a, impulse)
        self._gain = float(np.sqrt(np.sum(h * h)))
        self.activation = np.zeros(10)

    def set_labels(self, labels) -> None:
        self.activation = labels_to_activation(np.clip(labels, -1.0, 1.0))

    def next_chunk(self, n: int) -> np.ndarray:
        white = np.stack([rng.standard_normal(n) for rng in self._rngs])
        b, a = self._ba
        shaped, self._zi = sig.lfilter(b, a, white, axis=1, zi=self._zi)
        envelope = (self.noise_floor + self.mixing @ self.activation)[:, None]
        return envelope * shaped / self._gain

"""Real-time decode loop: streaming feature extraction and inference every
50 ms, force mapping, and the finger kinematics integrator.

File playback through StreamDecoder reproduces the offline pipeline
(preprocess -> window -> features -> model) tick for tick, bit-exact,
because the same causal FilterChain runs in both paths.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import dsp, features, synth, training
from .config import N_CHANNELS, RuntimeConfig
from .evaluation import TrackingMetrics, tracking_metrics


@dataclass
class DecodeTick:
    seq: int  # window index since stream start
    t: float  # seconds; time of the window's last sample
    labels: np.ndarray  # (5,), clamped for safety display
    window_start: int


@dataclass
class HandState:
    theta: np.ndarray = field(default_factory=lambda: np.zeros(5))  # degrees
    omega: np.ndarray = field(default_factory=lambda: np.zeros(5))  # deg/s
    k_alpha: float = 60.0
    k_force: float = 10.0


def force_map(labels, k_force: float) -> np.ndarray:
    """F_j = k_force * label_j; the sign carries the force direction."""
    if k_force <= 0:
        raise ValueError("k_force must be positive")
    return k_force * np.asarray(labels, dtype=np.float64)


def kinematics_step(state: HandState, labels, dt: float,
                    cfg: RuntimeConfig = RuntimeConfig()) -> HandState:
    """Semi-implicit Euler: labels -> angular acceleration -> velocity -> angle.

    Angles clamp to [0, 90] degrees; a clamped finger's velocity resets to 0.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    labels = np.asarray(labels, dtype=np.float64)
    alpha = state.k_alpha * labels
    omega = state.omega + alpha * dt
    raw = state.theta + omega * dt
    theta = np.clip(raw, cfg.angle_min, cfg.angle_max)
    omega = np.where(raw == theta, omega, 0.0)
    return HandState(theta=theta, omega=omega, k_alpha=state.k_alpha, k_force=state.k_force)


class StreamDecoder:
    """Per-channel FilterChain plus a 200-sample window over the stream.

    push() accepts arbitrary-size 12-channel chunks and returns the ticks
    they complete (one per 50 new samples once the first 200 have
    arrived). Non-finite model outputs drop the tick and bump `faults`.
    """

    def __init__(self, ckpt: training.Checkpoint, cfg: RuntimeConfig = RuntimeConfig()):
        self.ckpt = ckpt
        self.cfg = cfg
        self.chain = dsp.FilterChain(N_CHANNELS)
        self.faults = 0
        self._buf = np.zeros((N_CHANNELS, 0))
        self._buf_start = 0  # absolute index of _buf[:, 0]
        self._next_window = 0  # absolute start index of the next window
        self._seq = 0

    def push(self, chunk) -> list[DecodeTick]:
        clean = self.chain.process(np.asarray(chunk, dtype=np.float64))
        self._buf = np.concatenate([self._buf, clean], axis=1)
        ticks = []
        win, hop = self.cfg.window_samples, self.cfg.tick_samples
        while self._buf_start + self._buf.shape[1] >= self._next_window + win:
            lo = self._next_window - self._buf_start
            data = self._buf[:, lo : lo + win]
            seq = self._seq
            self._seq += 1
            start = self._next_window
            self._next_window += hop
            feats = features.feature_matrix(data).reshape(-1)
            out = training.predict(self.ckpt, feats)
            if not np.all(np.isfinite(out)):
                self.faults += 1
                continue
            ticks.append(
                DecodeTick(
                    seq=seq,
                    t=(start + win) / dsp.FS,
                    labels=np.clip(out, -self.cfg.label_clip, self.cfg.label_clip),
                    window_start=start,
                )
            )
        # drop samples no future window needs
        keep_from = self._next_window - self._buf_start
        if keep_from > 0:
            self._buf = self._buf[:, keep_from:]
            self._buf_start = self._next_window
        return ticks


def play_record(samples, chunk: int = 50):
    """Yield a stored record in fixed-size chunks (file playback source)."""
    samples = np.asarray(samples, dtype=np.float64)
    for i in range(0, samples.shape[1], chunk):
        yield samples[:, i : i + chunk]


def stream_decode(source, ckpt: training.Checkpoint,
                  cfg: RuntimeConfig = RuntimeConfig()):
    """Decode an iterable of 12-channel chunks into DecodeTicks."""
    decoder = StreamDecoder(ckpt, cfg)
    for chunk in source:
        yield from decoder.push(chunk)


def scripted_sine_signal(freq_hz: float, duration_s: float, seed,
                         gen_cfg: synth.GeneratorConfig = synth.GeneratorConfig(),
                         mixing=None) -> synth.MultiChannelSignal:
    """Synthetic record whose whole-hand activation traces |sin(2*pi*f*t)|,
    flexors on the positive half-cycle, extensors on the negative."""
    n = int(round(duration_s * dsp.FS))
    t = np.arange(n) / dsp.FS
    u = np.sin(2 * np.pi * freq_hz * t)
    labels = np.tile(u[:, None], (1, 5))
    activation = np.concatenate(
        [np.maximum(labels, 0.0), np.maximum(-labels, 0.0)], axis=1
    ).T  # (10, n)
    return synth.generate_signal(activation, duration_s, seed, cfg=gen_cfg, mixing=mixing)


class SessionAborted(RuntimeError):
    """Raised when a tracking session hits a burst of dropped ticks."""


@dataclass
class TrackingSession:
    mode: str
    freq_hz: float
    amplitude: float
    finger: int
    times: np.ndarray
    target: np.ndarray
    decoded: np.ndarray
    metrics: TrackingMetrics
    faults: int = 0


def run_sine_session(freq_hz: float, duration_s: float, ckpt, finger: int,
                     seed=7, cfg: RuntimeConfig = RuntimeConfig(),
                     gen_cfg: synth.GeneratorConfig = synth.GeneratorConfig(),
                     mixing=None, feedback_gain: float = 0.15,
                     decoder=None) -> TrackingSession:
    """Scripted closed-loop sine tracking on one finger.

    A scripted operator stands in for the human: it drives the whole hand
    (graded flexion/extension effort, the axis the two extremes span) with
    the target as feedforward plus an integral correction from the
    displayed decoded value, clipped to maximal effort. Only the selected
    finger's output is scored. feedback_gain=0 gives the pure open-loop
    source activation(t) = sin(2*pi*f*t).
    """
    if freq_hz * duration_s < 2:
        raise ValueError("duration must cover at least two periods")
    if decoder is None:
        decoder = StreamDecoder(ckpt, cfg)
    gen = synth.StreamingSynth(seed, cfg=gen_cfg, mixing=mixing)

    n_ticks = int(round(duration_s * dsp.FS)) // cfg.tick_samples
    correction = 0.0
    last_decoded = 0.0
    consecutive_faults = 0
    times, target, decoded = [], [], []
    for k in range(n_ticks):
        t_now = (k + 1) * cfg.tick_samples / dsp.FS
        r = cfg.sine_amplitude * np.sin(2 * np.pi * freq_hz * t_now)
        u = float(np.clip(r + correction, -1.0, 1.0))
        gen.set_labels(np.full(5, u))
        ticks = decoder.push(gen.next_chunk(cfg.tick_samples))
        if not ticks and t_now >= cfg.window_samples / dsp.FS + 1e-9:
            consecutive_faults += 1
            if consecutive_faults > cfg.fault_burst_limit:
                raise SessionAborted(
                    f"{consecutive_faults} consecutive dropped ticks"
                )
        for tick in ticks:
            consecutive_faults = 0
            last_decoded = float(tick.labels[finger])
            times.append(tick.t)
            target.append(cfg.sine_amplitude * np.sin(2 * np.pi * freq_hz * tick.t))
            decoded.append(last_decoded)
        correction += feedback_gain * (r - last_decoded)
    times = np.asarray(times)
    target = np.asarray(target)
    decoded = np.asarray(decoded)
    return TrackingSession(
        mode="sine",
        freq_hz=freq_hz,
        amplitude=cfg.sine_amplitude,
        finger=finger,
        times=times,
        target=target,
        decoded=decoded,
        metrics=tracking_metrics(target, decoded),
        faults=getattr(decoder, "faults", 0),
    )


def benchmark_decode(ckpt, duration_s: float = 300.0, seed=11,
                     cfg: RuntimeConfig = RuntimeConfig()) -> np.ndarray:
    """Per-tick compute latency (seconds) over a scripted stream processed
    flat out; used to check the 50 ms deadline budget."""
    record = scripted_sine_signal(0.1, duration_s, seed)
    decoder = StreamDecoder(ckpt, cfg)
    latencies = []
    for chunk in play_record(record.samples, chunk=cfg.tick_samples):
        t0 = time.perf_counter()
        ticks = decoder.push(chunk)
        elapsed = time.perf_counter() - t0
        latencies.extend([elapsed] * len(ticks))
    return np.asarray(latencies)

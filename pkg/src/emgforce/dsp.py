"""Causal preprocessing chain and sliding-window segmentation.

Stage order is fixed: DC removal -> 10-450 Hz band-pass -> 50 Hz notch ->
full-wave rectification. All filtering is causal single-pass (no
zero-phase), so the offline training path and the streaming decode path
see identical numbers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import signal as sig

FS = 1000
BAND = (10.0, 450.0)
BANDPASS_ORDER = 6  # overall order; 3rd-order low/high prototype composition
NOTCH_FREQ = 50.0
NOTCH_BW = 2.0  # -3 dB width
DC_CUTOFF = 0.5  # streaming DC-removal high-pass corner

WINDOW_LEN = 200  # 200 ms at 1 kHz
HOP = 50  # 50 ms step


def design_dc_highpass():
    return sig.butter(1, DC_CUTOFF, btype="highpass", fs=FS)


def design_bandpass():
    # butter() takes the prototype order; a 3rd-order prototype yields a
    # band-pass with 6 poles, i.e. overall order 6.
    return sig.butter(BANDPASS_ORDER // 2, BAND, btype="bandpass", fs=FS)


def design_notch():
    return sig.iirnotch(NOTCH_FREQ, NOTCH_FREQ / NOTCH_BW, fs=FS)


def remove_dc(x, mode: str = "offline") -> np.ndarray:
    """DC removal for one channel.

    offline: subtract the record mean (output mean 0 to fp precision).
    streaming: causal first-order 0.5 Hz high-pass, the form FilterChain uses.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty input")
    if mode == "offline":
        return x - x.mean()
    if mode == "streaming":
        b, a = design_dc_highpass()
        return sig.lfilter(b, a, x)
    raise ValueError(f"unknown mode {mode!r}")


def bandpass(x, fs: int = FS) -> np.ndarray:
    """Causal 6th-order Butterworth band-pass, 10-450 Hz."""
    if fs != FS:
        raise ValueError(f"only fs={FS} is supported, got {fs}")
    b, a = design_bandpass()
    return sig.lfilter(b, a, np.asarray(x, dtype=np.float64))


def notch50(x) -> np.ndarray:
    """Causal second-order IIR notch centered at 50 Hz (2 Hz wide)."""
    b, a = design_notch()
    return sig.lfilter(b, a, np.asarray(x, dtype=np.float64))


def rectify(x) -> np.ndarray:
    return np.abs(np.asarray(x, dtype=np.float64))


def dump_coeffs() -> dict:
    """Filter coefficients for comparison against external design tools."""
    out = {}
    for name, (b, a) in (
        ("dc_highpass", design_dc_highpass()),
        ("bandpass", design_bandpass()),
        ("notch", design_notch()),
    ):
        out[name] = {"b": list(map(float, b)), "a": list(map(float, a))}
    return out


class FilterChain:
    """Streaming preprocessing chain holding per-channel filter state.

    Feeding a record in arbitrary chunk sizes equals processing it in one
    call, bit for bit, because lfilter's state carry is exact. Instances
    are single-owner: one chain per stream.
    """

    def __init__(self, n_channels: int = 12):
        self.n_channels = n_channels
        self._stages = [design_dc_highpass(), design_bandpass(), design_notch()]
        self.reset()

    def reset(self):
        self._zi = [
            np.zeros((self.n_channels, max(len(b), len(a)) - 1))
            for b, a in self._stages
        ]

    def process(self, chunk) -> np.ndarray:
        """Advance the chain over a (n_channels, n) chunk; returns rectified output."""
        y = np.asarray(chunk, dtype=np.float64)
        if y.ndim != 2 or y.shape[0] != self.n_channels:
            raise ValueError(f"expected ({self.n_channels}, n) chunk, got {y.shape}")
        for stage, (b, a) in enumerate(self._stages):
            y, self._zi[stage] = sig.lfilter(b, a, y, axis=1, zi=self._zi[stage])
        return np.abs(y)


def preprocess_record(samples) -> np.ndarray:
    """Canonical whole-record preprocessing: one fresh FilterChain pass.

    This is the exact form the online decoder applies, so features built
    here match the live stream tick for tick.
    """
    samples = np.asarray(samples, dtype=np.float64)
    chain = FilterChain(n_channels=samples.shape[0])
    return chain.process(samples)


@dataclass
class WindowedSegment:
    data: np.ndarray  # (12, 200)
    start_index: int
    label: Optional[np.ndarray] = None


def num_windows(n_samples: int) -> int:
    if n_samples < WINDOW_LEN:
        raise ValueError(f"record shorter than one window ({n_samples} < {WINDOW_LEN})")
    return (n_samples - WINDOW_LEN) // HOP + 1


def window(record, label=None) -> list[WindowedSegment]:
    """Slice a preprocessed (channels, N) record into 200/50 segments."""
    data = np.asarray(record, dtype=np.float64)
    n = data.shape[-1]
    m = num_windows(n)
    return [
        WindowedSegment(
            data=data[:, i * HOP : i * HOP + WINDOW_LEN],
            start_index=i * HOP,
            label=label,
        )
        for i in range(m)
    ]

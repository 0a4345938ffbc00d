"""Per-window time-domain amplitude features.

Eight features per channel, each monotone in the signal amplitude so
scaling the signal scales the features. All are degree-1 homogeneous
except VAR, which is degree 2 (scaling a window by 0.7 multiplies its
VAR by 0.49).
"""

from __future__ import annotations

import numpy as np

FEATURE_NAMES = ("RMS", "MAV", "VAR", "SD", "INT", "WL", "DASDV", "DAMV")
N_FEATURES = len(FEATURE_NAMES)

# Homogeneity degree per feature: extract(k*w) = k**deg * extract(w) for k > 0.
SCALING_DEGREES = (1, 1, 2, 1, 1, 1, 1, 1)

VAR_INDEX = FEATURE_NAMES.index("VAR")


def extract(window) -> np.ndarray:
    """Extract the 8 features from a single-channel window of N >= 2 samples."""
    w = np.asarray(window, dtype=np.float64)
    if w.ndim != 1:
        raise ValueError(f"expected a 1-D window, got shape {w.shape}")
    return extract_batch(w)


def extract_batch(windows) -> np.ndarray:
    """Vectorized extract over the last axis: (..., N) -> (..., 8)."""
    w = np.asarray(windows, dtype=np.float64)
    n = w.shape[-1]
    if n < 2:
        raise ValueError(f"window needs >= 2 samples, got {n}")
    absw = np.abs(w)
    mean = w.mean(axis=-1, keepdims=True)
    rms = np.sqrt(np.mean(w * w, axis=-1))
    mav = absw.mean(axis=-1)
    var = np.sum((w - mean) ** 2, axis=-1) / (n - 1)
    sd = np.sqrt(var)
    integ = absw.sum(axis=-1)
    diff = np.diff(w, axis=-1)
    absdiff = np.abs(diff)
    wl = absdiff.sum(axis=-1)
    dasdv = np.sqrt(np.sum(diff * diff, axis=-1) / (n - 1))
    damv = wl / (n - 1)
    return np.stack([rms, mav, var, sd, integ, wl, dasdv, damv], axis=-1)


def feature_matrix(segment_data) -> np.ndarray:
    """12x8 feature block for one windowed segment, one row per channel.

    Channels are processed independently, so a perturbation confined to
    one electrode only moves that channel's row.
    """
    data = np.asarray(segment_data, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError(f"expected (channels, samples), got shape {data.shape}")
    return extract_batch(data)


def flatten_features(fm) -> np.ndarray:
    """Channel-major 96-vector: channel 0's 8 features first."""
    return np.asarray(fm, dtype=np.float64).reshape(-1)


def scaling_law(feature, k: float) -> float:
    """Multiplicative factor applied to a feature when the window scales by k > 0.

    `feature` is an index into FEATURE_NAMES or a feature name.
    """
    if k <= 0:
        raise ValueError("scale factor must be positive")
    if isinstance(feature, str):
        idx = FEATURE_NAMES.index(feature)
    else:
        idx = int(feature)
    return float(k ** SCALING_DEGREES[idx])

"""Offline analyses: force-direction classification, interpolation sweeps,
monotone/linear fit verdicts, and tracking metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import dsp, features, training
from .config import FINGER_NAMES


class DegenerateColumn(ValueError):
    """A finger column with only one class present."""


def auc_with_se(scores, truth):
    """Mann-Whitney AUC (ties count 1/2) with the Hanley-McNeil standard error."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=bool)
    n_pos = int(truth.sum())
    n_neg = int((~truth).sum())
    if n_pos == 0 or n_neg == 0:
        raise DegenerateColumn("both classes must be present")
    ranks = stats.rankdata(scores)  # average ranks, so ties contribute 1/2
    auc = (ranks[truth].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)
    q1 = auc / (2 - auc)
    q2 = 2 * auc * auc / (1 + auc)
    var = (
        auc * (1 - auc)
        + (n_pos - 1) * (q1 - auc * auc)
        + (n_neg - 1) * (q2 - auc * auc)
    ) / (n_pos * n_neg)
    return float(auc), float(np.sqrt(max(var, 0.0)))


@dataclass
class FingerStats:
    finger: int
    auc: float
    se: float
    accuracy: float


@dataclass
class DirectionReport:
    kind: str
    fingers: list  # of FingerStats
    n_windows: int


def direction_scores(ckpt: training.Checkpoint, records):
    """Model outputs and true labels per test window, pooled over records."""
    outs, labs = [], []
    for sigrec, labels in records:
        x = training.record_features(sigrec.samples)
        outs.append(training.predict(ckpt, x))
        labs.append(np.tile(labels.as_array(), (len(x), 1)))
    return np.concatenate(outs), np.concatenate(labs)


def direction_report_from_scores(outputs, labels, kind="") -> DirectionReport:
    outputs = np.asarray(outputs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    fingers = []
    for j in range(5):
        auc, se = auc_with_se(outputs[:, j], labels[:, j] > 0)
        # 0 is the decision threshold; an exactly-zero output counts as wrong.
        correct = ((outputs[:, j] > 0) & (labels[:, j] > 0)) | (
            (outputs[:, j] < 0) & (labels[:, j] < 0)
        )
        fingers.append(FingerStats(j, auc, se, float(correct.mean())))
    return DirectionReport(kind=kind, fingers=fingers, n_windows=len(outputs))


def direction_report(ckpt: training.Checkpoint, records) -> DirectionReport:
    outputs, labels = direction_scores(ckpt, records)
    return direction_report_from_scores(outputs, labels, kind=ckpt.kind)


@dataclass
class SweepCurve:
    finger: int
    direction: str  # flexion | extension | combined
    s: np.ndarray
    values: np.ndarray


def default_grid(start=0.1, stop=1.0, step=0.1) -> np.ndarray:
    n = int(round((stop - start) / step)) + 1
    return np.round(np.linspace(start, stop, n), 12)


def interpolation_sweep(ckpt: training.Checkpoint, records, grid=None):
    """Scale the rectified test windows by each s, re-extract features and
    forward; flexion records sweep toward +s, extension toward -s.

    Scaling is applied post-preprocessing: by the chain's positive
    homogeneity this matches scaling the raw signal, without re-filtering
    at every grid point. Returns {finger: {direction: SweepCurve}}.
    """
    if grid is None:
        grid = default_grid()
    grid = np.asarray(grid, dtype=np.float64)

    windows, labels = [], []
    for sigrec, lab in records:
        clean = dsp.preprocess_record(sigrec.samples)
        for seg in dsp.window(clean):
            windows.append(seg.data)
            labels.append(lab.as_array())
    windows = np.stack(windows)  # (n, 12, 200)
    labels = np.stack(labels)

    # Mean model output per finger at each scale, over every test window.
    per_scale = []
    for s in grid:
        feats = features.extract_batch(windows * s).reshape(len(windows), -1)
        per_scale.append(training.predict(ckpt, feats))
    per_scale = np.stack(per_scale)  # (n_grid, n_windows, 5)

    out = {}
    for j in range(5):
        flex = labels[:, j] > 0
        ext = labels[:, j] < 0
        flex_vals = per_scale[:, flex, j].mean(axis=1) if flex.any() else np.full(len(grid), np.nan)
        ext_vals = per_scale[:, ext, j].mean(axis=1) if ext.any() else np.full(len(grid), np.nan)
        flex_curve = SweepCurve(j, "flexion", grid.copy(), flex_vals)
        ext_curve = SweepCurve(j, "extension", -grid, ext_vals)
        comb_s = np.concatenate([-grid[::-1], grid])
        comb_v = np.concatenate([ext_vals[::-1], flex_vals])
        out[j] = {
            "flexion": flex_curve,
            "extension": ext_curve,
            "combined": SweepCurve(j, "combined", comb_s, comb_v),
        }
    return out


@dataclass
class FitVerdict:
    monotone: bool
    linear: bool
    rho: float
    r2: float
    rho_min: float
    r2_min: float

    @property
    def passed(self) -> bool:
        return self.monotone and self.linear


def fit_verdict(curve: SweepCurve, rho_min: float = 0.99, r2_min: float = 0.95) -> FitVerdict:
    """Monotone iff Spearman rho >= rho_min; linear iff the least-squares
    line's R^2 >= r2_min. Grid order does not matter (sorted internally)."""
    order = np.argsort(curve.s)
    s = np.asarray(curve.s)[order]
    v = np.asarray(curve.values)[order]
    if len(s) < 5:
        raise ValueError("need at least 5 grid points")

    import warnings

    with warnings.catch_warnings():
        # a constant curve has no defined rank correlation; treat as non-monotone
        warnings.simplefilter("ignore", stats.ConstantInputWarning)
        rho = stats.spearmanr(s, v).statistic
    monotone = bool(np.isfinite(rho) and rho >= rho_min)

    vbar = v.mean()
    sst = float(np.sum((v - vbar) ** 2))
    if sst == 0.0 or not np.all(np.isfinite(v)):
        r2 = float("nan")
        linear = False
    else:
        slope, intercept = np.polyfit(s, v, 1)
        resid = v - (slope * s + intercept)
        r2 = 1.0 - float(np.sum(resid**2)) / sst
        linear = bool(r2 >= r2_min)
    return FitVerdict(
        monotone=monotone,
        linear=linear,
        rho=float(rho) if np.isfinite(rho) else float("nan"),
        r2=r2,
        rho_min=rho_min,
        r2_min=r2_min,
    )


@dataclass
class TrackingMetrics:
    rmse: float
    mape: float
    r2: float
    n_mape: int  # samples with |target| >= 0.1 that entered the MAPE mean


MAPE_TARGET_FLOOR = 0.1


def tracking_metrics(target, decoded) -> TrackingMetrics:
    """RMSE, MAPE and R^2 of a decoded series against its target.

    MAPE averages |err/target| only where |target| >= 0.1, which keeps a
    zero-crossing sine target from blowing the metric up.
    """
    target = np.asarray(target, dtype=np.float64)
    decoded = np.asarray(decoded, dtype=np.float64)
    if target.shape != decoded.shape:
        raise ValueError(f"length mismatch: {target.shape} vs {decoded.shape}")
    if target.size < 2:
        raise ValueError("need at least 2 samples")
    err = decoded - target
    rmse = float(np.sqrt(np.mean(err * err)))
    mask = np.abs(target) >= MAPE_TARGET_FLOOR
    mape = float(np.mean(np.abs(err[mask] / target[mask]))) if mask.any() else float("nan")
    sst = float(np.sum((target - target.mean()) ** 2))
    r2 = 1.0 - float(np.sum(err * err)) / sst if sst > 0 else float("nan")
    return TrackingMetrics(rmse=rmse, mape=mape, r2=r2, n_mape=int(mask.sum()))


def finger_name(j: int) -> str:
    return FINGER_NAMES[j]

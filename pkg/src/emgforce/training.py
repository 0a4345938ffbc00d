"""Dataset assembly, the two-point training protocol, and checkpoints.

Training data comes exclusively from the force extremes (labels in
{-1, +1}); intermediate force levels are never seen. Splits are made at
the record level so windows from one gesture repetition never straddle
train and test. One checkpoint is trained per subject.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dsp, features, models
from .config import TrainConfig
from .models import TrainingDiverged  # re-export for callers

NORM_FLOOR = 1e-12


@dataclass
class NormStats:
    """Per-dimension max-abs scales (96-vector). x -> x / scale fixes the
    origin, so scaled-down inputs map proportionally through the linear
    kinds."""

    scale: np.ndarray

    @classmethod
    def from_features(cls, x) -> "NormStats":
        x = np.asarray(x, dtype=np.float64)
        return cls(scale=np.maximum(np.abs(x).max(axis=0), NORM_FLOOR))

    def apply(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) / self.scale


@dataclass
class SubjectData:
    """Windowed feature dataset for one subject (or any record list)."""

    x: np.ndarray  # (n_windows, 96)
    y: np.ndarray  # (n_windows, 5)
    record_index: np.ndarray  # (n_windows,) record id per window
    n_records: int


def record_features(samples) -> np.ndarray:
    """Preprocess one raw record and extract per-window flattened features."""
    clean = dsp.preprocess_record(samples)
    segs = dsp.window(clean)
    return np.stack([features.feature_matrix(s.data).reshape(-1) for s in segs])


def build_subject_data(records) -> SubjectData:
    """records: list of (MultiChannelSignal, FingerLabels)."""
    xs, ys, idx = [], [], []
    for rec_id, (sigrec, labels) in enumerate(records):
        x = record_features(sigrec.samples)
        xs.append(x)
        ys.append(np.tile(labels.as_array(), (len(x), 1)))
        idx.append(np.full(len(x), rec_id))
    return SubjectData(
        x=np.concatenate(xs),
        y=np.concatenate(ys),
        record_index=np.concatenate(idx),
        n_records=len(records),
    )


def split_records(n_records: int, seed: int = 42):
    """Deterministic record-level split: one third test, two thirds train+val."""
    if n_records < 3:
        raise ValueError("need at least 3 records to split")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_records)
    n_test = n_records // 3
    test = np.sort(perm[:n_test])
    train_val = np.sort(perm[n_test:])
    return train_val, test


def _windows_of(data: SubjectData, record_ids) -> np.ndarray:
    return np.isin(data.record_index, record_ids)


@dataclass
class TrainReport:
    fold_val_mse: list
    mean_val_mse: float
    final_train_mse: float
    epochs: int


@dataclass
class Checkpoint:
    kind: str
    dims: dict
    params: dict
    norm: NormStats
    meta: dict = field(default_factory=dict)


def predict(ckpt: Checkpoint, x_raw) -> np.ndarray:
    """Forward raw (unnormalized) flattened features through a checkpoint."""
    xn = ckpt.norm.apply(x_raw)
    return models.forward(ckpt.kind, ckpt.params, xn, ckpt.dims)


def _run_adam(kind, dims, params, x, y, cfg: TrainConfig, rng):
    state = models.init_adam_state(params)
    n = len(x)
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for i in range(0, n, cfg.batch_size):
            batch = perm[i : i + cfg.batch_size]
            loss, grads = models.value_and_grad(kind, params, x[batch], y[batch], dims)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite training loss ({kind})")
            params, state = models.adam_step(params, grads, state, cfg.lr)
    return params


def _mse_on(kind, dims, params, x, y) -> float:
    yhat = models.forward(kind, params, x, dims)
    return models.mse_loss(yhat, np.asarray(y, dtype=np.float64))


def _dims_for(kind: str, cfg: TrainConfig) -> dict:
    return models.default_dims(
        kind, hidden=cfg.hidden, cnn_channels=cfg.cnn_channels, cnn_fc=cfg.cnn_fc
    )


def train(
    data: SubjectData,
    kind: str,
    cfg: TrainConfig = TrainConfig(),
    train_val_records=None,
    meta: dict | None = None,
):
    """Ten-fold cross-validation then a full retrain on all train_val records.

    Normalization stats are computed on the training folds only (and on
    all train_val data for the released checkpoint). Returns
    (Checkpoint, TrainReport); the pair is deterministic in (data, cfg).
    """
    if kind not in models.KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    if data.x.size == 0:
        raise ValueError("empty dataset")
    dims = _dims_for(kind, cfg)
    if train_val_records is None:
        train_val_records = np.arange(data.n_records)
    train_val_records = np.asarray(train_val_records)
    if len(train_val_records) < cfg.folds:
        raise ValueError(
            f"{cfg.folds}-fold cross-validation needs at least {cfg.folds} "
            f"train/val records, got {len(train_val_records)}"
        )

    fold_rng = np.random.default_rng(cfg.seed)
    fold_perm = fold_rng.permutation(train_val_records)
    folds = np.array_split(fold_perm, cfg.folds)

    fold_losses = []
    for k, fold_records in enumerate(folds):
        train_records = np.setdiff1d(train_val_records, fold_records)
        tr_mask = _windows_of(data, train_records)
        va_mask = _windows_of(data, fold_records)
        norm = NormStats.from_features(data.x[tr_mask])
        params = models.init_params(kind, dims, (cfg.seed, k))
        shuffle_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, k, 1)))
        params = _run_adam(
            kind, dims, params, norm.apply(data.x[tr_mask]), data.y[tr_mask], cfg, shuffle_rng
        )
        fold_losses.append(_mse_on(kind, dims, params, norm.apply(data.x[va_mask]), data.y[va_mask]))

    # Released checkpoint: retrain on everything that is not test data.
    full_mask = _windows_of(data, train_val_records)
    norm = NormStats.from_features(data.x[full_mask])
    params = models.init_params(kind, dims, (cfg.seed, cfg.folds))
    shuffle_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, cfg.folds, 1)))
    params = _run_adam(
        kind, dims, params, norm.apply(data.x[full_mask]), data.y[full_mask], cfg, shuffle_rng
    )
    final_mse = _mse_on(kind, dims, params, norm.apply(data.x[full_mask]), data.y[full_mask])

    report = TrainReport(
        fold_val_mse=[float(v) for v in fold_losses],
        mean_val_mse=float(np.mean(fold_losses)),
        final_train_mse=float(final_mse),
        epochs=cfg.epochs,
    )
    ckpt_meta = {
        "seed": cfg.seed,
        "lr": cfg.lr,
        "epochs": cfg.epochs,
        "folds": cfg.folds,
        "batch_size": cfg.batch_size,
        "fold_val_mse": report.fold_val_mse,
        "mean_val_mse": report.mean_val_mse,
        "final_train_mse": report.final_train_mse,
        "train_val_records": [int(r) for r in np.sort(train_val_records)],
        **(meta or {}),
    }
    ckpt = Checkpoint(kind=kind, dims=dims, params=params, norm=norm, meta=ckpt_meta)
    return ckpt, report


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Structured-text checkpoint; floats serialize via repr and so
    round-trip bit-exactly."""
    doc = {
        "kind": ckpt.kind,
        "dims": ckpt.dims,
        "params": {
            name: {"shape": list(arr.shape), "data": arr.reshape(-1).tolist()}
            for name, arr in ckpt.params.items()
        },
        "norm_scale": ckpt.norm.scale.tolist(),
        "meta": ckpt.meta,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> Checkpoint:
    with open(path) as fh:
        doc = json.load(fh)
    params = {
        name: np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in doc["params"].items()
    }
    return Checkpoint(
        kind=doc["kind"],
        dims=doc["dims"],
        params=params,
        norm=NormStats(scale=np.asarray(doc["norm_scale"], dtype=np.float64)),
        meta=doc["meta"],
    )

"""The four finger-force regressors, written directly in numpy.

All map a normalized 12x8 feature block (flattened to 96 for the dense
kinds) to 5 finger-force labels, with no activation at the output:

  ln  - three bias-free linear layers; exactly linear end to end.
  dd  - gated near-linear net: C = Win x, G = Wg C, H = G*C + G,
        y = Wout H; exactly quadratic in its input, no biases.
  mlp - three dense layers with biases, ReLU after the first two.
  cnn - two 3x3 convs (pad 1) + ReLU, 2x2 max-pool, two dense layers.

Forward passes cache intermediates; backward returns analytic gradients
of the batch-mean MSE. Adam is the standard bias-corrected recursion.
"""

from __future__ import annotations

import numpy as np

KINDS = ("ln", "dd", "mlp", "cnn")

INPUT_CHANNELS = 12
INPUT_FEATURES = 8
INPUT_DIM = INPUT_CHANNELS * INPUT_FEATURES
OUTPUT_DIM = 5


class TrainingDiverged(RuntimeError):
    """Raised when a loss or gradient goes non-finite."""


def default_dims(kind: str, hidden: int = 64, cnn_channels=(8, 16), cnn_fc: int = 64) -> dict:
    if kind == "ln":
        return {"layers": [INPUT_DIM, hidden, hidden, OUTPUT_DIM]}
    if kind == "dd":
        return {"layers": [INPUT_DIM, hidden, OUTPUT_DIM]}
    if kind == "mlp":
        return {"layers": [INPUT_DIM, hidden, hidden, OUTPUT_DIM]}
    if kind == "cnn":
        return {
            "conv_channels": list(cnn_channels),
            "fc": cnn_fc,
            "input_hw": [INPUT_CHANNELS, INPUT_FEATURES],
        }
    raise ValueError(f"unknown model kind {kind!r}")


def _param_specs(kind: str, dims: dict):
    """(name, shape, fan_in) triples in init order."""
    if kind == "ln":
        d0, d1, d2, d3 = dims["layers"]
        return [("W1", (d1, d0), d0), ("W2", (d2, d1), d1), ("W3", (d3, d2), d2)]
    if kind == "dd":
        d0, d1, d2 = dims["layers"]
        return [("Win", (d1, d0), d0), ("Wg", (d1, d1), d1), ("Wout", (d2, d1), d1)]
    if kind == "mlp":
        d0, d1, d2, d3 = dims["layers"]
        return [
            ("W1", (d1, d0), d0), ("b1", (d1,), d0),
            ("W2", (d2, d1), d1), ("b2", (d2,), d1),
            ("W3", (d3, d2), d2), ("b3", (d3,), d2),
        ]
    if kind == "cnn":
        c1, c2 = dims["conv_channels"]
        h, w = dims["input_hw"]
        flat = c2 * (h // 2) * (w // 2)
        fc = dims["fc"]
        return [
            ("K1", (c1, 1, 3, 3), 9), ("bk1", (c1,), 9),
            ("K2", (c2, c1, 3, 3), 9 * c1), ("bk2", (c2,), 9 * c1),
            ("Wf1", (fc, flat), flat), ("bf1", (fc,), flat),
            ("Wf2", (OUTPUT_DIM, fc), fc), ("bf2", (OUTPUT_DIM,), fc),
        ]
    raise ValueError(f"unknown model kind {kind!r}")


def init_params(kind: str, dims: dict, seed) -> dict:
    """Uniform +/- sqrt(1/fan_in) init, drawn in a fixed order."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    params = {}
    for name, shape, fan_in in _param_specs(kind, dims):
        bound = np.sqrt(1.0 / fan_in)
        params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def _relu(z):
    return np.maximum(z, 0.0)


# -- conv helpers (3x3, pad 1, stride 1) -------------------------------------

def _patches(x, k=3, pad=1):
    """Strided (B,C,H,W) -> (B,C,H,W,k,k) view of zero-padded 3x3 patches."""
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    return np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))


def _conv3x3(x, kernel, bias):
    """x (B,Cin,H,W), kernel (Cout,Cin,3,3) -> (B,Cout,H,W), pad 1."""
    sw = _patches(x)
    z = np.tensordot(sw, kernel, axes=([1, 4, 5], [1, 2, 3]))  # (B,H,W,Cout)
    return np.ascontiguousarray(z.transpose(0, 3, 1, 2)) + bias[:, None, None]


def _conv3x3_backward(x, kernel, dz):
    """Gradients of _conv3x3: returns (dx, dkernel, dbias)."""
    sw = _patches(x)
    dkernel = np.tensordot(dz, sw, axes=([0, 2, 3], [0, 2, 3]))  # (Cout,Cin,3,3)
    dbias = dz.sum(axis=(0, 2, 3))
    # dx is the full convolution of dz with the 180-degree-rotated kernel.
    swz = _patches(dz)
    krot = kernel[:, :, ::-1, ::-1]
    dx = np.tensordot(swz, krot, axes=([1, 4, 5], [0, 2, 3]))  # (B,H,W,Cin)
    return np.ascontiguousarray(dx.transpose(0, 3, 1, 2)), dkernel, dbias


def _maxpool2(x):
    """2x2 stride-2 max pool with argmax cache; (B,C,H,W) -> (B,C,H/2,W/2)."""
    b, c, h, w = x.shape
    grouped = (
        x.reshape(b, c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(b, c, h // 2, w // 2, 4)
    )
    idx = grouped.argmax(axis=-1)
    out = np.take_along_axis(grouped, idx[..., None], axis=-1)[..., 0]
    return out, idx


def _maxpool2_backward(dout, idx, shape):
    b, c, h, w = shape
    dgrouped = np.zeros((b, c, h // 2, w // 2, 4))
    np.put_along_axis(dgrouped, idx[..., None], dout[..., None], axis=-1)
    return (
        dgrouped.reshape(b, c, h // 2, w // 2, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(b, c, h, w)
    )


# -- forward / backward -------------------------------------------------------

def _as_batch(kind, x, dims):
    x = np.asarray(x, dtype=np.float64)
    if kind == "cnn":
        h, w = dims["input_hw"]
        if x.ndim == 2 and x.shape == (h, w):
            return x[None], True
        if x.ndim == 1 and x.size == h * w:
            return x.reshape(1, h, w), True
        if x.ndim == 2 and x.shape[1] == h * w:
            return x.reshape(-1, h, w), False
        if x.ndim == 3 and x.shape[1:] == (h, w):
            return x, False
        raise ValueError(f"cnn input must be ({h}, {w}) blocks, got {x.shape}")
    d0 = dims["layers"][0]
    if x.ndim == 1:
        if x.size != d0:
            raise ValueError(f"expected a {d0}-vector, got {x.size}")
        return x[None], True
    if x.ndim == 2 and x.shape[1] == d0:
        return x, False
    raise ValueError(f"expected (batch, {d0}), got {x.shape}")


def forward(kind: str, params: dict, x, dims: dict):
    """Batch forward pass; accepts a single input or a batch."""
    xb, single = _as_batch(kind, x, dims)
    y, _ = _forward_cache(kind, params, xb)
    return y[0] if single else y


def _forward_cache(kind, params, xb):
    if kind == "ln":
        h1 = xb @ params["W1"].T
        h2 = h1 @ params["W2"].T
        y = h2 @ params["W3"].T
        return y, (xb, h1, h2)
    if kind == "dd":
        c = xb @ params["Win"].T
        g = c @ params["Wg"].T
        hh = g * c + g
        y = hh @ params["Wout"].T
        return y, (xb, c, g, hh)
    if kind == "mlp":
        z1 = xb @ params["W1"].T + params["b1"]
        a1 = _relu(z1)
        z2 = a1 @ params["W2"].T + params["b2"]
        a2 = _relu(z2)
        y = a2 @ params["W3"].T + params["b3"]
        return y, (xb, z1, a1, z2, a2)
    if kind == "cnn":
        return _cnn_forward_cache(params, xb)
    raise ValueError(f"unknown model kind {kind!r}")


def _cnn_forward_cache(params, xb):
    b = xb.shape[0]
    x4 = xb[:, None]  # (B, 1, H, W)
    z1 = _conv3x3(x4, params["K1"], params["bk1"])
    a1 = _relu(z1)
    z2 = _conv3x3(a1, params["K2"], params["bk2"])
    a2 = _relu(z2)
    pooled, poolidx = _maxpool2(a2)
    flat = pooled.reshape(b, -1)
    z3 = flat @ params["Wf1"].T + params["bf1"]
    a3 = _relu(z3)
    y = a3 @ params["Wf2"].T + params["bf2"]
    return y, (x4, z1, a1, z2, a2, poolidx, flat, z3, a3)


def _backward(kind, params, cache, dy):
    if kind == "ln":
        xb, h1, h2 = cache
        grads = {"W3": dy.T @ h2}
        dh2 = dy @ params["W3"]
        grads["W2"] = dh2.T @ h1
        dh1 = dh2 @ params["W2"]
        grads["W1"] = dh1.T @ xb
        return grads
    if kind == "dd":
        xb, c, g, hh = cache
        grads = {"Wout": dy.T @ hh}
        dh = dy @ params["Wout"]
        dg = dh * (c + 1.0)
        dc = dh * g + dg @ params["Wg"]
        grads["Wg"] = dg.T @ c
        grads["Win"] = dc.T @ xb
        return grads
    if kind == "mlp":
        xb, z1, a1, z2, a2 = cache
        grads = {"W3": dy.T @ a2, "b3": dy.sum(axis=0)}
        da2 = dy @ params["W3"]
        dz2 = da2 * (z2 > 0)
        grads["W2"] = dz2.T @ a1
        grads["b2"] = dz2.sum(axis=0)
        da1 = dz2 @ params["W2"]
        dz1 = da1 * (z1 > 0)
        grads["W1"] = dz1.T @ xb
        grads["b1"] = dz1.sum(axis=0)
        return grads
    if kind == "cnn":
        return _cnn_backward(params, cache, dy)
    raise ValueError(f"unknown model kind {kind!r}")


def _cnn_backward(params, cache, dy):
    x4, z1, a1, z2, a2, poolidx, flat, z3, a3 = cache
    grads = {"Wf2": dy.T @ a3, "bf2": dy.sum(axis=0)}
    da3 = dy @ params["Wf2"]
    dz3 = da3 * (z3 > 0)
    grads["Wf1"] = dz3.T @ flat
    grads["bf1"] = dz3.sum(axis=0)
    dflat = dz3 @ params["Wf1"]
    dpool = dflat.reshape(a2.shape[0], a2.shape[1], a2.shape[2] // 2, a2.shape[3] // 2)
    da2 = _maxpool2_backward(dpool, poolidx, a2.shape)
    dz2 = da2 * (z2 > 0)
    da1, grads["K2"], grads["bk2"] = _conv3x3_backward(a1, params["K2"], dz2)
    dz1 = da1 * (z1 > 0)
    _, grads["K1"], grads["bk1"] = _conv3x3_backward(x4, params["K1"], dz1)
    return grads


def mse_loss(y, t) -> float:
    d = y - t
    return float(np.mean(d * d))


def value_and_grad(kind: str, params: dict, x, t, dims: dict):
    """Batch-mean MSE and its analytic gradient w.r.t. every parameter."""
    xb, _ = _as_batch(kind, x, dims)
    t = np.asarray(t, dtype=np.float64).reshape(xb.shape[0], OUTPUT_DIM)
    y, cache = _forward_cache(kind, params, xb)
    diff = y - t
    loss = float(np.mean(diff * diff))
    dy = (2.0 / diff.size) * diff
    grads = _backward(kind, params, cache, dy)
    return loss, grads


# -- Adam ---------------------------------------------------------------------

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def init_adam_state(params: dict) -> dict:
    return {
        "t": 0,
        "m": {k: np.zeros_like(v) for k, v in params.items()},
        "v": {k: np.zeros_like(v) for k, v in params.items()},
    }


def adam_step(params: dict, grads: dict, state: dict, lr: float):
    """One bias-corrected Adam update; returns (new_params, new_state)."""
    for g in grads.values():
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged("non-finite gradient")
    t = state["t"] + 1
    new_params, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        m = ADAM_BETA1 * state["m"][k] + (1 - ADAM_BETA1) * g
        v = ADAM_BETA2 * state["v"][k] + (1 - ADAM_BETA2) * g * g
        mhat = m / (1 - ADAM_BETA1**t)
        vhat = v / (1 - ADAM_BETA2**t)
        new_params[k] = p - lr * mhat / (np.sqrt(vhat) + ADAM_EPS)
        new_m[k], new_v[k] = m, v
    return new_params, {"t": t, "m": new_m, "v": new_v}

"""Differentiable operations on :class:`~sensorcodec.tensor.Tensor`.

Every op computes its forward value with numpy and, when a tape is active
and an input requires a gradient, records a closure mapping the output
gradient to input gradients. Layouts are channels-last throughout.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import _kernels
from .tensor import NumericError, Tensor, as_tensor, record

ACTIVATIONS = ("relu", "sigmoid", "softmax", "linear", "tanh")


def _check_finite(arr, name):
    if not np.isfinite(arr).all():
        raise NumericError(f"{name}: non-finite values in output")


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and structural
# ---------------------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return record((a, b), out, back)


def neg(a):
    return record((a,), -a.data, lambda g: (-g,))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def back(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return record((a, b), out, back)


def sum(x):  # noqa: A001 - mirrors numpy naming
    shape = x.shape
    out = np.asarray(x.data.sum(), dtype=x.dtype)
    return record((x,), out, lambda g: (np.broadcast_to(g, shape).copy(),))


def mean(x):
    shape, n = x.shape, x.size
    out = np.asarray(x.data.mean(), dtype=x.dtype)
    return record((x,), out, lambda g: (np.full(shape, g / n, dtype=x.dtype),))


def reshape(x, shape):
    src = x.shape
    out = x.data.reshape(shape)
    return record((x,), out, lambda g: (g.reshape(src),))


def flatten(x):
    """Collapse every axis after the first."""
    return reshape(x, (x.shape[0], -1))


def repeat_vector(x, n):
    """(N, F) -> (N, n, F)."""
    if x.ndim != 2:
        raise ValueError(f"repeat_vector expects (N, F), got {x.shape}")
    out = np.repeat(x.data[:, None, :], n, axis=1)
    return record((x,), out, lambda g: (g.sum(axis=1),))


# ---------------------------------------------------------------------------
# linear layers
# ---------------------------------------------------------------------------

def dense(x, W, b):
    """out[..., o] = sum_i x[..., i] W[i, o] + b[o]."""
    if W.ndim != 2 or x.shape[-1] != W.shape[0] or b.shape != (W.shape[1],):
        raise ValueError(f"dense: incompatible shapes x{x.shape} W{W.shape} b{b.shape}")
    out = x.data @ W.data + b.data
    _check_finite(out, "dense")

    def back(g):
        x2 = x.data.reshape(-1, W.shape[0])
        g2 = g.reshape(-1, W.shape[1])
        return g @ W.data.T, x2.T @ g2, g2.sum(axis=0)

    return record((x, W, b), out, back)


def _same_pad(k):
    left = (k - 1) // 2
    return left, k - 1 - left


def conv1d(x, kernels, bias, padding="valid"):
    """Stride-1 convolution along axis 1 of x[N, T, C] with kernels[K, C, F]."""
    if x.ndim != 3 or kernels.ndim != 3 or x.shape[2] != kernels.shape[1]:
        raise ValueError(f"conv1d: incompatible shapes x{x.shape} kernels{kernels.shape}")
    K, C, F = kernels.shape
    N, T, _ = x.shape
    if padding == "same":
        pads = _same_pad(K)
        xp = np.pad(x.data, ((0, 0), pads, (0, 0)))
    elif padding == "valid":
        pads = (0, 0)
        xp = x.data
    else:
        raise ValueError(f"unknown padding {padding!r}")
    if K > xp.shape[1]:
        raise ValueError(f"conv1d: kernel width {K} exceeds padded length {xp.shape[1]}")
    To = xp.shape[1] - K + 1
    # (N, To, C, K) -> (N, To, K, C)
    cols = sliding_window_view(xp, K, axis=1).transpose(0, 1, 3, 2).reshape(N * To, K * C)
    kflat = kernels.data.reshape(K * C, F)
    out = (cols @ kflat).reshape(N, To, F) + bias.data
    _check_finite(out, "conv1d")

    def back(g):
        g2 = g.reshape(N * To, F)
        dk = (cols.T @ g2).reshape(K, C, F)
        dcols = (g2 @ kflat.T).reshape(N, To, K, C)
        dxp = np.zeros(xp.shape, dtype=g.dtype)
        for k in range(K):
            dxp[:, k:k + To, :] += dcols[:, :, k, :]
        dx = dxp[:, pads[0]:pads[0] + T, :]
        return dx, dk, g2.sum(axis=0)

    return record((x, kernels, bias), out, back)


def conv2d(x, kernels, bias, padding="valid"):
    """Stride-1 2-D convolution of x[N, H, W, C] with kernels[Kh, Kw, C, F]."""
    if x.ndim != 4 or kernels.ndim != 4 or x.shape[3] != kernels.shape[2]:
        raise ValueError(f"conv2d: incompatible shapes x{x.shape} kernels{kernels.shape}")
    Kh, Kw, C, F = kernels.shape
    N, H, W, _ = x.shape
    if padding == "same":
        ph, pw = _same_pad(Kh), _same_pad(Kw)
        xp = np.pad(x.data, ((0, 0), ph, pw, (0, 0)))
    elif padding == "valid":
        ph, pw = (0, 0), (0, 0)
        xp = x.data
    else:
        raise ValueError(f"unknown padding {padding!r}")
    if Kh > xp.shape[1] or Kw > xp.shape[2]:
        raise ValueError(f"conv2d: kernel {Kh}x{Kw} exceeds padded input {xp.shape[1:3]}")
    Ho, Wo = xp.shape[1] - Kh + 1, xp.shape[2] - Kw + 1
    # (N, Ho, Wo, C, Kh, Kw) -> (N, Ho, Wo, Kh, Kw, C)
    cols = sliding_window_view(xp, (Kh, Kw), axis=(1, 2)).transpose(0, 1, 2, 4, 5, 3)
    cols = cols.reshape(N * Ho * Wo, Kh * Kw * C)
    kflat = kernels.data.reshape(Kh * Kw * C, F)
    out = (cols @ kflat).reshape(N, Ho, Wo, F) + bias.data
    _check_finite(out, "conv2d")

    def back(g):
        g2 = g.reshape(N * Ho * Wo, F)
        dk = (cols.T @ g2).reshape(Kh, Kw, C, F)
        dcols = (g2 @ kflat.T).reshape(N, Ho, Wo, Kh, Kw, C)
        dxp = np.zeros(xp.shape, dtype=g.dtype)
        for i in range(Kh):
            for j in range(Kw):
                dxp[:, i:i + Ho, j:j + Wo, :] += dcols[:, :, :, i, j, :]
        dx = dxp[:, ph[0]:ph[0] + H, pw[0]:pw[0] + W, :]
        return dx, dk, g2.sum(axis=0)

    return record((x, kernels, bias), out, back)


# ---------------------------------------------------------------------------
# pooling / upsampling
# ---------------------------------------------------------------------------

def max_pool(x, window, axes):
    """Non-overlapping max pooling of ``x`` over ``axes`` with the given window.

    Axes whose length is not a multiple of the window are padded at the end
    with -inf. The backward pass routes each gradient to the first maximal
    element of its window.
    """
    window = tuple(int(p) for p in np.atleast_1d(window))
    axes = tuple(a % x.ndim for a in np.atleast_1d(axes))
    if len(window) != len(axes):
        raise ValueError("max_pool: one window size per pooled axis")
    win = dict(zip(axes, window))

    pad = [(0, 0)] * x.ndim
    for ax, p in win.items():
        pad[ax] = (0, (-x.shape[ax]) % p)
    xp = np.pad(x.data, pad, constant_values=-np.inf) if any(r for _, r in pad) else x.data

    split_shape, outer, inner = [], [], []
    for ax, n in enumerate(xp.shape):
        if ax in win:
            split_shape += [n // win[ax], win[ax]]
            outer.append(len(split_shape) - 2)
            inner.append(len(split_shape) - 1)
        else:
            split_shape.append(n)
            outer.append(len(split_shape) - 1)
    perm = outer + inner
    out_shape = tuple(split_shape[i] for i in outer)
    width = int(np.prod(window))

    rows = np.ascontiguousarray(xp.reshape(split_shape).transpose(perm)).reshape(-1, width)
    vals, idx = _kernels.pool_forward(rows)
    out = vals.reshape(out_shape)

    def back(g):
        drows = _kernels.pool_backward(np.ascontiguousarray(g.reshape(-1)), idx, width)
        t_shape = [split_shape[i] for i in perm]
        dxp = drows.reshape(t_shape).transpose(np.argsort(perm)).reshape(xp.shape)
        crop = tuple(slice(0, n) for n in x.shape)
        return (np.ascontiguousarray(dxp[crop]),)

    return record((x,), out, back)


def upsample2d(x, factor):
    """Nearest-neighbour upsampling of x[N, H, W, C] by (fh, fw)."""
    fh, fw = factor
    N, H, W, C = x.shape
    out = np.repeat(np.repeat(x.data, fh, axis=1), fw, axis=2)

    def back(g):
        return (g.reshape(N, H, fh, W, fw, C).sum(axis=(2, 4)),)

    return record((x,), out, back)


# ---------------------------------------------------------------------------
# recurrent
# ---------------------------------------------------------------------------

def lstm(x, W, U, b, units, return_sequences=False, activation="tanh"):
    """LSTM over x[N, T, C], zero initial state.

    W[C, 4u], U[u, 4u] and b[4u] hold the input, recurrent and bias weights
    with gates ordered input, forget, candidate, output. ``activation`` is
    applied to the candidate and to the cell state on output (tanh in the
    standard cell); the gates always use the logistic sigmoid.
    """
    if x.ndim != 3:
        raise ValueError(f"lstm expects (N, T, C), got {x.shape}")
    N, T, C = x.shape
    if W.shape != (C, 4 * units) or U.shape != (units, 4 * units) or b.shape != (4 * units,):
        raise ValueError(
            f"lstm: weights W{W.shape} U{U.shape} b{b.shape} do not fit C={C}, units={units}"
        )
    if activation not in ("tanh", "relu"):
        raise ValueError(f"lstm activation must be tanh or relu, got {activation!r}")
    act = _kernels.ACT_RELU if activation == "relu" else _kernels.ACT_TANH
    dtype = x.dtype

    xw = (x.data.reshape(N * T, C) @ W.data + b.data).reshape(N, T, 4 * units)
    h = np.zeros((N, units), dtype=dtype)
    c = np.zeros((N, units), dtype=dtype)
    hs = np.empty((N, T, units), dtype=dtype)
    cs = np.empty((N, T, units), dtype=dtype)
    gates = np.empty((N, T, 4 * units), dtype=dtype)
    Ud = U.data
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T):
            z = np.ascontiguousarray(xw[:, t]) + h @ Ud
            gates[:, t], c, h = _kernels.lstm_cell_forward(z, c, act)
            hs[:, t] = h
            cs[:, t] = c
    if not (np.isfinite(hs).all() and np.isfinite(cs).all()):
        raise NumericError("lstm: non-finite hidden or cell state")
    out = hs if return_sequences else hs[:, -1].copy()

    def back(g):
        if return_sequences:
            dh_seq = g
        else:
            dh_seq = np.zeros_like(hs)
            dh_seq[:, -1] = g
        dz_all = np.empty_like(gates)
        dU = np.zeros_like(Ud)
        dh_next = np.zeros((N, units), dtype=dtype)
        dc_next = np.zeros((N, units), dtype=dtype)
        zeros = np.zeros((N, units), dtype=dtype)
        for t in range(T - 1, -1, -1):
            c_prev = cs[:, t - 1] if t > 0 else zeros
            h_prev = hs[:, t - 1] if t > 0 else zeros
            dh = np.ascontiguousarray(dh_seq[:, t]) + dh_next
            dz, dc_next = _kernels.lstm_cell_backward(
                dh, dc_next, np.ascontiguousarray(gates[:, t]),
                np.ascontiguousarray(cs[:, t]), np.ascontiguousarray(c_prev), act,
            )
            dz_all[:, t] = dz
            dU += h_prev.T @ dz
            dh_next = dz @ Ud.T
        dz2 = dz_all.reshape(N * T, 4 * units)
        dx = (dz2 @ W.data.T).reshape(N, T, C)
        dW = x.data.reshape(N * T, C).T @ dz2
        return dx, dW, dU, dz2.sum(axis=0)

    return record((x, W, U, b), out, back)


# ---------------------------------------------------------------------------
# activations, dropout
# ---------------------------------------------------------------------------

def _sigmoid(z):
    return (0.5 * (1 + np.tanh(0.5 * z))).astype(z.dtype, copy=False)


def activation(x, kind):
    if kind == "linear":
        return x
    if kind == "relu":
        mask = x.data > 0
        return record((x,), x.data * mask, lambda g: (g * mask,))
    if kind == "sigmoid":
        s = _sigmoid(x.data)
        return record((x,), s, lambda g: (g * s * (1 - s),))
    if kind == "tanh":
        t = np.tanh(x.data)
        return record((x,), t, lambda g: (g * (1 - t * t),))
    if kind == "softmax":
        z = x.data - x.data.max(axis=-1, keepdims=True)
        e = np.exp(z)
        s = e / e.sum(axis=-1, keepdims=True)
        return record((x,), s, lambda g: (s * (g - (g * s).sum(axis=-1, keepdims=True)),))
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def relu(x):
    return activation(x, "relu")


def sigmoid(x):
    return activation(x, "sigmoid")


def softmax(x):
    return activation(x, "softmax")


def tanh(x):
    return activation(x, "tanh")


def dropout(x, rate, training, rng=None):
    """Inverted dropout: zero with probability ``rate``, scale survivors by 1/(1-rate)."""
    if not 0 <= rate < 1:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an explicit rng")
    keep = rng.random(x.shape) >= rate
    scale = np.asarray(1.0 / (1.0 - rate), dtype=x.dtype)
    mask = keep * scale
    return record((x,), x.data * mask, lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def mse(pred, target):
    """Mean of squared differences over all elements."""
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise ValueError(f"mse: shape mismatch {pred.shape} vs {target.shape}")
    diff = pred.data - target.data.astype(pred.dtype, copy=False)
    n = diff.size
    out = np.asarray(np.mean(diff * diff), dtype=pred.dtype)
    _check_finite(out, "mse")

    def back(g):
        d = (2.0 / n) * g * diff
        return d, -d

    return record((pred, target), out, back)


PROB_CLIP = 1e-7


def categorical_cross_entropy(probs, onehot, validate=True):
    """-mean_n sum_k onehot[n,k] log(clip(probs[n,k])).

    With ``validate`` the rows of ``probs`` must sum to 1 within 1e-5.
    Clipped entries receive zero gradient.
    """
    onehot = as_tensor(onehot)
    if probs.shape != onehot.shape or probs.ndim != 2:
        raise ValueError(f"cross-entropy: shapes {probs.shape} vs {onehot.shape}")
    if validate:
        sums = probs.data.sum(axis=1)
        if not np.allclose(sums, 1.0, rtol=0, atol=1e-5):
            raise ValueError("cross-entropy: probability rows must sum to 1 within 1e-5")
    p = probs.data
    pc = np.clip(p, PROB_CLIP, 1 - PROB_CLIP)
    y = onehot.data.astype(p.dtype, copy=False)
    N = p.shape[0]
    out = np.asarray(-(y * np.log(pc)).sum() / N, dtype=p.dtype)
    _check_finite(out, "categorical_cross_entropy")

    def back(g):
        inside = (p >= PROB_CLIP) & (p <= 1 - PROB_CLIP)
        return -g * y / pc / N * inside, None

    return record((probs, onehot), out, back)


__all__ = [
    "ACTIVATIONS", "Tensor", "activation", "add", "categorical_cross_entropy", "conv1d",
    "conv2d", "dense", "dropout", "flatten", "lstm", "max_pool", "mean", "mse", "mul",
    "neg", "relu", "repeat_vector", "reshape", "sigmoid", "softmax", "sum", "tanh",
    "upsample2d",
]

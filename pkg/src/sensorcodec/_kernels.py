"""Hot inner loops with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``SENSORCODEC_DISABLE_NUMBA`` is unset or ``0``. Both paths are
always importable as ``*_numpy`` / ``*_numba`` so they can be compared.
"""

import os

import numpy as np

ACT_TANH = 0
ACT_RELU = 1

_DISABLED = os.environ.get("SENSORCODEC_DISABLE_NUMBA", "0") not in ("", "0", "false", "False")

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and not _DISABLED


# ---------------------------------------------------------------------------
# max pooling over a (rows, window) layout
# ---------------------------------------------------------------------------

def pool_forward_numpy(x2d):
    idx = np.argmax(x2d, axis=1)
    out = np.take_along_axis(x2d, idx[:, None], axis=1)[:, 0]
    return out, idx


def pool_backward_numpy(g, idx, width):
    dx = np.zeros((g.shape[0], width), dtype=g.dtype)
    np.put_along_axis(dx, idx[:, None], g[:, None], axis=1)
    return dx


# ---------------------------------------------------------------------------
# LSTM pointwise cell math
#
# z: (N, 4U) pre-activations in gate order i, f, g, o.
# ---------------------------------------------------------------------------

def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lstm_cell_forward_numpy(z, c_prev, act):
    u = c_prev.shape[1]
    i = _sigmoid(z[:, :u])
    f = _sigmoid(z[:, u:2 * u])
    o = _sigmoid(z[:, 3 * u:])
    if act == ACT_RELU:
        g = np.maximum(z[:, 2 * u:3 * u], 0)
    else:
        g = np.tanh(z[:, 2 * u:3 * u])
    c = f * c_prev + i * g
    ac = np.maximum(c, 0) if act == ACT_RELU else np.tanh(c)
    h = o * ac
    gates = np.concatenate([i, f, g, o], axis=1)
    return gates, c, h


def lstm_cell_backward_numpy(dh, dc_next, gates, c, c_prev, act):
    u = c.shape[1]
    i = gates[:, :u]
    f = gates[:, u:2 * u]
    g = gates[:, 2 * u:3 * u]
    o = gates[:, 3 * u:]
    if act == ACT_RELU:
        ac = np.maximum(c, 0)
        dac = (c > 0).astype(c.dtype)
        dg_pre = (g > 0).astype(c.dtype)
    else:
        ac = np.tanh(c)
        dac = 1 - ac * ac
        dg_pre = 1 - g * g
    do = dh * ac
    dc = dh * o * dac + dc_next
    dz = np.empty_like(gates)
    dz[:, :u] = dc * g * i * (1 - i)
    dz[:, u:2 * u] = dc * c_prev * f * (1 - f)
    dz[:, 2 * u:3 * u] = dc * i * dg_pre
    dz[:, 3 * u:] = do * o * (1 - o)
    return dz, dc * f


if HAS_NUMBA:

    @njit(cache=True, nogil=True)
    def pool_forward_numba(x2d):
        m, p = x2d.shape
        out = np.empty(m, dtype=x2d.dtype)
        idx = np.empty(m, dtype=np.int64)
        for r in range(m):
            best = x2d[r, 0]
            k = 0
            for j in range(1, p):
                # strict > keeps the first maximum on ties
                if x2d[r, j] > best:
                    best = x2d[r, j]
                    k = j
            out[r] = best
            idx[r] = k
        return out, idx

    @njit(cache=True, nogil=True)
    def pool_backward_numba(g, idx, width):
        m = g.shape[0]
        dx = np.zeros((m, width), dtype=g.dtype)
        for r in range(m):
            dx[r, idx[r]] = g[r]
        return dx

    @njit(cache=True, nogil=True)
    def _sig(v):
        if v >= 0:
            return 1.0 / (1.0 + np.exp(-v))
        e = np.exp(v)
        return e / (1.0 + e)

    @njit(cache=True, nogil=True)
    def lstm_cell_forward_numba(z, c_prev, act):
        n, u = c_prev.shape
        gates = np.empty_like(z)
        c = np.empty_like(c_prev)
        h = np.empty_like(c_prev)
        for r in range(n):
            for j in range(u):
                i = _sig(z[r, j])
                f = _sig(z[r, u + j])
                zg = z[r, 2 * u + j]
                if act == 1:
                    g = zg if zg > 0 else 0.0
                else:
                    g = np.tanh(zg)
                o = _sig(z[r, 3 * u + j])
                cv = f * c_prev[r, j] + i * g
                if act == 1:
                    ac = cv if cv > 0 else 0.0
                else:
                    ac = np.tanh(cv)
                gates[r, j] = i
                gates[r, u + j] = f
                gates[r, 2 * u + j] = g
                gates[r, 3 * u + j] = o
                c[r, j] = cv
                h[r, j] = o * ac
        return gates, c, h

    @njit(cache=True, nogil=True)
    def lstm_cell_backward_numba(dh, dc_next, gates, c, c_prev, act):
        n, u = c.shape
        dz = np.empty_like(gates)
        dc_prev = np.empty_like(c)
        for r in range(n):
            for j in range(u):
                i = gates[r, j]
                f = gates[r, u + j]
                g = gates[r, 2 * u + j]
                o = gates[r, 3 * u + j]
                cv = c[r, j]
                if act == 1:
                    ac = cv if cv > 0 else 0.0
                    dac = 1.0 if cv > 0 else 0.0
                    dgp = 1.0 if g > 0 else 0.0
                else:
                    ac = np.tanh(cv)
                    dac = 1.0 - ac * ac
                    dgp = 1.0 - g * g
                d_h = dh[r, j]
                dc = d_h * o * dac + dc_next[r, j]
                dz[r, j] = dc * g * i * (1.0 - i)
                dz[r, u + j] = dc * c_prev[r, j] * f * (1.0 - f)
                dz[r, 2 * u + j] = dc * i * dgp
                dz[r, 3 * u + j] = d_h * ac * o * (1.0 - o)
                dc_prev[r, j] = dc * f
        return dz, dc_prev

else:  # pragma: no cover
    pool_forward_numba = pool_forward_numpy
    pool_backward_numba = pool_backward_numpy
    lstm_cell_forward_numba = lstm_cell_forward_numpy
    lstm_cell_backward_numba = lstm_cell_backward_numpy


if USE_NUMBA:
    pool_forward = pool_forward_numba
    pool_backward = pool_backward_numba
    lstm_cell_forward = lstm_cell_forward_numba
    lstm_cell_backward = lstm_cell_backward_numba
else:
    pool_forward = pool_forward_numpy
    pool_backward = pool_backward_numpy
    lstm_cell_forward = lstm_cell_forward_numpy
    lstm_cell_backward = lstm_cell_backward_numpy


def backend():
    """Name of the active kernel backend."""
    return "numba" if USE_NUMBA else "numpy"

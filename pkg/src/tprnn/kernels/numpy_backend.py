"""Pure-numpy implementations of the hot kernels.

This is the fallback path selected by ``TPRNN_BACKEND=numpy``; the jitted
twins live in :mod:`tprnn.kernels.numba_backend` with identical signatures.
Recurrent kernels return the full hidden sequence plus whatever activations
their backward pass needs, so the caller can close over the cache.

Conventions: inputs are ``(length, channels)`` float64 arrays in time-major
order; recurrent weights are ``wx (in, gates*hidden)``, ``wh (hidden,
gates*hidden)``, ``b (gates*hidden,)``. LSTM gate column order is
input|forget|cell|output, GRU is reset|update|candidate.
"""

import numpy as np


def _sigmoid(x):
    # exp of a non-positive argument only, so large |x| cannot overflow
    z = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0 / (1.0 + z), z / (1.0 + z))


def _window_index(length, k, stride):
    out_len = (length - k) // stride + 1
    return np.arange(out_len)[:, None] * stride + np.arange(k)[None, :]


# ---------------------------------------------------------------------------
# depthwise 1-d convolution
# ---------------------------------------------------------------------------

def conv1d_fwd(x, kernels, stride):
    idx = _window_index(x.shape[0], kernels.shape[0], stride)
    return np.einsum("tkd,kd->td", x[idx], kernels)


def conv1d_bwd(g, x, kernels, stride):
    idx = _window_index(x.shape[0], kernels.shape[0], stride)
    dk = np.einsum("td,tkd->kd", g, x[idx])
    dx = np.zeros_like(x)
    np.add.at(dx, idx, g[:, None, :] * kernels[None, :, :])
    return dx, dk


# ---------------------------------------------------------------------------
# windowed pooling
# ---------------------------------------------------------------------------

def pool_max_fwd(x, k, stride):
    idx = _window_index(x.shape[0], k, stride)
    win = x[idx]
    # argmax returns the first occurrence, which is the tie-break contract
    arg = win.argmax(axis=1)
    y = np.take_along_axis(win, arg[:, None, :], axis=1)[:, 0, :]
    return y, idx[:, 0][:, None] + arg


def pool_min_fwd(x, k, stride):
    idx = _window_index(x.shape[0], k, stride)
    win = x[idx]
    arg = win.argmin(axis=1)
    y = np.take_along_axis(win, arg[:, None, :], axis=1)[:, 0, :]
    return y, idx[:, 0][:, None] + arg


def pool_avg_fwd(x, k, stride):
    idx = _window_index(x.shape[0], k, stride)
    return x[idx].mean(axis=1)


def pool_extreme_bwd(g, arg, length):
    dx = np.zeros((length, g.shape[1]), dtype=g.dtype)
    cols = np.broadcast_to(np.arange(g.shape[1]), arg.shape)
    np.add.at(dx, (arg, cols), g)
    return dx


def pool_avg_bwd(g, length, k, stride):
    dx = np.zeros((length, g.shape[1]), dtype=g.dtype)
    idx = _window_index(length, k, stride)
    np.add.at(dx, idx, np.repeat(g[:, None, :] / k, k, axis=1))
    return dx


# ---------------------------------------------------------------------------
# recurrent cells, full-sequence forward and backward-through-time
# ---------------------------------------------------------------------------

def rnn_tanh_fwd(x, wx, wh, b):
    length = x.shape[0]
    hidden = b.shape[0]
    hs = np.empty((length, hidden))
    hp = np.zeros(hidden)
    for t in range(length):
        hp = np.tanh(x[t] @ wx + hp @ wh + b)
        hs[t] = hp
    return (hs,)


def rnn_tanh_bwd(g, x, wx, wh, b, hs):
    length, hidden = hs.shape
    dx = np.empty_like(x)
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros_like(b)
    carry = np.zeros(hidden)
    for t in range(length - 1, -1, -1):
        da = (g[t] + carry) * (1.0 - hs[t] * hs[t])
        hprev = hs[t - 1] if t > 0 else np.zeros(hidden)
        dx[t] = da @ wx.T
        dwx += x[t].reshape(-1, 1) * da.reshape(1, -1)
        dwh += hprev.reshape(-1, 1) * da.reshape(1, -1)
        db += da
        carry = da @ wh.T
    return dx, dwx, dwh, db


def lstm_fwd(x, wx, wh, b):
    length = x.shape[0]
    hidden = b.shape[0] // 4
    hs = np.empty((length, hidden))
    cs = np.empty((length, hidden))
    gates = np.empty((length, 4 * hidden))
    tanh_c = np.empty((length, hidden))
    hp = np.zeros(hidden)
    cp = np.zeros(hidden)
    for t in range(length):
        a = x[t] @ wx + hp @ wh + b
        i = _sigmoid(a[:hidden])
        f = _sigmoid(a[hidden:2 * hidden])
        gc = np.tanh(a[2 * hidden:3 * hidden])
        o = _sigmoid(a[3 * hidden:])
        cp = f * cp + i * gc
        tc = np.tanh(cp)
        hp = o * tc
        hs[t] = hp
        cs[t] = cp
        tanh_c[t] = tc
        gates[t, :hidden] = i
        gates[t, hidden:2 * hidden] = f
        gates[t, 2 * hidden:3 * hidden] = gc
        gates[t, 3 * hidden:] = o
    return hs, cs, gates, tanh_c


def lstm_bwd(g, x, wx, wh, b, hs, cs, gates, tanh_c):
    length, hidden = hs.shape
    dx = np.empty_like(x)
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros_like(b)
    dh_carry = np.zeros(hidden)
    dc_carry = np.zeros(hidden)
    da = np.empty(4 * hidden)
    for t in range(length - 1, -1, -1):
        i = gates[t, :hidden]
        f = gates[t, hidden:2 * hidden]
        gc = gates[t, 2 * hidden:3 * hidden]
        o = gates[t, 3 * hidden:]
        cprev = cs[t - 1] if t > 0 else np.zeros(hidden)
        hprev = hs[t - 1] if t > 0 else np.zeros(hidden)
        dh = g[t] + dh_carry
        dc = dh * o * (1.0 - tanh_c[t] * tanh_c[t]) + dc_carry
        da[:hidden] = dc * gc * i * (1.0 - i)
        da[hidden:2 * hidden] = dc * cprev * f * (1.0 - f)
        da[2 * hidden:3 * hidden] = dc * i * (1.0 - gc * gc)
        da[3 * hidden:] = dh * tanh_c[t] * o * (1.0 - o)
        dc_carry = dc * f
        dx[t] = da @ wx.T
        dh_carry = da @ wh.T
        dwx += x[t].reshape(-1, 1) * da.reshape(1, -1)
        dwh += hprev.reshape(-1, 1) * da.reshape(1, -1)
        db += da
    return dx, dwx, dwh, db


def gru_fwd(x, wx, wh, b):
    length = x.shape[0]
    hidden = b.shape[0] // 3
    hs = np.empty((length, hidden))
    rz = np.empty((length, 2 * hidden))
    ns = np.empty((length, hidden))
    hns = np.empty((length, hidden))
    hp = np.zeros(hidden)
    for t in range(length):
        ax = x[t] @ wx
        ah = hp @ wh
        r = _sigmoid(ax[:hidden] + ah[:hidden] + b[:hidden])
        z = _sigmoid(ax[hidden:2 * hidden] + ah[hidden:2 * hidden] + b[hidden:2 * hidden])
        hn = ah[2 * hidden:]
        n = np.tanh(ax[2 * hidden:] + r * hn + b[2 * hidden:])
        hp = (1.0 - z) * n + z * hp
        hs[t] = hp
        rz[t, :hidden] = r
        rz[t, hidden:] = z
        ns[t] = n
        hns[t] = hn
    return hs, rz, ns, hns


def gru_bwd(g, x, wx, wh, b, hs, rz, ns, hns):
    length, hidden = hs.shape
    dx = np.empty_like(x)
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros_like(b)
    dh_carry = np.zeros(hidden)
    da = np.empty(3 * hidden)
    dah = np.empty(3 * hidden)
    for t in range(length - 1, -1, -1):
        r = rz[t, :hidden]
        z = rz[t, hidden:]
        n = ns[t]
        hprev = hs[t - 1] if t > 0 else np.zeros(hidden)
        dh = g[t] + dh_carry
        dz = dh * (hprev - n)
        dn = dh * (1.0 - z)
        dan = dn * (1.0 - n * n)
        dr = dan * hns[t]
        da[:hidden] = dr * r * (1.0 - r)
        da[hidden:2 * hidden] = dz * z * (1.0 - z)
        da[2 * hidden:] = dan
        dah[:2 * hidden] = da[:2 * hidden]
        dah[2 * hidden:] = dan * r
        dx[t] = da @ wx.T
        dh_carry = dh * z + dah @ wh.T
        dwx += x[t].reshape(-1, 1) * da.reshape(1, -1)
        dwh += hprev.reshape(-1, 1) * dah.reshape(1, -1)
        db += da
    return dx, dwx, dwh, db

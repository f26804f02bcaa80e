"""Jitted implementations of the hot kernels.

Signatures and numerics mirror :mod:`tprnn.kernels.numpy_backend`; the inner
loops are written out explicitly because that is what numba compiles best.
Compiled artifacts are cached on disk, so only the first call in a fresh
checkout pays the JIT cost.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _sigmoid(x):
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        v = x[i]
        if v >= 0.0:
            z = np.exp(-v)
            out[i] = 1.0 / (1.0 + z)
        else:
            z = np.exp(v)
            out[i] = z / (1.0 + z)
    return out


# ---------------------------------------------------------------------------
# depthwise 1-d convolution
# ---------------------------------------------------------------------------

@njit(cache=True)
def conv1d_fwd(x, kernels, stride):
    k, d = kernels.shape
    out_len = (x.shape[0] - k) // stride + 1
    y = np.zeros((out_len, d))
    for t in range(out_len):
        base = t * stride
        for j in range(k):
            for c in range(d):
                y[t, c] += kernels[j, c] * x[base + j, c]
    return y


@njit(cache=True)
def conv1d_bwd(g, x, kernels, stride):
    k, d = kernels.shape
    dx = np.zeros_like(x)
    dk = np.zeros_like(kernels)
    for t in range(g.shape[0]):
        base = t * stride
        for j in range(k):
            for c in range(d):
                dk[j, c] += g[t, c] * x[base + j, c]
                dx[base + j, c] += g[t, c] * kernels[j, c]
    return dx, dk


# ---------------------------------------------------------------------------
# windowed pooling
# ---------------------------------------------------------------------------

@njit(cache=True)
def pool_max_fwd(x, k, stride):
    d = x.shape[1]
    out_len = (x.shape[0] - k) // stride + 1
    y = np.empty((out_len, d))
    arg = np.empty((out_len, d), dtype=np.int64)
    for t in range(out_len):
        base = t * stride
        for c in range(d):
            best = x[base, c]
            at = base
            for j in range(1, k):
                v = x[base + j, c]
                if v > best:
                    best = v
                    at = base + j
            y[t, c] = best
            arg[t, c] = at
    return y, arg


@njit(cache=True)
def pool_min_fwd(x, k, stride):
    d = x.shape[1]
    out_len = (x.shape[0] - k) // stride + 1
    y = np.empty((out_len, d))
    arg = np.empty((out_len, d), dtype=np.int64)
    for t in range(out_len):
        base = t * stride
        for c in range(d):
            best = x[base, c]
            at = base
            for j in range(1, k):
                v = x[base + j, c]
                if v < best:
                    best = v
                    at = base + j
            y[t, c] = best
            arg[t, c] = at
    return y, arg


@njit(cache=True)
def pool_avg_fwd(x, k, stride):
    d = x.shape[1]
    out_len = (x.shape[0] - k) // stride + 1
    y = np.zeros((out_len, d))
    inv = 1.0 / k
    for t in range(out_len):
        base = t * stride
        for j in range(k):
            for c in range(d):
                y[t, c] += x[base + j, c] * inv
    return y


@njit(cache=True)
def pool_extreme_bwd(g, arg, length):
    dx = np.zeros((length, g.shape[1]))
    for t in range(g.shape[0]):
        for c in range(g.shape[1]):
            dx[arg[t, c], c] += g[t, c]
    return dx


@njit(cache=True)
def pool_avg_bwd(g, length, k, stride):
    dx = np.zeros((length, g.shape[1]))
    inv = 1.0 / k
    for t in range(g.shape[0]):
        base = t * stride
        for j in range(k):
            for c in range(g.shape[1]):
                dx[base + j, c] += g[t, c] * inv
    return dx


# ---------------------------------------------------------------------------
# recurrent cells, full-sequence forward and backward-through-time
# ---------------------------------------------------------------------------

@njit(cache=True)
def rnn_tanh_fwd(x, wx, wh, b):
    length = x.shape[0]
    hidden = b.shape[0]
    hs = np.empty((length, hidden))
    hp = np.zeros(hidden)
    for t in range(length):
        hp = np.tanh(np.dot(x[t], wx) + np.dot(hp, wh) + b)
        hs[t] = hp
    return (hs,)


@njit(cache=True)
def rnn_tanh_bwd(g, x, wx, wh, b, hs):
    length, hidden = hs.shape
    dx = np.empty_like(x)
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros_like(b)
    carry = np.zeros(hidden)
    zero = np.zeros(hidden)
    for t in range(length - 1, -1, -1):
        da = (g[t] + carry) * (1.0 - hs[t] * hs[t])
        hprev = hs[t - 1] if t > 0 else zero
        dx[t] = np.dot(da, wx.T)
        for i in range(wx.shape[0]):
            for j in range(hidden):
                dwx[i, j] += x[t, i] * da[j]
        for i in range(hidden):
            for j in range(hidden):
                dwh[i, j] += hprev[i] * da[j]
        db += da
        carry = np.dot(da, wh.T)
    return dx, dwx, dwh, db


@njit(cache=True)
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
        a = np.dot(x[t], wx) + np.dot(hp, wh) + b
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


@njit(cache=True)
def lstm_bwd(g, x, wx, wh, b, hs, cs, gates, tanh_c):
    length, hidden = hs.shape
    dx = np.empty_like(x)
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros_like(b)
    dh_carry = np.zeros(hidden)
    dc_carry = np.zeros(hidden)
    da = np.empty(4 * hidden)
    zero = np.zeros(hidden)
    for t in range(length - 1, -1, -1):
        i = gates[t, :hidden]
        f = gates[t, hidden:2 * hidden]
        gc = gates[t, 2 * hidden:3 * hidden]
        o = gates[t, 3 * hidden:]
        cprev = cs[t - 1] if t > 0 else zero
        hprev = hs[t - 1] if t > 0 else zero
        dh = g[t] + dh_carry
        dc = dh * o * (1.0 - tanh_c[t] * tanh_c[t]) + dc_carry
        da[:hidden] = dc * gc * i * (1.0 - i)
        da[hidden:2 * hidden] = dc * cprev * f * (1.0 - f)
        da[2 * hidden:3 * hidden] = dc * i * (1.0 - gc * gc)
        da[3 * hidden:] = dh * tanh_c[t] * o * (1.0 - o)
        dc_carry = dc * f
        dx[t] = np.dot(da, wx.T)
        dh_carry = np.dot(da, wh.T)
        for r in range(wx.shape[0]):
            for j in range(4 * hidden):
                dwx[r, j] += x[t, r] * da[j]
        for r in range(hidden):
            for j in range(4 * hidden):
                dwh[r, j] += hprev[r] * da[j]
        db += da
    return dx, dwx, dwh, db


@njit(cache=True)
def gru_fwd(x, wx, wh, b):
    length = x.shape[0]
    hidden = b.shape[0] // 3
    hs = np.empty((length, hidden))
    rz = np.empty((length, 2 * hidden))
    ns = np.empty((length, hidden))
    hns = np.empty((length, hidden))
    hp = np.zeros(hidden)
    for t in range(length):
        ax = np.dot(x[t], wx)
        ah = np.dot(hp, wh)
        r = _sigmoid(ax[:hidden] + ah[:hidden] + b[:hidden])
        z = _sigmoid(ax[hidden:2 * hidden] + ah[hidden:2 * hidden] + b[hidden:2 * hidden])
        hn = ah[2 * hidden:].copy()
        n = np.tanh(ax[2 * hidden:] + r * hn + b[2 * hidden:])
        hp = (1.0 - z) * n + z * hp
        hs[t] = hp
        rz[t, :hidden] = r
        rz[t, hidden:] = z
        ns[t] = n
        hns[t] = hn
    return hs, rz, ns, hns


@njit(cache=True)
def gru_bwd(g, x, wx, wh, b, hs, rz, ns, hns):
    length, hidden = hs.shape
    dx = np.empty_like(x)
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros_like(b)
    dh_carry = np.zeros(hidden)
    da = np.empty(3 * hidden)
    dah = np.empty(3 * hidden)
    zero = np.zeros(hidden)
    for t in range(length - 1, -1, -1):
        r = rz[t, :hidden]
        z = rz[t, hidden:]
        n = ns[t]
        hprev = hs[t - 1] if t > 0 else zero
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
        dx[t] = np.dot(da, wx.T)
        dh_carry = dh * z + np.dot(dah, wh.T)
        for i in range(wx.shape[0]):
            for j in range(3 * hidden):
                dwx[i, j] += x[t, i] * da[j]
        for i in range(hidden):
            for j in range(3 * hidden):
                dwh[i, j] += hprev[i] * dah[j]
        db += da
    return dx, dwx, dwh, db

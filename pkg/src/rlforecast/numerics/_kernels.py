"""Compiled whole-sequence GRU/LSTM passes.

Same arithmetic as the numpy step functions in ``tensor.py``; the tests
compare both.  Caches are laid out time-major in processing order.
"""
from __future__ import annotations

import math

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba ships with the test environment
    numba = None


# exp-based forms: scalar tanh is several times slower than exp under numba
def _sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def _tanh(x):
    return 2.0 / (1.0 + math.exp(-2.0 * x)) - 1.0


def gru_seq_forward(xw, u, reverse):
    batch, length, width = xw.shape
    hidden = width // 3
    u_zr = np.ascontiguousarray(u[:, :2 * hidden])
    u_n = np.ascontiguousarray(u[:, 2 * hidden:])
    hs = np.zeros((length + 1, batch, hidden))
    zs = np.empty((length, batch, hidden))
    rs = np.empty((length, batch, hidden))
    ns = np.empty((length, batch, hidden))
    rh = np.empty((batch, hidden))
    for k in range(length):
        t = length - 1 - k if reverse else k
        h = hs[k]
        a = np.dot(h, u_zr)
        for b in range(batch):
            for j in range(hidden):
                zs[k, b, j] = _sig(xw[b, t, j] + a[b, j])
                r = _sig(xw[b, t, hidden + j] + a[b, hidden + j])
                rs[k, b, j] = r
                rh[b, j] = r * h[b, j]
        c = np.dot(rh, u_n)
        for b in range(batch):
            for j in range(hidden):
                n = _tanh(xw[b, t, 2 * hidden + j] + c[b, j])
                ns[k, b, j] = n
                z = zs[k, b, j]
                hs[k + 1, b, j] = (1.0 - z) * n + z * h[b, j]
    return hs, zs, rs, ns


def gru_seq_backward(g, xw_shape, u, hs, zs, rs, ns, reverse):
    batch, length, width = xw_shape
    hidden = width // 3
    u_zr_t = np.ascontiguousarray(u[:, :2 * hidden].T)
    u_n_t = np.ascontiguousarray(u[:, 2 * hidden:].T)
    dxw = np.zeros((batch, length, width))
    du_zr = np.zeros((hidden, 2 * hidden))
    du_n = np.zeros((hidden, hidden))
    dh = g.copy()
    dn_pre = np.empty((batch, hidden))
    dzr = np.empty((batch, 2 * hidden))
    rh = np.empty((batch, hidden))
    for k in range(length - 1, -1, -1):
        t = length - 1 - k if reverse else k
        h = hs[k]
        for b in range(batch):
            for j in range(hidden):
                z = zs[k, b, j]
                n = ns[k, b, j]
                dn_pre[b, j] = dh[b, j] * (1.0 - z) * (1.0 - n * n)
                dzr[b, j] = dh[b, j] * (h[b, j] - n) * z * (1.0 - z)
                rh[b, j] = rs[k, b, j] * h[b, j]
        drh = np.dot(dn_pre, u_n_t)
        for b in range(batch):
            for j in range(hidden):
                r = rs[k, b, j]
                dzr[b, hidden + j] = drh[b, j] * h[b, j] * r * (1.0 - r)
        du_zr += np.dot(h.T, dzr)
        du_n += np.dot(rh.T, dn_pre)
        back = np.dot(dzr, u_zr_t)
        for b in range(batch):
            for j in range(2 * hidden):
                dxw[b, t, j] = dzr[b, j]
            for j in range(hidden):
                dxw[b, t, 2 * hidden + j] = dn_pre[b, j]
                dh[b, j] = dh[b, j] * zs[k, b, j] + drh[b, j] * rs[k, b, j] + back[b, j]
    du = np.concatenate((du_zr, du_n), axis=1)
    return dxw, du


def lstm_seq_forward(xw, u, reverse):
    batch, length, width = xw.shape
    hidden = width // 4
    hs = np.zeros((length + 1, batch, hidden))
    cs = np.zeros((length + 1, batch, hidden))
    gates = np.empty((length, batch, width))
    tcs = np.empty((length, batch, hidden))
    for k in range(length):
        t = length - 1 - k if reverse else k
        a = np.dot(hs[k], u)
        for b in range(batch):
            for j in range(hidden):
                i = _sig(xw[b, t, j] + a[b, j])
                f = _sig(xw[b, t, hidden + j] + a[b, hidden + j])
                cand = _tanh(xw[b, t, 2 * hidden + j] + a[b, 2 * hidden + j])
                o = _sig(xw[b, t, 3 * hidden + j] + a[b, 3 * hidden + j])
                gates[k, b, j] = i
                gates[k, b, hidden + j] = f
                gates[k, b, 2 * hidden + j] = cand
                gates[k, b, 3 * hidden + j] = o
                c_new = f * cs[k, b, j] + i * cand
                tc = _tanh(c_new)
                cs[k + 1, b, j] = c_new
                tcs[k, b, j] = tc
                hs[k + 1, b, j] = o * tc
    return hs, cs, gates, tcs


def lstm_seq_backward(g, xw_shape, u, hs, cs, gates, tcs, reverse):
    batch, length, width = xw_shape
    hidden = width // 4
    u_t = np.ascontiguousarray(u.T)
    dxw = np.zeros((batch, length, width))
    du = np.zeros((hidden, width))
    dh = g.copy()
    dc = np.zeros((batch, hidden))
    dz = np.empty((batch, width))
    for k in range(length - 1, -1, -1):
        t = length - 1 - k if reverse else k
        for b in range(batch):
            for j in range(hidden):
                i = gates[k, b, j]
                f = gates[k, b, hidden + j]
                cand = gates[k, b, 2 * hidden + j]
                o = gates[k, b, 3 * hidden + j]
                tc = tcs[k, b, j]
                dcj = dc[b, j] + dh[b, j] * o * (1.0 - tc * tc)
                dz[b, j] = dcj * cand * i * (1.0 - i)
                dz[b, hidden + j] = dcj * cs[k, b, j] * f * (1.0 - f)
                dz[b, 2 * hidden + j] = dcj * i * (1.0 - cand * cand)
                dz[b, 3 * hidden + j] = dh[b, j] * tc * o * (1.0 - o)
                dc[b, j] = dcj * f
        du += np.dot(hs[k].T, dz)
        dh = np.dot(dz, u_t)
        for b in range(batch):
            for j in range(width):
                dxw[b, t, j] = dz[b, j]
    return dxw, du


if numba is not None:
    _jit = numba.njit(cache=True, fastmath=False)
    _sig = _jit(_sig)
    _tanh = _jit(_tanh)
    gru_seq_forward = _jit(gru_seq_forward)
    gru_seq_backward = _jit(gru_seq_backward)
    lstm_seq_forward = _jit(lstm_seq_forward)
    lstm_seq_backward = _jit(lstm_seq_backward)

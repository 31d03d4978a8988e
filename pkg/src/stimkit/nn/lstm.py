"""LSTM cell and sequence pass with backpropagation through time.

Gate layout in the fused weight matrices is [input, forget, candidate,
output] along the last axis: wx is (d, 4m), wh is (m, 4m), bias (4m,).
The forget-gate bias block is initialized to one at parameter creation.
"""

from __future__ import annotations

import numpy as np

from ..errors import SizeError
from .ops import sigmoid


def lstm_step(x, h_prev, c_prev, wx, wh, b):
    """One cell update; returns (h, c, cache) for a (B, d) input batch."""
    if x.shape[-1] != wx.shape[0] or h_prev.shape[-1] != wh.shape[0] or wx.shape[1] != wh.shape[1]:
        raise SizeError(f"lstm shape mismatch: x{x.shape} wx{wx.shape} wh{wh.shape}")
    m = wh.shape[0]
    if wx.shape[1] != 4 * m or b.shape[0] != 4 * m:
        raise SizeError(f"lstm gates expect width 4*{m}, got wx{wx.shape} b{b.shape}")
    z = x @ wx + h_prev @ wh + b
    i = sigmoid(z[..., 0 * m : 1 * m])
    f = sigmoid(z[..., 1 * m : 2 * m])
    g = np.tanh(z[..., 2 * m : 3 * m])
    o = sigmoid(z[..., 3 * m : 4 * m])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    cache = (x, h_prev, c_prev, i, f, g, o, tc)
    return h, c, cache


def lstm_step_backward(dh, dc, cache, wx, wh):
    """Backward through one cell update.

    Returns (dx, dh_prev, dc_prev, dwx, dwh, db); dh and dc are gradients
    arriving at this step's outputs.
    """
    x, h_prev, c_prev, i, f, g, o, tc = cache
    do = dh * tc
    dct = dh * o * (1 - tc * tc) + dc
    di = dct * g
    df = dct * c_prev
    dg = dct * i
    dc_prev = dct * f
    dzi = di * i * (1 - i)
    dzf = df * f * (1 - f)
    dzg = dg * (1 - g * g)
    dzo = do * o * (1 - o)
    dz = np.concatenate([dzi, dzf, dzg, dzo], axis=-1)
    dx = dz @ wx.T
    dh_prev = dz @ wh.T
    dwx = x.T @ dz
    dwh = h_prev.T @ dz
    db = dz.sum(axis=0)
    return dx, dh_prev, dc_prev, dwx, dwh, db


def lstm_forward(xs, wx, wh, b):
    """Run the cell over a (B, T, d) sequence; returns (h_T, caches)."""
    batch, steps, _ = xs.shape
    m = wh.shape[0]
    h = np.zeros((batch, m), dtype=xs.dtype)
    c = np.zeros((batch, m), dtype=xs.dtype)
    caches = []
    for t in range(steps):
        h, c, cache = lstm_step(xs[:, t, :], h, c, wx, wh, b)
        caches.append(cache)
    return h, caches


def lstm_backward(dh_last, caches, wx, wh):
    """Backprop through time from the final hidden state only.

    Returns (dxs stacked (B, T, d), dwx, dwh, db).
    """
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(wx.shape[1], dtype=wx.dtype)
    dh = dh_last
    dc = np.zeros_like(dh_last)
    dxs = []
    for cache in reversed(caches):
        dx, dh, dc, g_wx, g_wh, g_b = lstm_step_backward(dh, dc, cache, wx, wh)
        dwx += g_wx
        dwh += g_wh
        db += g_b
        dxs.append(dx)
    return np.stack(dxs[::-1], axis=1), dwx, dwh, db

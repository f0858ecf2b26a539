"""Numpy implementations of the hot kernels.

Used when the compiled ``_core`` extension is unavailable, and as the
reference the compiled kernels are tested against. Signatures and array
layouts match ``_core.pyx`` exactly.

LSTM weights are stacked row-wise in gate order (forget, input, candidate,
output): ``W`` has shape ``(4H, H + F)`` and multiplies ``[h_prev, x_t]``.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def rolling_mean_std(values, n):
    """Trailing-window mean and population standard deviation.

    Entries before the first full window are NaN. Each window is shifted by
    its first element before summing, so a constant window gives back that
    constant and a standard deviation of exactly zero.
    """
    v = np.ascontiguousarray(values, dtype=np.float64)
    T = v.shape[0]
    mean = np.full(T, np.nan)
    std = np.full(T, np.nan)
    if T < n:
        return mean, std
    win = sliding_window_view(v, n)
    d = win - win[:, :1]
    mean_d = d.sum(axis=1) / n
    mean[n - 1:] = win[:, 0] + mean_d
    std[n - 1:] = np.sqrt(((d - mean_d[:, None]) ** 2).sum(axis=1) / n)
    return mean, std


def _sigmoid(z):
    return 0.5 * (np.tanh(0.5 * z) + 1.0)


def lstm_forward(W, b, X, h0, c0):
    """Run one LSTM layer over a sequence.

    Returns ``(hs, cs, gates)`` with shapes ``(T, H)``, ``(T, H)`` and
    ``(T, 4H)``; ``gates`` holds post-activation values ``[f, i, g, o]``.
    """
    T = X.shape[0]
    H = h0.shape[0]
    hs = np.empty((T, H))
    cs = np.empty((T, H))
    gates = np.empty((T, 4 * H))
    Wh = W[:, :H]
    # input projections for all steps in one product
    Z = X @ W[:, H:].T + b
    h, c = h0, c0
    for t in range(T):
        z = Wh @ h + Z[t]
        f = _sigmoid(z[:H])
        i = _sigmoid(z[H:2 * H])
        g = np.tanh(z[2 * H:3 * H])
        o = _sigmoid(z[3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
        hs[t] = h
        cs[t] = c
        gates[t, :H] = f
        gates[t, H:2 * H] = i
        gates[t, 2 * H:3 * H] = g
        gates[t, 3 * H:] = o
    return hs, cs, gates


def lstm_backward(W, X, hs, cs, gates, h0, c0, dhs):
    """Backpropagation through time for one LSTM layer.

    ``dhs[t]`` is the loss gradient arriving at ``h_t`` from outside the
    layer. Returns ``(dW, db, dX)``.
    """
    T = X.shape[0]
    H = h0.shape[0]
    Wh_T = W[:, :H].T
    dZ = np.empty((T, 4 * H))
    h_prev = np.vstack([h0[None, :], hs[:-1]])
    c_prev = np.vstack([c0[None, :], cs[:-1]])
    tcs = np.tanh(cs)
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for t in range(T - 1, -1, -1):
        f = gates[t, :H]
        i = gates[t, H:2 * H]
        g = gates[t, 2 * H:3 * H]
        o = gates[t, 3 * H:]
        tc = tcs[t]
        dh = dhs[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz = dZ[t]
        dz[:H] = dc * c_prev[t] * f * (1.0 - f)
        dz[H:2 * H] = dc * g * i * (1.0 - i)
        dz[2 * H:3 * H] = dc * i * (1.0 - g * g)
        dz[3 * H:] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = Wh_T @ dz
    dW = np.hstack([dZ.T @ h_prev, dZ.T @ X])
    return dW, dZ.sum(axis=0), dZ @ W[:, H:]

"""Callbacks of the two scheduling NLPs, selected by an integer kind.

Both problems share the data tuple ``(w, m, s, c_buy, c_sell, dt, scale, e0,
eta_ch, eta_dis, e_min, e_max)``.  Dispatching on a plain integer keeps every
compiled function cacheable across processes.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ._kernels import fixed_battery_terms, fixed_grid_hour_hessian, fixed_grid_terms, mix_fg
from .mixedrv import COMPLEMENTARITY_EPS

FIXED_GRID, FIXED_BATTERY = 0, 1

# slacks lead and the SoE trails so every constraint row spans at most one block
TL, TH, LO, HI, SELL, BUY, CH, DIS, TSB, TCD, TW, E = range(12)
NV = 12
NR = 7
# fixed-battery layout per hour
FB_CH, FB_DIS, FB_T, FB_E = range(4)
FB_NV = 4


@njit(cache=True)
def _fixed_grid_evaluate(x, data):
    w, m, s, cb, cs, dt, scale, e0, eta_ch, eta_dis, e_min, e_max = data
    K = cb.shape[0]
    X = x.reshape(K, NV)
    vals, d = fixed_grid_terms(X[:, LO].copy(), X[:, HI].copy(), X[:, SELL].copy(), X[:, BUY].copy(), w, m, s)
    c = scale * dt
    up = 1.0 / (eta_ch * dt)
    down = eta_dis / dt
    f = 0.0
    df = np.zeros(NV * K)
    h = np.empty(NR * K)
    Jc = np.zeros((NR * K, 6), dtype=np.int64)
    Jv = np.zeros((NR * K, 6))
    for k in range(K):
        o = NV * k
        r = NR * k
        f += cb[k] * vals[2, k] + cs[k] * vals[1, k]
        for v in range(4):
            df[o + LO + v] = c * (cb[k] * d[2, v, k] + cs[k] * d[1, v, k])
        prev = e0 if k == 0 else X[k - 1, E]
        # expected battery power equals its sign split
        h[r] = X[k, CH] + X[k, DIS] - vals[0, k]
        for v in range(4):
            Jc[r, v] = o + LO + v
            Jv[r, v] = -d[0, v, k]
        Jc[r, 4], Jv[r, 4] = o + CH, 1.0
        Jc[r, 5], Jv[r, 5] = o + DIS, 1.0
        # expected SoE
        h[r + 1] = X[k, E] - prev + dt * (eta_ch * X[k, CH] + X[k, DIS] / eta_dis)
        Jc[r + 1, 0], Jv[r + 1, 0] = o + E, 1.0
        Jc[r + 1, 1], Jv[r + 1, 1] = o + CH, dt * eta_ch
        Jc[r + 1, 2], Jv[r + 1, 2] = o + DIS, dt / eta_dis
        if k > 0:
            Jc[r + 1, 3], Jv[r + 1, 3] = o - 1, -1.0
        # relaxed complementarity of both splits
        h[r + 2] = -X[k, SELL] * X[k, BUY] - COMPLEMENTARITY_EPS + X[k, TSB]
        Jc[r + 2, 0], Jv[r + 2, 0] = o + SELL, -X[k, BUY]
        Jc[r + 2, 1], Jv[r + 2, 1] = o + BUY, -X[k, SELL]
        Jc[r + 2, 2], Jv[r + 2, 2] = o + TSB, 1.0
        h[r + 3] = -X[k, CH] * X[k, DIS] - COMPLEMENTARITY_EPS + X[k, TCD]
        Jc[r + 3, 0], Jv[r + 3, 0] = o + CH, -X[k, DIS]
        Jc[r + 3, 1], Jv[r + 3, 1] = o + DIS, -X[k, CH]
        Jc[r + 3, 2], Jv[r + 3, 2] = o + TCD, 1.0
        # ordered interval
        h[r + 4] = X[k, LO] - X[k, HI] + X[k, TW]
        Jc[r + 4, 0], Jv[r + 4, 0] = o + LO, 1.0
        Jc[r + 4, 1], Jv[r + 4, 1] = o + HI, -1.0
        Jc[r + 4, 2], Jv[r + 4, 2] = o + TW, 1.0
        # interval reachable from the previous expected SoE; hour 0 uses bounds
        Jc[r + 5, 0], Jv[r + 5, 0] = o + TL, 1.0
        Jc[r + 6, 0], Jv[r + 6, 0] = o + TH, 1.0
        if k == 0:
            h[r + 5] = X[k, TL]
            h[r + 6] = X[k, TH]
        else:
            h[r + 5] = (prev - e_max) * up - X[k, LO] + X[k, TL]
            Jc[r + 5, 1], Jv[r + 5, 1] = o - 1, up
            Jc[r + 5, 2], Jv[r + 5, 2] = o + LO, -1.0
            h[r + 6] = X[k, HI] - (prev - e_min) * down + X[k, TH]
            Jc[r + 6, 1], Jv[r + 6, 1] = o - 1, -down
            Jc[r + 6, 2], Jv[r + 6, 2] = o + HI, 1.0
    return c * f, df, h, Jc, Jv


@njit(cache=True)
def _fixed_grid_hessian(x, data, y):
    """Band Hessian of ``f + y.h``; nonzero only inside each hour's policy block."""
    w, m, s, cb, cs, dt, scale, e0, eta_ch, eta_dis, e_min, e_max = data
    K = cb.shape[0]
    X = x.reshape(K, NV)
    B = np.zeros((NV * K, NV + 1))
    c = scale * dt
    H = np.empty((3, 4, 4))
    for k in range(K):
        fixed_grid_hour_hessian(X[k, LO], X[k, HI], X[k, SELL], X[k, BUY], w, m, s, k, H)
        o = NV * k
        r = NR * k
        for v in range(4):
            for u in range(v + 1):
                B[o + LO + v, v - u] = c * (cb[k] * H[2, u, v] + cs[k] * H[1, u, v]) - y[r] * H[0, u, v]
        B[o + BUY, BUY - SELL] -= y[r + 2]
        B[o + DIS, DIS - CH] -= y[r + 3]
    return B


@njit(cache=True)
def _fixed_battery_evaluate(x, data):
    w, m, s, cb, cs, dt, scale, e0, eta_ch, eta_dis, e_min, e_max = data
    K = cb.shape[0]
    X = x.reshape(K, FB_NV)
    vals, d = fixed_battery_terms(X[:, FB_CH] + X[:, FB_DIS], w, m, s)
    c = scale * dt
    f = 0.0
    df = np.zeros(FB_NV * K)
    h = np.empty(2 * K)
    Jc = np.zeros((2 * K, 4), dtype=np.int64)
    Jv = np.zeros((2 * K, 4))
    for k in range(K):
        o = FB_NV * k
        r = 2 * k
        f += cb[k] * vals[1, k] + cs[k] * vals[0, k]
        dk = c * (cb[k] * d[1, k] + cs[k] * d[0, k])
        df[o + FB_CH] = dk
        df[o + FB_DIS] = dk
        prev = e0 if k == 0 else X[k - 1, FB_E]
        h[r] = X[k, FB_E] - prev + dt * (eta_ch * X[k, FB_CH] + X[k, FB_DIS] / eta_dis)
        Jc[r, 0], Jv[r, 0] = o + FB_E, 1.0
        Jc[r, 1], Jv[r, 1] = o + FB_CH, dt * eta_ch
        Jc[r, 2], Jv[r, 2] = o + FB_DIS, dt / eta_dis
        if k > 0:
            Jc[r, 3], Jv[r, 3] = o - 1, -1.0
        h[r + 1] = -X[k, FB_CH] * X[k, FB_DIS] - COMPLEMENTARITY_EPS + X[k, FB_T]
        Jc[r + 1, 0], Jv[r + 1, 0] = o + FB_CH, -X[k, FB_DIS]
        Jc[r + 1, 1], Jv[r + 1, 1] = o + FB_DIS, -X[k, FB_CH]
        Jc[r + 1, 2], Jv[r + 1, 2] = o + FB_T, 1.0
    return c * f, df, h, Jc, Jv


@njit(cache=True)
def _fixed_battery_hessian(x, data, y):
    w, m, s, cb, cs, dt, scale, e0, eta_ch, eta_dis, e_min, e_max = data
    K = cb.shape[0]
    X = x.reshape(K, FB_NV)
    B = np.zeros((FB_NV * K, FB_NV + 1))
    for k in range(K):
        o = FB_NV * k
        _, dens, _ = mix_fg(X[k, FB_CH] + X[k, FB_DIS], w, m, s, k)
        val = scale * dt * (cb[k] - cs[k]) * dens
        B[o + FB_CH, 0] += val
        B[o + FB_DIS, 0] += val
        B[o + FB_DIS, FB_DIS - FB_CH] += val - y[2 * k + 1]
    return B


@njit(cache=True)
def evaluate(kind, x, data):
    """``(f, df, h, Jc, Jv)``: objective, gradient and padded sparse constraint Jacobian."""
    if kind == FIXED_GRID:
        return _fixed_grid_evaluate(x, data)
    return _fixed_battery_evaluate(x, data)


@njit(cache=True)
def hessian(kind, x, data, y):
    """Band Hessian of ``f + y.h``."""
    if kind == FIXED_GRID:
        return _fixed_grid_hessian(x, data, y)
    return _fixed_battery_hessian(x, data, y)

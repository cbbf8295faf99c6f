"""Compiled closed-form terms shared by the schedulers.

Hourly forecasts are passed as ``(K, 2)`` arrays of weights, means and
standard deviations.  ``F``, ``f`` and ``G`` denote the mixture cdf, density
and first partial moment ``int_{-inf}^x u f(u) du``.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@njit(cache=True)
def norm_cdf(z):
    return 0.5 * math.erfc(-z * _INV_SQRT2)


@njit(cache=True)
def norm_pdf(z):
    if math.isinf(z):
        return 0.0
    return _INV_SQRT_2PI * math.exp(-0.5 * z * z)


@njit(cache=True)
def mix_fg(x, w, m, s, k):
    """Return ``(F, f, G)`` of hour ``k`` at point ``x``."""
    F = 0.0
    f = 0.0
    G = 0.0
    for i in range(2):
        z = (x - m[k, i]) / s[k, i]
        P = norm_cdf(z)
        p = norm_pdf(z)
        F += w[k, i] * P
        f += w[k, i] * p / s[k, i]
        G += w[k, i] * (m[k, i] * P - s[k, i] * p)
    return F, f, G


@njit(cache=True)
def fixed_grid_hour(lo, hi, sell, buy, w, m, s, mean_k, k, out, dout):
    """Expected battery power, export and import of one hour.

    ``out`` receives ``(E[P_B], exp_sell, exp_buy, P1, P2)``; ``dout`` is a
    ``(3, 4)`` block of partials w.r.t. ``(lo, hi, sell, buy)``.
    """
    pg = sell + buy
    F0, f0, G0 = mix_fg(lo + pg, w, m, s, k)
    F1, f1, G1 = mix_fg(hi + pg, w, m, s, k)
    F2, f2, G2 = mix_fg(lo + sell, w, m, s, k)
    F3, f3, G3 = mix_fg(lo + buy, w, m, s, k)
    F4, f4, G4 = mix_fg(lo, w, m, s, k)
    F5, f5, G5 = mix_fg(hi + sell, w, m, s, k)
    F6, f6, G6 = mix_fg(hi + buy, w, m, s, k)
    F7, f7, G7 = mix_fg(hi, w, m, s, k)
    p1 = F0
    p2 = 1.0 - F1
    interior = F1 - F0
    if lo == hi:
        epb = lo
    else:
        epb = p1 * lo + p2 * hi + (G1 - G0) - pg * interior
        # trims rounding; an optimizer probing lo > hi sees the smooth extension
        if lo < hi:
            epb = min(max(epb, lo), hi)
    exp_sell = (G2 - lo * F2) + interior * sell + (G7 - G5 - hi * (F7 - F5))
    exp_buy = (G3 - G4 - lo * (F3 - F4)) + interior * buy + (mean_k - G6 - hi * (1.0 - F6))
    out[0] = epb
    out[1] = exp_sell
    out[2] = exp_buy
    out[3] = p1
    out[4] = p2
    dm = f1 - f0
    dout[0, 0] = p1
    dout[0, 1] = p2
    dout[0, 2] = -interior
    dout[0, 3] = -interior
    dout[1, 0] = sell * f2 - F2 - sell * f0
    dout[1, 1] = -sell * f5 - (F7 - F5) + sell * f1
    dout[1, 2] = interior + sell * (f2 - f5) + sell * dm
    dout[1, 3] = sell * dm
    dout[2, 0] = buy * f3 - (F3 - F4) - buy * f0
    dout[2, 1] = -buy * f6 - (1.0 - F6) + buy * f1
    dout[2, 2] = buy * dm
    dout[2, 3] = interior + buy * (f3 - f6) + buy * dm


@njit(cache=True)
def fixed_grid_terms(lo, hi, sell, buy, w, m, s):
    """Vectorized ``fixed_grid_hour``: returns ``(vals (5, K), d (3, 4, K))``."""
    K = lo.shape[0]
    vals = np.empty((5, K))
    d = np.empty((3, 4, K))
    out = np.empty(5)
    dout = np.empty((3, 4))
    for k in range(K):
        mean_k = w[k, 0] * m[k, 0] + w[k, 1] * m[k, 1]
        fixed_grid_hour(lo[k], hi[k], sell[k], buy[k], w, m, s, mean_k, k, out, dout)
        vals[:, k] = out
        d[:, :, k] = dout
    return vals, d


@njit(cache=True)
def mix_fd(x, w, m, s, k):
    """Return the mixture density and its derivative of hour ``k`` at ``x``."""
    f = 0.0
    g = 0.0
    for i in range(2):
        z = (x - m[k, i]) / s[k, i]
        p = norm_pdf(z) / s[k, i]
        f += w[k, i] * p
        g -= w[k, i] * p * z / s[k, i]
    return f, g


@njit(cache=True)
def fixed_grid_hour_hessian(lo, hi, sell, buy, w, m, s, k, H):
    """Second partials of ``(E[P_B], exp_sell, exp_buy)``; ``H`` is ``(3, 4, 4)``."""
    pg = sell + buy
    f0, g0 = mix_fd(lo + pg, w, m, s, k)
    f1, g1 = mix_fd(hi + pg, w, m, s, k)
    f2, g2 = mix_fd(lo + sell, w, m, s, k)
    f3, g3 = mix_fd(lo + buy, w, m, s, k)
    f4, _ = mix_fd(lo, w, m, s, k)
    f5, g5 = mix_fd(hi + sell, w, m, s, k)
    f6, g6 = mix_fd(hi + buy, w, m, s, k)
    f7, _ = mix_fd(hi, w, m, s, k)
    dm = f1 - f0
    dg = g1 - g0
    p = sell
    q = buy
    # battery power
    H[0, 0, 0] = f0
    H[0, 0, 1] = 0.0
    H[0, 1, 1] = -f1
    H[0, 0, 2] = f0
    H[0, 0, 3] = f0
    H[0, 1, 2] = -f1
    H[0, 1, 3] = -f1
    H[0, 2, 2] = -dm
    H[0, 2, 3] = -dm
    H[0, 3, 3] = -dm
    # export
    H[1, 0, 0] = p * (g2 - g0) - f2
    H[1, 0, 1] = 0.0
    H[1, 1, 1] = p * (g1 - g5) - f7 + f5
    H[1, 0, 2] = p * (g2 - g0) - f0
    H[1, 0, 3] = -p * g0
    H[1, 1, 2] = p * (g1 - g5) + f1
    H[1, 1, 3] = p * g1
    H[1, 2, 2] = 2.0 * dm + (f2 - f5) + p * (g2 - g5) + p * dg
    H[1, 2, 3] = dm + p * dg
    H[1, 3, 3] = p * dg
    # import
    H[2, 0, 0] = q * (g3 - g0) - f3 + f4
    H[2, 0, 1] = 0.0
    H[2, 1, 1] = q * (g1 - g6) + f6
    H[2, 0, 2] = -q * g0
    H[2, 0, 3] = q * (g3 - g0) - f0
    H[2, 1, 2] = q * g1
    H[2, 1, 3] = q * (g1 - g6) + f1
    H[2, 2, 2] = q * dg
    H[2, 2, 3] = dm + q * dg
    H[2, 3, 3] = 2.0 * dm + (f3 - f6) + q * (g3 - g6) + q * dg
    for j in range(3):
        for u in range(4):
            for v in range(u):
                H[j, u, v] = H[j, v, u]


@njit(cache=True)
def fixed_battery_terms(pb, w, m, s):
    """Expected export/import with the battery fixed at ``pb``; partials in ``d``."""
    K = pb.shape[0]
    vals = np.empty((2, K))
    d = np.empty((2, K))
    for k in range(K):
        mean_k = w[k, 0] * m[k, 0] + w[k, 1] * m[k, 1]
        F, f, G = mix_fg(pb[k], w, m, s, k)
        vals[0, k] = G - pb[k] * F
        vals[1, k] = mean_k - G - pb[k] * (1.0 - F)
        d[0, k] = -F
        d[1, k] = -(1.0 - F)
    return vals, d

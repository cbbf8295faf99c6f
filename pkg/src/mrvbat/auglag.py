"""Bound-constrained augmented Lagrangian for small banded NLPs.

Solves::

    min f(x)  s.t.  h(x) = 0,  lb <= x <= ub

Inequalities are expected to arrive as equalities on bounded slack
variables, which keeps the merit function twice differentiable.  Bounds are
kept by projection inside a projected Newton inner loop.

The problem is selected by an integer ``kind`` understood by the callbacks
in ``_nlp``::

    evaluate(kind, x, data) -> (f, df, h, Jc, Jv)
    hessian(kind, x, data, y) -> B          # Hessian of f + y.h, band storage

Jacobian rows are padded sparse: row ``r`` has entries ``Jv[r, q]`` in columns
``Jc[r, q]``; padding uses a zero value.  Band storage keeps the lower
triangle of a symmetric matrix with half bandwidth ``bw`` as
``B[i, k] = H[i, i - k]`` for ``0 <= k <= bw``; the ``J^T J`` penalty term
must fit in that band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._nlp import evaluate, hessian

CONVERGED, MAX_ITERATIONS = 0, 1
STATUS_NAMES = {CONVERGED: "converged", MAX_ITERATIONS: "max_iterations"}
INNER_CONVERGED, INNER_MAXITER, INNER_NO_DESCENT, INNER_STALLED = range(4)


@dataclass
class AugLagOptions:
    max_outer: int = 200
    max_inner: int = 60
    feas_tol: float = 1e-6
    stat_tol: float = 1e-5
    rho0: float = 10.0
    rho_max: float = 1e9


@dataclass
class AugLagResult:
    x: np.ndarray
    fun: float
    max_violation: float
    stationarity: float
    status: str
    outer_iterations: int
    evaluations: int
    merit_trace: list[np.ndarray]


@njit(cache=True)
def band_matvec(B, x):
    n, w = B.shape
    y = np.zeros(n)
    for i in range(n):
        y[i] += B[i, 0] * x[i]
        for k in range(1, min(w, i + 1)):
            j = i - k
            y[i] += B[i, k] * x[j]
            y[j] += B[i, k] * x[i]
    return y


@njit(cache=True)
def band_to_dense(B):
    n, w = B.shape
    H = np.zeros((n, n))
    for i in range(n):
        for k in range(min(w, i + 1)):
            H[i, i - k] = B[i, k]
            H[i - k, i] = B[i, k]
    return H


@njit(cache=True)
def band_ldl(M):
    """In-place LDL^T of a band matrix: ``M`` receives the unit-lower factor.

    Returns ``(D, ok)``; ``ok`` is False when a pivot is not positive.
    """
    n, w = M.shape
    D = np.empty(n)
    col = np.empty(w)
    for j in range(n):
        d = M[j, 0]
        if not d > 0.0:
            return D, False
        D[j] = d
        top = min(n, j + w)
        for i in range(j + 1, top):
            col[i - j] = M[i, i - j]
        for i in range(j + 1, top):
            ci = col[i - j]
            if ci == 0.0:
                continue
            s = ci / d
            for k in range(j + 1, i + 1):
                M[i, i - k] -= s * col[k - j]
            M[i, i - j] = s
    return D, True


@njit(cache=True)
def band_ldl_solve(L, D, b):
    n, w = L.shape
    y = b.copy()
    for i in range(n):
        for k in range(1, min(w, i + 1)):
            y[i] -= L[i, k] * y[i - k]
    for i in range(n):
        y[i] /= D[i]
    for i in range(n - 1, -1, -1):
        for k in range(1, min(w, n - i)):
            y[i] -= L[i + k, k] * y[i + k]
    return y


@njit(cache=True)
def _gram_add(Jc, Jv, rho, B):
    """``B += rho J^T J``."""
    bw = B.shape[1] - 1
    for r in range(Jc.shape[0]):
        for a in range(Jc.shape[1]):
            ia = Jc[r, a]
            va = rho * Jv[r, a]
            if va == 0.0:
                continue
            for b in range(Jc.shape[1]):
                ib = Jc[r, b]
                if ib > ia or Jv[r, b] == 0.0:
                    continue
                if ia - ib > bw:
                    raise ValueError("constraint row exceeds the declared bandwidth")
                B[ia, ia - ib] += va * Jv[r, b]


@njit(cache=True)
def _max_abs(h):
    v = 0.0
    for i in range(h.size):
        v = max(v, abs(h[i]))
    return v


@njit(cache=True)
def _merit(kind, data, x, lam, rho):
    """Merit value and gradient, plus the constraint values and Jacobian."""
    f, df, h, Jc, Jv = evaluate(kind, x, data)
    grad = df
    y = lam + rho * h
    for r in range(Jc.shape[0]):
        for q in range(Jc.shape[1]):
            grad[Jc[r, q]] += Jv[r, q] * y[r]
    return f + lam @ h + 0.5 * rho * (h @ h), grad, h, Jc, Jv


@njit(cache=True)
def _merit_hessian(kind, data, x, lam, rho, h, Jc, Jv):
    B = hessian(kind, x, data, lam + rho * h)
    _gram_add(Jc, Jv, rho, B)
    return B


@njit(cache=True)
def _freeze(B, i):
    """Decouple row and column ``i`` of a band matrix, leaving a unit diagonal."""
    n, w = B.shape
    for k in range(w):
        B[i, k] = 0.0
        if i + k < n:
            B[i + k, k] = 0.0
    B[i, 0] = 1.0


@njit(cache=True)
def _proj_grad_norm(x, g, lb, ub):
    r = 0.0
    for i in range(x.size):
        v = min(max(x[i] - g[i], lb[i]), ub[i]) - x[i]
        r = max(r, abs(v))
    return r


@njit(cache=True)
def _newton_inner(kind, data, x, lb, ub, lam, rho, maxiter, gtol, trace):
    """Projected Newton on the augmented Lagrangian.

    Variables within ``eps`` of a bound whose diagonal Newton step crosses
    it are moved onto the bound, or by a damped diagonal step toward it when
    that is rejected; the rest take a damped Newton step.  Levenberg-Marquardt damping controls the step: the projected trial
    point is accepted when the merit decrease is a fair fraction of the
    quadratic model's prediction.  Returns ``(x, projected-gradient norm,
    evaluations, trace length, reason)``; ``trace`` receives the merit value
    after every accepted step.
    """
    n = x.size
    f, g, h, Jc, Jv = _merit(kind, data, x, lam, rho)
    nev = 1
    nt = 0
    if trace.size > 0:
        trace[0] = f
        nt = 1
    active = np.zeros(n, dtype=np.bool_)
    xn = np.empty(n)
    diag = np.empty(n)
    snap = np.zeros(n)
    pgn = _proj_grad_norm(x, g, lb, ub)
    damping = -1.0
    reason = INNER_MAXITER
    for it in range(maxiter):
        if pgn <= gtol:
            break
        eps = min(1e-3, pgn)
        H = _merit_hessian(kind, data, x, lam, rho, h, Jc, Jv)
        diag_max = 0.0
        for i in range(n):
            diag[i] = max(H[i, 0], 0.0)
            # near a bound, pushed outward, and the diagonal step reaches it
            if x[i] <= lb[i] + eps and g[i] > 0.0:
                active[i] = (x[i] - lb[i]) * diag[i] <= g[i]
            elif x[i] >= ub[i] - eps and g[i] < 0.0:
                active[i] = (ub[i] - x[i]) * diag[i] <= -g[i]
            else:
                active[i] = False
            if not active[i]:
                diag_max = max(diag_max, diag[i])
        floor = 1e-12 * max(diag_max, 1.0)
        if damping < 0.0:
            damping = floor
        # first try moving active variables exactly onto their bounds; once
        # that is rejected fall back to short diagonal steps toward them
        snapping = True
        accepted = False
        fn = f
        gn = g
        hn, Jcn, Jvn = h, Jc, Jv
        for attempt in range(60 + n):
            B = H.copy()
            for i in range(n):
                snap[i] = 0.0
                if active[i]:
                    _freeze(B, i)
                    if snapping:
                        snap[i] = (lb[i] if x[i] <= lb[i] + eps else ub[i]) - x[i]
            rhs = -g - band_matvec(H, snap)
            M = B.copy()
            for i in range(n):
                if active[i]:
                    rhs[i] = 0.0
                else:
                    M[i, 0] += damping
            D, ok = band_ldl(M)
            if not ok:
                damping = max(4.0 * damping, 1e-8 * max(diag_max, 1.0))
                continue
            d = band_ldl_solve(M, D, rhs)
            # a free variable near a bound whose step crosses it joins the
            # active set; clipping it would spoil the Newton step
            grown = False
            for i in range(n):
                if not active[i] and ((x[i] <= lb[i] + eps and x[i] + d[i] < lb[i])
                                      or (x[i] >= ub[i] - eps and x[i] + d[i] > ub[i])):
                    active[i] = True
                    grown = True
            if grown:
                continue
            for i in range(n):
                if not active[i]:
                    xn[i] = min(max(x[i] + d[i], lb[i]), ub[i])
                elif snapping:
                    xn[i] = x[i] + snap[i]
                else:
                    xn[i] = min(max(x[i] - g[i] / (diag[i] + damping), lb[i]), ub[i])
            step = xn - x
            pred = -(g @ step + 0.5 * (step @ band_matvec(H, step)))
            if not pred > 0.0:
                if snapping:
                    snapping = False
                    continue
                damping = max(4.0 * damping, floor)
                continue
            fn, gn, hn, Jcn, Jvn = _merit(kind, data, xn, lam, rho)
            nev += 1
            ratio = (f - fn) / pred
            if math.isfinite(fn) and fn < f and ratio > 1e-4:
                accepted = True
                if ratio > 0.75:
                    damping = max(damping / 3.0, floor)
                elif ratio < 0.25:
                    damping *= 2.0
                break
            if snapping:
                snapping = False
                continue
            damping = max(4.0 * damping, floor)
        if not accepted:
            reason = INNER_NO_DESCENT
            break
        decrease = f - fn
        x = xn.copy()
        f = fn
        g = gn
        h, Jc, Jv = hn, Jcn, Jvn
        if nt < trace.size:
            trace[nt] = f
            nt += 1
        pgn = _proj_grad_norm(x, g, lb, ub)
        if decrease <= 1e-15 * max(1.0, abs(f)):
            reason = INNER_STALLED
            break
    if pgn <= gtol:
        reason = INNER_CONVERGED
    return x, pgn, nev, nt, reason


@njit(cache=True)
def _auglag(kind, data, x0, lb, ub, max_outer, max_inner, feas_tol, stat_tol, rho0, rho_max, record):
    x = np.minimum(np.maximum(x0.copy(), lb), ub)
    f, df, h, Jc, Jv = evaluate(kind, x, data)
    lam = np.zeros(h.size)
    rho = rho0
    omega = 1e-2
    prev_viol = np.inf
    status = MAX_ITERATIONS
    evals = 0
    pgn = np.inf
    tsize = max_inner + 1 if record else 0
    traces = np.full((max_outer if record else 0, tsize), np.nan)
    outer = 0
    for outer in range(1, max_outer + 1):
        trace = traces[outer - 1] if record else np.empty(0)
        x, pgn, nev, nt, reason = _newton_inner(kind, data, x, lb, ub, lam, rho, max_inner, omega, trace)
        evals += nev
        f, df, h, Jc, Jv = evaluate(kind, x, data)
        viol = _max_abs(h)
        if viol <= feas_tol and pgn <= stat_tol:
            status = CONVERGED
            break
        lam = lam + rho * h
        if viol > feas_tol and viol > 0.25 * prev_viol:
            rho = min(rho * 10.0, rho_max)
        prev_viol = viol
        omega = max(stat_tol, 0.1 * omega)
    f, df, h, Jc, Jv = evaluate(kind, x, data)
    return x, f, _max_abs(h), pgn, status, outer, evals, traces[:outer]


def minimize_auglag(kind, data, x0, lb, ub,
                    opts: AugLagOptions | None = None, record_merit: bool = False) -> AugLagResult:
    """Local solution from ``x0``; ``record_merit`` keeps per-outer merit traces."""
    opts = opts or AugLagOptions()
    x, f, viol, stat, status, outer, evals, traces = _auglag(
        kind, data, np.ascontiguousarray(x0, dtype=float),
        np.asarray(lb, float), np.asarray(ub, float),
        opts.max_outer, opts.max_inner, opts.feas_tol, opts.stat_tol, opts.rho0, opts.rho_max, record_merit,
    )
    trace = [row[~np.isnan(row)] for row in traces]
    return AugLagResult(x, float(f), float(viol), float(stat), STATUS_NAMES[status], int(outer), int(evals), trace)

"""Probabilistic net-load forecasts: 99-quantile sets and their mixture fits."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares
from scipy.special import ndtr

from . import gmix
from .gmix import GaussianMixture2

log = logging.getLogger(__name__)

PROBS = np.arange(1, 100) / 100.0
SIGMA_FLOOR = 1e-4
ORDER_TOL = 1e-9
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class QuantileForecast:
    """Net-load quantiles for probabilities 0.01..0.99 at one hour."""

    timestamp: int
    quantiles: np.ndarray
    repaired: bool = False

    def __post_init__(self) -> None:
        q = np.array(self.quantiles, dtype=float)
        if q.shape != (PROBS.size,):
            raise ValueError(f"expected {PROBS.size} quantiles, got shape {q.shape}")
        if not np.all(np.isfinite(q)):
            raise ValueError(f"non-finite quantile at hour {self.timestamp}")
        if np.any(np.diff(q) < -ORDER_TOL):
            log.warning("hour %s: quantiles not monotone, repaired by sorting", self.timestamp)
            object.__setattr__(self, "repaired", True)
        q = np.sort(q)
        q.setflags(write=False)
        object.__setattr__(self, "quantiles", q)


@dataclass(frozen=True)
class SyntheticForecastModel:
    """Calibrated synthetic forecast: a lead-dependent spread around the truth.

    Lead hour ``h`` uses component spread ``sigma_base + h * sigma_growth``;
    a second component of weight ``skew_weight`` sits ``skew_offset`` kW from
    the first, and the pair is centred so that the mixture mean is the
    forecast location.
    """

    bias: float = 0.0
    sigma_base: float = 0.3
    sigma_growth: float = 0.02
    skew_weight: float = 0.0
    skew_offset: float = 0.0

    def __post_init__(self) -> None:
        if not self.sigma_base > 0.0:
            raise ValueError("sigma_base must be positive")
        if not self.sigma_growth >= 0.0:
            raise ValueError("sigma_growth must be nonnegative")
        if not 0.0 <= self.skew_weight <= 1.0:
            raise ValueError("skew_weight must lie in [0, 1]")

    def shape(self, lead: int) -> GaussianMixture2:
        """Zero-mean error distribution at lead hour ``lead``."""
        sig = self.sigma_base + lead * self.sigma_growth
        a = self.skew_weight
        return GaussianMixture2.from_params(1.0 - a, -a * self.skew_offset, sig, (1.0 - a) * self.skew_offset, sig)


@dataclass(frozen=True)
class MixtureFit:
    mixture: GaussianMixture2
    rms: float
    degenerate: bool = False


def point_forecast(m: GaussianMixture2) -> float:
    return gmix.mean(m)


@lru_cache(maxsize=4096)
def _shape_quantiles(model: SyntheticForecastModel, lead: int) -> np.ndarray:
    m = model.shape(lead)
    return np.array([gmix.quantile(m, p) for p in PROBS])


def synthesize_quantiles(truth: Sequence[float], model: SyntheticForecastModel, seed) -> list[QuantileForecast]:
    """Quantile forecasts for ``truth[h]`` at lead hours ``h = 0, 1, ...``.

    The forecast location is ``truth + bias - u`` with ``u`` drawn from the
    lead's error distribution, so the truth is a draw from the forecast when
    ``bias = 0``.  ``seed`` is anything ``numpy.random.default_rng`` accepts.
    """
    truth = np.asarray(truth, dtype=float)
    if truth.size == 0:
        raise ValueError("truth must be nonempty")
    rng = np.random.default_rng(seed)
    out = []
    for h, y in enumerate(truth):
        u = float(model.shape(h).sample(rng, 1)[0])
        out.append(QuantileForecast(h, float(y) + model.bias - u + _shape_quantiles(model, h)))
    return out


def _unpack(theta):
    w1, m1, s1, m2, s2 = theta
    return np.array([w1, 1.0 - w1]), np.array([m1, m2]), np.array([s1, s2])


def mixture_quantiles(theta, p: np.ndarray, x0: np.ndarray | None = None) -> np.ndarray:
    """Quantiles of ``(w1, mu1, sigma1, mu2, sigma2)`` at levels ``p`` by safeguarded Newton."""
    w, m, s = _unpack(theta)
    lo = np.full(p.shape, float(np.min(m - 40.0 * s)))
    hi = np.full(p.shape, float(np.max(m + 40.0 * s)))
    x = np.clip(x0 if x0 is not None else np.full(p.shape, float(w @ m)), lo, hi)
    for _ in range(200):
        z = (x[:, None] - m) / s
        F = ndtr(z) @ w - p
        f = (np.exp(-0.5 * z * z) * _INV_SQRT_2PI / s) @ w
        hi = np.where(F > 0.0, x, hi)
        lo = np.where(F > 0.0, lo, x)
        if np.max(np.abs(F)) <= 1e-14 or np.max(hi - lo) <= 1e-13:
            break
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            xn = x - F / f
        bad = ~((xn > lo) & (xn < hi))
        x = np.where(bad, 0.5 * (lo + hi), xn)
    return x


def _quantile_jacobian(theta, x):
    """``dQ/dtheta`` from the implicit function theorem on ``F(Q) = p``."""
    w, m, s = _unpack(theta)
    z = (x[:, None] - m) / s
    phi = np.exp(-0.5 * z * z) * _INV_SQRT_2PI
    dens = np.maximum((phi / s) @ w, 1e-300)
    dF = np.column_stack(
        [
            ndtr(z[:, 0]) - ndtr(z[:, 1]),
            -w[0] * phi[:, 0] / s[0],
            -w[0] * phi[:, 0] * z[:, 0] / s[0],
            -w[1] * phi[:, 1] / s[1],
            -w[1] * phi[:, 1] * z[:, 1] / s[1],
        ]
    )
    return -dF / dens[:, None]


def _starts(q: np.ndarray) -> list[np.ndarray]:
    med = q[49]
    sig = max(0.5 * (q[83] - q[15]), SIGMA_FLOOR)
    return [
        np.array([0.5, med, sig, med, sig]),
        np.array([0.7, med + 0.3 * sig, 0.7 * sig, med - 0.7 * sig, 1.2 * sig]),
        np.array([0.7, med - 0.3 * sig, 0.7 * sig, med + 0.7 * sig, 1.2 * sig]),
        np.array([0.5, q[24], 0.5 * sig, q[74], 0.5 * sig]),
    ]


def fit_mixture(qf: QuantileForecast) -> MixtureFit:
    """Two-component mixture whose quantile function best matches ``qf`` in RMS.

    Bounded nonlinear least squares over ``(w1, mu1, sigma1, mu2, sigma2)``
    from four heuristic starts; the smallest RMS wins, earlier starts on ties.
    """
    q = np.asarray(qf.quantiles, dtype=float)
    span = float(q[-1] - q[0])
    if span <= ORDER_TOL * max(1.0, abs(float(q[49]))):
        med = float(q[49])
        log.warning("hour %s: degenerate quantiles, using a near-delta at %.6g", qf.timestamp, med)
        return MixtureFit(GaussianMixture2.from_params(0.5, med, SIGMA_FLOOR, med, SIGMA_FLOOR), 0.0, True)
    lb = np.array([0.0, q[0] - 2.0 * span, SIGMA_FLOOR, q[0] - 2.0 * span, SIGMA_FLOOR])
    s_max = max(4.0 * span, 2.0 * SIGMA_FLOOR)
    ub = np.array([1.0, q[-1] + 2.0 * span, s_max, q[-1] + 2.0 * span, s_max])

    cache = {"x": q.copy()}

    def resid(theta):
        x = mixture_quantiles(theta, PROBS, cache["x"])
        cache["x"] = x
        return x - q

    def jac(theta):
        return _quantile_jacobian(theta, mixture_quantiles(theta, PROBS, cache["x"]))

    best = None
    for th0 in _starts(q):
        th0 = np.clip(th0, lb, ub)
        cache["x"] = q.copy()
        res = least_squares(resid, th0, jac=jac, bounds=(lb, ub), method="trf", x_scale="jac",
                            xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=200)
        rms = float(np.sqrt(np.mean(resid(res.x) ** 2)))
        if best is None or rms < best[0] - 1e-15:
            best = (rms, res.x)
    rms, th = best
    w1, m1, s1, m2, s2 = (float(v) for v in th)
    return MixtureFit(GaussianMixture2.from_params(w1, m1, s1, m2, s2), rms)


class FitCache:
    """Memoizes fits of quantile sets that differ only by a translation.

    Quantile RMS is translation invariant and the starts are translation
    equivariant, so a fit of the median-centred set shifted back is the fit of
    the original set.
    """

    def __init__(self, maxsize: int = 8192):
        self._fits: dict[bytes, MixtureFit] = {}
        self.maxsize = maxsize
        self.hits = 0

    def fit(self, qf: QuantileForecast) -> MixtureFit:
        q = np.asarray(qf.quantiles)
        loc = float(q[49])
        key = np.round(q - loc, 9).tobytes()
        base = self._fits.get(key)
        if base is None:
            base = fit_mixture(QuantileForecast(qf.timestamp, q - loc))
            if len(self._fits) < self.maxsize:
                self._fits[key] = base
        else:
            self.hits += 1
        c0, c1 = base.mixture.components
        m = GaussianMixture2.from_params(c0.weight, c0.mean + loc, c0.stdev, c1.mean + loc, c1.stdev)
        return MixtureFit(m, base.rms, base.degenerate)

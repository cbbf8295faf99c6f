"""Two-component Gaussian mixtures used as the hourly net-load model.

All interval operations accept ``-inf``/``+inf`` endpoints and evaluate them
exactly through ``Phi(-inf) = 0`` and ``Phi(+inf) = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianComponent:
    weight: float
    mean: float
    stdev: float

    def __post_init__(self) -> None:
        if not (self.stdev > 0.0 and math.isfinite(self.stdev)):
            raise ValueError(f"stdev must be positive and finite, got {self.stdev}")
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"weight must lie in [0, 1], got {self.weight}")
        if not math.isfinite(self.mean):
            raise ValueError(f"mean must be finite, got {self.mean}")


@dataclass(frozen=True)
class GaussianMixture2:
    """Weighted sum of exactly two normal densities."""

    components: tuple[GaussianComponent, GaussianComponent]

    def __post_init__(self) -> None:
        if len(self.components) != 2:
            raise ValueError("a GaussianMixture2 needs exactly two components")
        total = self.components[0].weight + self.components[1].weight
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"component weights must sum to 1, got {total!r}")

    @classmethod
    def from_params(cls, w1: float, m1: float, s1: float, m2: float, s2: float) -> GaussianMixture2:
        """Build from ``(w1, mu1, sigma1, mu2, sigma2)`` with ``w2 = 1 - w1``."""
        return cls((GaussianComponent(w1, m1, s1), GaussianComponent(1.0 - w1, m2, s2)))

    @classmethod
    def normal(cls, mean: float, stdev: float) -> GaussianMixture2:
        """A single normal written as a two-component mixture."""
        return cls((GaussianComponent(1.0, mean, stdev), GaussianComponent(0.0, mean, stdev)))

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    @property
    def means(self) -> np.ndarray:
        return np.array([c.mean for c in self.components])

    @property
    def stdevs(self) -> np.ndarray:
        return np.array([c.stdev for c in self.components])

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        pick = rng.random(size) < self.components[0].weight
        z = rng.standard_normal(size)
        c0, c1 = self.components
        return np.where(pick, c0.mean + c0.stdev * z, c1.mean + c1.stdev * z)


def normal_pdf(z):
    """Standard normal density; zero at infinite arguments."""
    z = np.asarray(z, dtype=float)
    with np.errstate(over="ignore"):
        out = _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    return np.where(np.isinf(z), 0.0, out)


def normal_cdf(z):
    return ndtr(z)


def _standardize(m: GaussianMixture2, x):
    x = np.asarray(x, dtype=float)[..., None]
    return (x - m.means) / m.stdevs


def pdf(m: GaussianMixture2, z):
    """Mixture density at ``z`` (scalar or array)."""
    u = _standardize(m, z)
    out = np.sum(m.weights / m.stdevs * normal_pdf(u), axis=-1)
    return float(out) if out.ndim == 0 else out


def cdf(m: GaussianMixture2, z):
    """Mixture cumulative distribution at ``z``."""
    out = np.sum(m.weights * ndtr(_standardize(m, z)), axis=-1)
    return float(out) if out.ndim == 0 else out


def quantile(m: GaussianMixture2, p: float, tol: float = 1e-13) -> float:
    """Inverse cdf by a bracketed Newton iteration with bisection fallback."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {p}")
    lo = float(np.min(m.means - 40.0 * m.stdevs))
    hi = float(np.max(m.means + 40.0 * m.stdevs))
    x = mean(m)
    for _ in range(200):
        fx = cdf(m, x) - p
        if fx > 0.0:
            hi = x
        else:
            lo = x
        if abs(fx) <= tol or hi - lo <= 1e-15 * max(1.0, abs(x)):
            break
        d = pdf(m, x)
        step_ok = False
        if d > 0.0:
            xn = x - fx / d
            step_ok = lo < xn < hi
        x = xn if step_ok else 0.5 * (lo + hi)
    return float(x)


def mean(m: GaussianMixture2) -> float:
    return float(np.dot(m.weights, m.means))


def _check_interval(a: float, b: float) -> None:
    if a > b:
        raise ValueError(f"interval lower end {a} exceeds upper end {b}")


def mass(m: GaussianMixture2, a: float, b: float, shift: float = 0.0) -> float:
    """Probability mass of ``f(z + shift)`` on ``[a, b]``."""
    _check_interval(a, b)
    if a == b:
        return 0.0
    return float(cdf(m, b + shift) - cdf(m, a + shift))


def partial_expectation(m: GaussianMixture2, a: float, b: float, shift: float = 0.0) -> float:
    """Closed-form ``integral_a^b z * f(z + shift) dz``.

    Per component this is ``(mu - shift) * dPhi - sigma * dphi`` evaluated
    between the standardized endpoints.
    """
    _check_interval(a, b)
    if a == b:
        return 0.0
    w, mu, sd = m.weights, m.means, m.stdevs
    alpha = (a + shift - mu) / sd
    beta = (b + shift - mu) / sd
    d_cdf = ndtr(beta) - ndtr(alpha)
    d_pdf = normal_pdf(beta) - normal_pdf(alpha)
    return float(np.sum(w * ((mu - shift) * d_cdf - sd * d_pdf)))

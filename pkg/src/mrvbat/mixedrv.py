"""Battery and grid power as clipped (mixed) random variables.

Under a Fixed-Grid dispatch policy the battery tracks ``p_l - pg_des`` inside
``[pb_lo, pb_hi]`` and sticks to the nearer bound otherwise.  Battery power
then carries point masses at both bounds, and grid power carries a point mass
at ``pg_des`` plus the two shifted net-load tails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import gmix
from .gmix import GaussianMixture2

COMPLEMENTARITY_EPS = 1e-8


@dataclass(frozen=True)
class DispatchPolicy:
    pb_lo: float
    pb_hi: float
    pg_des: float
    pg_des_sell: float
    pg_des_buy: float

    def __post_init__(self) -> None:
        if self.pb_lo > self.pb_hi:
            raise ValueError(f"pb_lo={self.pb_lo} exceeds pb_hi={self.pb_hi}")
        if abs(self.pg_des - (self.pg_des_sell + self.pg_des_buy)) > 1e-9:
            raise ValueError("pg_des must equal pg_des_sell + pg_des_buy")
        if self.pg_des_sell > 0.0 or self.pg_des_buy < 0.0:
            raise ValueError("pg_des_sell must be <= 0 and pg_des_buy >= 0")
        if self.pg_des_sell * self.pg_des_buy < -COMPLEMENTARITY_EPS:
            raise ValueError("pg_des_sell and pg_des_buy violate complementarity")

    @classmethod
    def from_setpoint(cls, pb_lo: float, pb_hi: float, pg_des: float) -> DispatchPolicy:
        """Split ``pg_des`` by sign into its sell and buy parts."""
        return cls(pb_lo, pb_hi, pg_des, min(pg_des, 0.0), max(pg_des, 0.0))

    @classmethod
    def from_split(cls, pb_lo: float, pb_hi: float, sell: float, buy: float) -> DispatchPolicy:
        return cls(pb_lo, pb_hi, sell + buy, sell, buy)


@dataclass(frozen=True)
class BoundaryProbabilities:
    p1: float
    p2: float

    @property
    def interior(self) -> float:
        return 1.0 - self.p1 - self.p2


@dataclass(frozen=True)
class ExpectedGridSplit:
    exp_sell: float
    exp_buy: float

    @property
    def total(self) -> float:
        return self.exp_sell + self.exp_buy


def boundary_probabilities(f: GaussianMixture2, pol: DispatchPolicy) -> BoundaryProbabilities:
    """Probabilities that the battery sits at ``pb_lo`` and at ``pb_hi``."""
    p1 = gmix.cdf(f, pol.pb_lo + pol.pg_des)
    p2 = 1.0 - gmix.cdf(f, pol.pb_hi + pol.pg_des)
    return BoundaryProbabilities(p1, p2)


def expected_battery_power(f: GaussianMixture2, pol: DispatchPolicy) -> float:
    if pol.pb_lo == pol.pb_hi:
        return pol.pb_lo
    bp = boundary_probabilities(f, pol)
    inner = gmix.partial_expectation(f, pol.pb_lo, pol.pb_hi, pol.pg_des)
    value = bp.p1 * pol.pb_lo + inner + bp.p2 * pol.pb_hi
    # rounding can leave the result a few ulps outside the interval
    return min(max(value, pol.pb_lo), pol.pb_hi)


def expected_grid_split(f: GaussianMixture2, pol: DispatchPolicy) -> ExpectedGridSplit:
    """Expected negative (export) and positive (import) parts of grid power.

    Below ``pg_des`` grid power follows ``f(z + pb_lo)``, above it follows
    ``f(z + pb_hi)``, and ``pg_des`` itself carries the interior mass.  The
    split points are the sell and buy parts of ``pg_des``.
    """
    s, b = pol.pg_des_sell, pol.pg_des_buy
    lo, hi = pol.pb_lo, pol.pb_hi
    pe = gmix.partial_expectation
    interior = boundary_probabilities(f, pol).interior
    exp_sell = pe(f, -math.inf, s, lo) + interior * s + pe(f, s, 0.0, hi)
    exp_buy = pe(f, 0.0, b, lo) + interior * b + pe(f, b, math.inf, hi)
    return ExpectedGridSplit(exp_sell, exp_buy)


def expected_grid_power(f: GaussianMixture2, pol: DispatchPolicy) -> float:
    lo, hi, g = pol.pb_lo, pol.pb_hi, pol.pg_des
    interior = boundary_probabilities(f, pol).interior
    pe = gmix.partial_expectation
    return pe(f, -math.inf, g, lo) + interior * g + pe(f, g, math.inf, hi)


def realize(pol: DispatchPolicy, p_l: float) -> tuple[float, float]:
    """Battery and grid power for one realized net-load under Fixed-Grid rules."""
    p_b = min(max(p_l - pol.pg_des, pol.pb_lo), pol.pb_hi)
    return p_b, p_l - p_b

"""Import and export price series derived from wholesale day-ahead prices."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

SELL_TOL = 1e-9


class TariffError(ValueError):
    """Raised when a tariff target cannot be met."""


@dataclass(frozen=True)
class TariffSeries:
    timestamps: tuple
    c_buy: np.ndarray
    c_sell: np.ndarray

    def __post_init__(self) -> None:
        cb = np.array(self.c_buy, dtype=float)
        cs = np.array(self.c_sell, dtype=float)
        if not (len(self.timestamps) == cb.size == cs.size):
            raise ValueError("timestamps and price series differ in length")
        if np.any(cs < 0.0):
            raise ValueError("export prices must be nonnegative")
        for a in (cb, cs):
            a.setflags(write=False)
        object.__setattr__(self, "c_buy", cb)
        object.__setattr__(self, "c_sell", cs)


def build(
    wholesale: Sequence[float],
    target_buy_mean: float = 0.4,
    target_sell_mean: float = 0.08,
    timestamps: Sequence | None = None,
) -> TariffSeries:
    """Shift wholesale prices to the target means; export prices are clipped at zero.

    The import offset is exact.  The clipped export mean is continuous and
    nondecreasing in its offset, so the export offset is found by a bracketed
    root search.
    """
    p = np.asarray(wholesale, dtype=float)
    if p.size == 0 or not np.all(np.isfinite(p)):
        raise TariffError("wholesale prices must be nonempty and finite")
    if target_sell_mean <= 0.0:
        raise TariffError("target export mean must be positive")
    c_buy = p + (target_buy_mean - float(np.mean(p)))

    def excess(off: float) -> float:
        return float(np.mean(np.maximum(p + off, 0.0))) - target_sell_mean

    # at off_hi every hour is positive and the clipped mean is the plain mean
    off_hi = target_sell_mean - float(np.min(p)) + abs(target_sell_mean)
    off_lo = -float(np.max(p))
    if excess(off_hi) < 0.0 or excess(off_lo) > 0.0:
        raise TariffError(f"export mean {target_sell_mean} unreachable from these wholesale prices")
    off = brentq(excess, off_lo, off_hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    c_sell = np.maximum(p + off, 0.0)
    ts = tuple(timestamps) if timestamps is not None else tuple(range(p.size))
    return TariffSeries(ts, c_buy, c_sell)

"""Battery specification, state of energy and efficiency-aware dynamics.

Sign convention: negative power charges the battery, positive discharges it.
"""

from __future__ import annotations

from dataclasses import dataclass

SOE_SLACK = 1e-9


class ConstraintViolation(ValueError):
    """A battery power outside the SoE-feasible interval."""


@dataclass(frozen=True)
class BatterySpec:
    e_min: float = 0.0
    e_max: float = 7.68
    p_min: float = -5.12
    p_max: float = 5.12
    eta_ch: float = 0.98
    eta_dis: float = 0.98

    def __post_init__(self) -> None:
        if not self.e_min < self.e_max:
            raise ValueError(f"e_min={self.e_min} must be below e_max={self.e_max}")
        if not self.p_min < 0.0 < self.p_max:
            raise ValueError("power limits must satisfy p_min < 0 < p_max")
        for name in ("eta_ch", "eta_dis"):
            eta = getattr(self, name)
            if not 0.0 < eta <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {eta}")

    @property
    def capacity(self) -> float:
        return self.e_max - self.e_min

    @property
    def mid_soe(self) -> float:
        return 0.5 * (self.e_min + self.e_max)


@dataclass(frozen=True)
class BatteryState:
    soe: float


def soe_delta(spec: BatterySpec, p_b: float, dt: float) -> float:
    """Change in stored energy caused by battery power ``p_b`` over ``dt``."""
    p_ch = min(p_b, 0.0)
    p_dis = max(p_b, 0.0)
    return -p_ch * spec.eta_ch * dt - p_dis / spec.eta_dis * dt


def feasible_interval(spec: BatterySpec, state: BatteryState, dt: float) -> tuple[float, float]:
    """Battery power range that keeps the next SoE inside its limits."""
    e = min(max(state.soe, spec.e_min), spec.e_max)
    lo = max(spec.p_min, (e - spec.e_max) / (spec.eta_ch * dt))
    hi = min(spec.p_max, (e - spec.e_min) * spec.eta_dis / dt)
    return min(lo, 0.0), max(hi, 0.0)


def step(spec: BatterySpec, state: BatteryState, p_b: float, dt: float) -> BatteryState:
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    lo, hi = feasible_interval(spec, state, dt)
    if p_b < lo - SOE_SLACK:
        raise ConstraintViolation(f"p_b={p_b:.9g} kW below feasible lower bound {lo:.9g} kW")
    if p_b > hi + SOE_SLACK:
        raise ConstraintViolation(f"p_b={p_b:.9g} kW above feasible upper bound {hi:.9g} kW")
    soe = state.soe + soe_delta(spec, p_b, dt)
    # absorb rounding at the limits
    return BatteryState(min(max(soe, spec.e_min), spec.e_max))

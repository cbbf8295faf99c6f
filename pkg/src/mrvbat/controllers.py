"""The six battery control strategies over a common plan/realize interface."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Sequence

from . import scheduler
from .battery import BatterySpec, BatteryState, feasible_interval
from .gmix import GaussianMixture2
from .mixedrv import DispatchPolicy, realize
from .scheduler import HorizonProblem, HourFrame, SolverOptions

log = logging.getLogger(__name__)

CLAMP_TOL = 1e-9


class ControllerKind(enum.Enum):
    SMPC_FG = "SMPC-FG"
    MPC_FG = "MPC-FG"
    MPC_FB = "MPC-FB"
    SMPC_FB = "SMPC-FB"
    MPC_IDEAL = "MPC-Ideal"
    RBC = "RBC"

    @classmethod
    def parse(cls, name: str) -> ControllerKind:
        key = name.strip().upper().replace("_", "-")
        for kind in cls:
            if key in (kind.value.upper(), kind.name.replace("_", "-")):
                return kind
        valid = ", ".join(k.value for k in cls)
        raise ValueError(f"unknown controller {name!r}; valid kinds: {valid}")

    @property
    def needs_forecast(self) -> bool:
        return self in (ControllerKind.SMPC_FG, ControllerKind.MPC_FG, ControllerKind.MPC_FB, ControllerKind.SMPC_FB)


@dataclass(frozen=True)
class HourAction:
    """Exactly one of ``policy`` (Fixed-Grid), ``setpoint`` (Fixed-Battery) or ``rule`` (RBC) is set."""

    policy: DispatchPolicy | None = None
    setpoint: float | None = None
    rule: bool = False
    status: str = "converged"

    def __post_init__(self) -> None:
        if (self.policy is not None) + (self.setpoint is not None) + bool(self.rule) != 1:
            raise ValueError("an action carries exactly one of policy, setpoint, rule")


@dataclass(frozen=True)
class Realization:
    p_b: float
    p_g: float
    reclamped: bool
    policy: DispatchPolicy | None = None


def _clamp(x: float, lo: float, hi: float) -> float:
    return min(max(x, lo), hi)


def _frames(forecast: Sequence[GaussianMixture2], c_buy, c_sell) -> tuple[HourFrame, ...]:
    if len(forecast) < 1 or len(forecast) != len(c_buy) or len(forecast) != len(c_sell):
        raise ValueError("forecast and price horizons must be equal and nonempty")
    return tuple(HourFrame(f, float(b), float(s)) for f, b, s in zip(forecast, c_buy, c_sell))


def plan_smpc_fg(forecast, c_buy, c_sell, spec: BatterySpec, state: BatteryState,
                 dt: float = 1.0, opts: SolverOptions | None = None) -> HourAction:
    prob = HorizonProblem(_frames(forecast, c_buy, c_sell), spec, state, dt)
    sol = scheduler.solve(prob, opts)
    if not sol.policies:
        raise RuntimeError(f"stochastic schedule {sol.solver_status}")
    if sol.solver_status != "converged":
        log.warning("stochastic schedule %s; using the best feasible start", sol.solver_status)
    return HourAction(policy=sol.policies[0], status=sol.solver_status)


def _first_setpoint(point_forecast, c_buy, c_sell, spec, state, dt) -> tuple[float, float]:
    plan = scheduler.solve_deterministic(point_forecast, c_buy, c_sell, spec, state, dt)
    lo, hi = feasible_interval(spec, state, dt)
    return _clamp(float(plan.battery[0]), lo, hi), float(point_forecast[0])


def plan_mpc_fg(point_forecast, c_buy, c_sell, spec: BatterySpec, state: BatteryState, dt: float = 1.0) -> HourAction:
    pb, pl = _first_setpoint(point_forecast, c_buy, c_sell, spec, state, dt)
    lo, hi = feasible_interval(spec, state, dt)
    return HourAction(policy=DispatchPolicy.from_setpoint(lo, hi, pl - pb))


def plan_mpc_fb(point_forecast, c_buy, c_sell, spec: BatterySpec, state: BatteryState, dt: float = 1.0) -> HourAction:
    pb, _ = _first_setpoint(point_forecast, c_buy, c_sell, spec, state, dt)
    return HourAction(setpoint=pb)


def plan_smpc_fb(forecast, c_buy, c_sell, spec: BatterySpec, state: BatteryState,
                 dt: float = 1.0, opts: SolverOptions | None = None) -> HourAction:
    prob = HorizonProblem(_frames(forecast, c_buy, c_sell), spec, state, dt)
    sol = scheduler.solve_fixed_battery(prob, opts)
    if not sol.setpoints:
        raise RuntimeError(f"fixed-battery schedule {sol.solver_status}")
    if sol.solver_status != "converged":
        log.warning("fixed-battery schedule %s; using the best feasible start", sol.solver_status)
    lo, hi = feasible_interval(spec, state, dt)
    return HourAction(setpoint=_clamp(sol.setpoints[0], lo, hi), status=sol.solver_status)


def plan_mpc_ideal(true_netload, c_buy, c_sell, spec: BatterySpec, state: BatteryState, dt: float = 1.0) -> HourAction:
    return plan_mpc_fb(true_netload, c_buy, c_sell, spec, state, dt)


def plan_rbc(spec: BatterySpec, state: BatteryState, p_l: float, dt: float = 1.0) -> tuple[float, float]:
    lo, hi = feasible_interval(spec, state, dt)
    p_b = _clamp(p_l, lo, hi)
    return p_b, p_l - p_b


def realize_action(action: HourAction, spec: BatterySpec, state: BatteryState, p_l: float,
                   dt: float = 1.0) -> Realization:
    """Realized ``(p_b, p_g)`` after intersecting the action with the SoE-feasible interval."""
    lo, hi = feasible_interval(spec, state, dt)
    if action.rule:
        p_b, p_g = plan_rbc(spec, state, p_l, dt)
        return Realization(p_b, p_g, False)
    if action.setpoint is not None:
        p_b = _clamp(action.setpoint, lo, hi)
        return Realization(p_b, p_l - p_b, abs(p_b - action.setpoint) > CLAMP_TOL)
    pol = action.policy
    a, b = max(pol.pb_lo, lo), min(pol.pb_hi, hi)
    if a > b:
        # disjoint intervals: the nearest feasible power
        a = b = _clamp(pol.pb_lo if pol.pb_lo > hi else pol.pb_hi, lo, hi)
    reclamped = a > pol.pb_lo + CLAMP_TOL or b < pol.pb_hi - CLAMP_TOL
    tight = DispatchPolicy.from_setpoint(a, b, pol.pg_des) if reclamped else pol
    p_b, p_g = realize(tight, p_l)
    return Realization(p_b, p_g, reclamped, tight)

"""Stochastic K-hour battery scheduling with mixed random variables.

Decision vectors are hour-major: hour ``k`` owns ``x[12k : 12k + 12]``, holding

=====  ========================================================
tl     slack of "lo reachable from the previous expected SoE"
th     slack of "hi reachable from the previous expected SoE"
lo     lower battery-power bound of the tracking interval
hi     upper battery-power bound
sell   non-positive part of the desired grid power
buy    non-negative part of the desired grid power
ch     charging part of the expected battery power (<= 0)
dis    discharging part of the expected battery power (>= 0)
tsb    slack of the sell/buy complementarity
tcd    slack of the ch/dis complementarity
tw     interval width ``hi - lo``
e      expected SoE at the end of the hour
=====  ========================================================

Equalities tie ``ch + dis`` to ``E[P_B](lo, hi, sell + buy)`` and propagate the
expected SoE one hour at a time, which keeps every Jacobian and Hessian banded.
Both sign splits carry the relaxed complementarity ``x * y >= -1e-8``; every
inequality is an equality on a nonnegative slack.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit
from scipy.optimize import linprog

from ._kernels import fixed_battery_terms, fixed_grid_terms
from ._nlp import (
    CH, DIS, E, FB_CH, FB_DIS, FB_E, FB_NV, FIXED_BATTERY, FIXED_GRID, HI, LO, NV, SELL, BUY, TCD, TH, TL, TSB, TW,
)
from ._nlp import evaluate
from .auglag import AugLagOptions, minimize_auglag
from .battery import BatterySpec, BatteryState, feasible_interval
from .gmix import GaussianMixture2
from .mixedrv import COMPLEMENTARITY_EPS, DispatchPolicy

log = logging.getLogger(__name__)

TERMINAL_TOL = 1e-6


@dataclass(frozen=True)
class HourFrame:
    forecast: GaussianMixture2
    c_buy: float
    c_sell: float


@dataclass(frozen=True)
class HorizonProblem:
    frames: tuple[HourFrame, ...]
    spec: BatterySpec
    initial_state: BatteryState
    dt: float = 1.0
    terminal_soe_min: float | None = None

    def __post_init__(self) -> None:
        if len(self.frames) < 1:
            raise ValueError("a horizon needs at least one frame")
        for k, fr in enumerate(self.frames):
            if not (math.isfinite(fr.c_buy) and math.isfinite(fr.c_sell)):
                raise ValueError(f"non-finite price at lead hour {k}")
            if fr.c_sell < 0.0:
                raise ValueError(f"negative export price at lead hour {k}")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")

    @property
    def K(self) -> int:
        return len(self.frames)


@dataclass
class SolverOptions:
    max_outer: int = 200
    max_inner: int = 60
    feas_tol: float = 1e-6
    stat_tol: float = 1e-5
    n_starts: int = 3
    seed: int = 0


@dataclass
class HorizonSolution:
    policies: list[DispatchPolicy]
    expected_soe: list[float]
    expected_cost: float
    solver_status: str
    start_costs: list[float] = field(default_factory=list)
    raw: np.ndarray | None = None


def _forecast_arrays(frames: Sequence[HourFrame]):
    w = np.array([fr.forecast.weights for fr in frames])
    m = np.array([fr.forecast.means for fr in frames])
    s = np.array([fr.forecast.stdevs for fr in frames])
    cb = np.array([fr.c_buy for fr in frames])
    cs = np.array([fr.c_sell for fr in frames])
    return w, m, s, cb, cs


@njit(cache=True)
def _assemble(lo, hi, pg, w, m, s, e0, e_min, e_max, p_min, p_max, eta_ch, eta_dis, dt):
    """Forward pass making ``(lo, hi, pg)`` feasible on the expected trajectory.

    Each interval is clipped to the SoE-feasible range of its hour's expected
    SoE; desired grid power and expected battery power are split by sign, so
    both complementarity products are exactly zero.  Slacks are filled in.
    """
    K = lo.shape[0]
    x = np.empty(NV * K)
    soe = np.empty(K + 1)
    soe[0] = e0
    e = e0
    for k in range(K):
        lk = min(max(p_min, (e - e_max) / (eta_ch * dt)), 0.0)
        hk = max(min(p_max, (e - e_min) * eta_dis / dt), 0.0)
        a = min(max(lo[k], lk), hk)
        b = min(max(hi[k], lk), hk)
        if a > b:
            a = b = 0.5 * (a + b)
        sell = min(pg[k], 0.0)
        buy = max(pg[k], 0.0)
        vals, _ = fixed_grid_terms(np.array([a]), np.array([b]), np.array([sell]), np.array([buy]),
                                   w[k : k + 1], m[k : k + 1], s[k : k + 1])
        epb = vals[0, 0]
        o = NV * k
        if k == 0:
            x[o + TL] = 0.0
            x[o + TH] = 0.0
        else:
            x[o + TL] = max(a - (e - e_max) / (eta_ch * dt), 0.0)
            x[o + TH] = max((e - e_min) * eta_dis / dt - b, 0.0)
        e = e - dt * (eta_ch * min(epb, 0.0) + max(epb, 0.0) / eta_dis)
        e = min(max(e, e_min), e_max)
        x[o + LO] = a
        x[o + HI] = b
        x[o + SELL] = sell
        x[o + BUY] = buy
        x[o + CH] = min(epb, 0.0)
        x[o + DIS] = max(epb, 0.0)
        x[o + TSB] = COMPLEMENTARITY_EPS
        x[o + TCD] = COMPLEMENTARITY_EPS
        x[o + TW] = b - a
        x[o + E] = e
        soe[k + 1] = e
    return x, soe


def _cost_scale(c_buy: np.ndarray, dt: float) -> float:
    return 1.0 / (dt * max(float(np.mean(np.abs(c_buy))), 1e-3))


def _data_tuple(w, m, s, cb, cs, prob: HorizonProblem, scale: float):
    spec = prob.spec
    return (w, m, s, cb, cs, float(prob.dt), scale, float(prob.initial_state.soe),
            spec.eta_ch, spec.eta_dis, spec.e_min, spec.e_max)


class _FixedGridNLP:
    """Bounds and callbacks of the interval scheduling problem."""

    def __init__(self, prob: HorizonProblem):
        self.prob = prob
        K, spec, dt = prob.K, prob.spec, prob.dt
        self.K = K
        self.w, self.m, self.s, self.c_buy, self.c_sell = _forecast_arrays(prob.frames)
        self.mean = np.sum(self.w * self.m, axis=1)
        self.scale = _cost_scale(self.c_buy, dt)
        self.data = _data_tuple(self.w, self.m, self.s, self.c_buy, self.c_sell, prob, self.scale)

        reach = float(np.max(np.abs(self.m) + 12.0 * self.s)) + max(-spec.p_min, spec.p_max)
        lb = np.zeros((K, NV))
        ub = np.full((K, NV), np.inf)
        lb[:, LO], ub[:, LO] = spec.p_min, spec.p_max
        lb[:, HI], ub[:, HI] = spec.p_min, spec.p_max
        lb[:, SELL], ub[:, SELL] = -reach, 0.0
        lb[:, BUY], ub[:, BUY] = 0.0, reach
        lb[:, CH], ub[:, CH] = spec.p_min, 0.0
        lb[:, DIS], ub[:, DIS] = 0.0, spec.p_max
        lb[:, E], ub[:, E] = spec.e_min, spec.e_max
        ub[0, [TL, TH]] = 0.0
        l0, h0 = feasible_interval(spec, prob.initial_state, dt)
        lb[0, [LO, HI, CH]] = l0
        ub[0, [LO, HI, DIS]] = h0
        if prob.terminal_soe_min is not None:
            lb[K - 1, E] = min(max(prob.terminal_soe_min, spec.e_min), spec.e_max)
        self.lb, self.ub = lb.ravel(), ub.ravel()

    def split(self, x):
        return x.reshape(self.K, NV).T

    def cost(self, x) -> float:
        f = evaluate(FIXED_GRID, x, self.data)[0]
        return float(f / self.scale)

    def assemble(self, lo, hi, pg):
        spec = self.prob.spec
        return _assemble(
            np.asarray(lo, float), np.asarray(hi, float), np.asarray(pg, float),
            self.w, self.m, self.s, self.prob.initial_state.soe,
            spec.e_min, spec.e_max, spec.p_min, spec.p_max, spec.eta_ch, spec.eta_dis, self.prob.dt,
        )

    def minimize(self, x0, al_opts: AugLagOptions, record_merit: bool = False):
        return minimize_auglag(
            FIXED_GRID, self.data, x0, self.lb, self.ub,
            opts=al_opts, record_merit=record_merit,
        )


def objective(prob: HorizonProblem, policies: Sequence[DispatchPolicy]) -> float:
    """Expected electricity cost of a sequence of Fixed-Grid policies."""
    if len(policies) != prob.K:
        raise ValueError(f"expected {prob.K} policies, got {len(policies)}")
    w, m, s, cb, cs = _forecast_arrays(prob.frames)
    x4 = policy_vector(policies).reshape(4, prob.K)
    vals, _ = fixed_grid_terms(x4[0], x4[1], x4[2], x4[3], w, m, s)
    return prob.dt * float(cb @ vals[2] + cs @ vals[1])


def policy_vector(policies: Sequence[DispatchPolicy]) -> np.ndarray:
    """Decision vector ``[lo..., hi..., sell..., buy...]`` used by ``gradient``."""
    return np.concatenate(
        [
            [p.pb_lo for p in policies],
            [p.pb_hi for p in policies],
            [p.pg_des_sell for p in policies],
            [p.pg_des_buy for p in policies],
        ]
    ).astype(float)


def expected_terms(prob: HorizonProblem, x4: np.ndarray):
    """``(values, partials)`` of the hourly expectations at a ``policy_vector``.

    ``values`` rows are ``E[P_B]``, expected export, expected import, P1, P2;
    ``partials[i, j, k]`` differentiates row ``i`` w.r.t. ``(lo, hi, sell, buy)[j]``.
    """
    w, m, s, _, _ = _forecast_arrays(prob.frames)
    v = np.asarray(x4, dtype=float).reshape(4, prob.K)
    return fixed_grid_terms(v[0].copy(), v[1].copy(), v[2].copy(), v[3].copy(), w, m, s)


def gradient(prob: HorizonProblem, policies: Sequence[DispatchPolicy]) -> np.ndarray:
    """Analytic gradient of ``objective`` in ``policy_vector`` ordering."""
    _, _, _, cb, cs = _forecast_arrays(prob.frames)
    _, d = expected_terms(prob, policy_vector(policies))
    return (prob.dt * (cb * d[2] + cs * d[1])).ravel()


def _soe_trajectory(spec: BatterySpec, e0: float, ch, dis, dt: float) -> np.ndarray:
    draw = dt * (spec.eta_ch * ch + dis / spec.eta_dis)
    return e0 - np.concatenate([[0.0], np.cumsum(draw)])


@dataclass
class DeterministicPlan:
    battery: np.ndarray
    soe: np.ndarray
    cost: float


def solve_deterministic(
    netload: Sequence[float],
    c_buy: Sequence[float],
    c_sell: Sequence[float],
    spec: BatterySpec,
    state: BatteryState,
    dt: float = 1.0,
    terminal_soe_min: float | None = None,
) -> DeterministicPlan:
    """Cost-optimal battery schedule for a known net-load, as a linear program.

    Hourly grid cost is ``max(c_buy * g, c_sell * g)``, which equals the
    asymmetric tariff whenever ``c_buy >= c_sell``.
    """
    p_l = np.asarray(netload, dtype=float)
    cb = np.asarray(c_buy, dtype=float)
    cs = np.asarray(c_sell, dtype=float)
    K = p_l.size
    if np.any(cb < cs):
        log.warning("import price below export price in %d hours; cost epigraph is conservative", int(np.sum(cb < cs)))
    # variables: ch (K), dis (K), epigraph t (K)
    n = 3 * K
    cost = np.concatenate([np.zeros(2 * K), np.full(K, dt)])
    eye = np.eye(K)
    A = [
        np.hstack([-cb[:, None] * eye, -cb[:, None] * eye, -eye]),
        np.hstack([-cs[:, None] * eye, -cs[:, None] * eye, -eye]),
    ]
    b = [-cb * p_l, -cs * p_l]
    e0 = state.soe
    cum = np.zeros((K + 1, n))
    for k in range(1, K + 1):
        cum[k] = cum[k - 1]
        cum[k, k - 1] = dt * spec.eta_ch
        cum[k, K + k - 1] = dt / spec.eta_dis
    A += [-cum[1:], cum[1:]]
    b += [np.full(K, spec.e_max - e0), np.full(K, e0 - spec.e_min)]
    if terminal_soe_min is not None:
        A.append(cum[K:])
        b.append(np.array([e0 - terminal_soe_min]))
    bounds = [(spec.p_min, 0.0)] * K + [(0.0, spec.p_max)] * K + [(None, None)] * K
    res = linprog(cost, A_ub=np.vstack(A), b_ub=np.concatenate(b), bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"deterministic schedule failed: {res.message}")
    pb = res.x[:K] + res.x[K : 2 * K]
    soe = _soe_trajectory(spec, e0, np.minimum(pb, 0.0), np.maximum(pb, 0.0), dt)
    g = p_l - pb
    true_cost = dt * float(np.sum(np.where(g > 0.0, cb * g, cs * g)))
    return DeterministicPlan(pb, np.clip(soe, spec.e_min, spec.e_max), true_cost)


def _starting_points(nlp: _FixedGridNLP, opts: SolverOptions, warm):
    prob, K = nlp.prob, nlp.K
    spec = prob.spec
    mean = nlp.mean
    starts = []
    try:
        plan = solve_deterministic(mean, nlp.c_buy, nlp.c_sell, spec, prob.initial_state, prob.dt, prob.terminal_soe_min)
        starts.append(("fixed-battery", (plan.battery, plan.battery, mean - plan.battery)))
    except RuntimeError as exc:
        log.warning("deterministic seed unavailable: %s", exc)
    starts.append(("wide-passive", (np.full(K, spec.p_min), np.full(K, spec.p_max), np.zeros(K))))
    starts.append(("mean-tracking", (np.full(K, spec.p_min), np.full(K, spec.p_max), mean.copy())))
    rng = np.random.default_rng(opts.seed)
    while len(starts) < opts.n_starts:
        a = rng.uniform(spec.p_min, spec.p_max, size=(2, K))
        starts.append(("random", (a.min(axis=0), a.max(axis=0), mean + rng.normal(0.0, 1.0, K))))
    starts = starts[: max(opts.n_starts, 1)]
    if warm is not None:
        starts.insert(0, ("warm", warm))
    return starts


def _solution_from(nlp: _FixedGridNLP, x, status: str) -> HorizonSolution:
    v = nlp.split(x)
    xf, soe = nlp.assemble(v[LO], v[HI], v[SELL] + v[BUY])
    vf = nlp.split(xf)
    policies = [
        DispatchPolicy.from_split(float(vf[LO, k]), float(vf[HI, k]), float(vf[SELL, k]), float(vf[BUY, k]))
        for k in range(nlp.K)
    ]
    return HorizonSolution(policies, [float(e) for e in soe], nlp.cost(xf), status, raw=xf)


def _al_options(opts: SolverOptions) -> AugLagOptions:
    return AugLagOptions(
        max_outer=opts.max_outer, max_inner=opts.max_inner, feas_tol=opts.feas_tol, stat_tol=opts.stat_tol
    )


def solve(
    prob: HorizonProblem,
    opts: SolverOptions | None = None,
    warm_start: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
) -> HorizonSolution:
    """Multi-start local solve of the interval scheduling problem.

    Every start is made feasible on the expected trajectory first and every
    local solution is repaired the same way afterwards.  The cheapest of all
    feasible points seen wins; earlier starts win ties, so adding starts
    never worsens the result.
    """
    opts = opts or SolverOptions()
    spec = prob.spec
    e0 = prob.initial_state.soe
    if not spec.e_min - 1e-9 <= e0 <= spec.e_max + 1e-9:
        return HorizonSolution([], [], math.inf, "infeasible")
    nlp = _FixedGridNLP(prob)
    al_opts = _al_options(opts)
    best: HorizonSolution | None = None
    costs = []
    for name, (lo, hi, pg) in _starting_points(nlp, opts, warm_start):
        x0, _ = nlp.assemble(lo, hi, pg)
        res = nlp.minimize(x0, al_opts)
        log.debug("start %s: %s viol=%.1e evals=%d", name, res.status, res.max_violation, res.evaluations)
        for cand in (_solution_from(nlp, res.x, res.status), _solution_from(nlp, x0, res.status)):
            if not _meets_terminal(prob.terminal_soe_min, cand.expected_soe[-1]):
                continue
            costs.append(cand.expected_cost)
            if best is None or cand.expected_cost < best.expected_cost - 1e-12:
                best = cand
    if best is None:
        return HorizonSolution([], [], math.inf, "infeasible")
    best.start_costs = costs
    return best


def _meets_terminal(terminal_soe_min: float | None, soe: float) -> bool:
    return terminal_soe_min is None or soe >= terminal_soe_min - TERMINAL_TOL


@dataclass
class FixedBatterySolution:
    setpoints: list[float]
    expected_soe: list[float]
    expected_cost: float
    solver_status: str


def fixed_battery_objective(prob: HorizonProblem, setpoints: Sequence[float]) -> float:
    """Expected cost when the battery holds ``setpoints`` and the grid absorbs deviations."""
    w, m, s, cb, cs = _forecast_arrays(prob.frames)
    vals, _ = fixed_battery_terms(np.asarray(setpoints, dtype=float), w, m, s)
    return prob.dt * float(cb @ vals[1] + cs @ vals[0])


def solve_fixed_battery(prob: HorizonProblem, opts: SolverOptions | None = None) -> FixedBatterySolution:
    """Expected-cost optimal battery setpoints under a probabilistic forecast.

    Seeded from the deterministic plan on the forecast means and from an
    idle battery; the cheaper local solution is returned.
    """
    opts = opts or SolverOptions()
    spec, dt, K = prob.spec, prob.dt, prob.K
    e0 = prob.initial_state.soe
    if not spec.e_min - 1e-9 <= e0 <= spec.e_max + 1e-9:
        return FixedBatterySolution([], [], math.inf, "infeasible")
    w, m, s, cb, cs = _forecast_arrays(prob.frames)
    data = _data_tuple(w, m, s, cb, cs, prob, _cost_scale(cb, dt))
    lb = np.zeros((K, FB_NV))
    ub = np.full((K, FB_NV), np.inf)
    lb[:, FB_CH], ub[:, FB_CH] = spec.p_min, 0.0
    lb[:, FB_DIS], ub[:, FB_DIS] = 0.0, spec.p_max
    lb[:, FB_E], ub[:, FB_E] = spec.e_min, spec.e_max
    if prob.terminal_soe_min is not None:
        lb[K - 1, FB_E] = min(max(prob.terminal_soe_min, spec.e_min), spec.e_max)
    lb, ub = lb.ravel(), ub.ravel()

    mean = np.sum(w * m, axis=1)
    seeds = [np.zeros(K)]
    try:
        plan = solve_deterministic(mean, cb, cs, spec, prob.initial_state, dt, prob.terminal_soe_min)
        seeds.insert(0, plan.battery)
    except RuntimeError as exc:
        log.warning("deterministic seed unavailable: %s", exc)
    best: FixedBatterySolution | None = None
    for pb0 in seeds[: max(opts.n_starts, 1)]:
        pb0, soe0 = _feasible_setpoints(spec, e0, pb0, dt)
        x0 = np.column_stack(
            [np.minimum(pb0, 0.0), np.maximum(pb0, 0.0), np.full(K, COMPLEMENTARITY_EPS), soe0[1:]]
        ).ravel()
        res = minimize_auglag(FIXED_BATTERY, data, x0, lb, ub,
                              opts=_al_options(opts))
        for x, status in ((res.x, res.status), (x0, res.status)):
            X = x.reshape(K, FB_NV)
            pb, soe = _feasible_setpoints(spec, e0, X[:, FB_CH] + X[:, FB_DIS], dt)
            if not _meets_terminal(prob.terminal_soe_min, soe[-1]):
                continue
            cost = fixed_battery_objective(prob, pb)
            if best is None or cost < best.expected_cost - 1e-12:
                best = FixedBatterySolution(list(map(float, pb)), list(map(float, soe)), cost, status)
    if best is None:
        return FixedBatterySolution([], [], math.inf, "infeasible")
    return best


def _feasible_setpoints(spec: BatterySpec, e0: float, pb, dt: float):
    """Clip setpoints hour by hour to the SoE-feasible interval."""
    pb = np.array(pb, dtype=float)
    soe = [e0]
    e = e0
    for k in range(pb.size):
        lo, hi = feasible_interval(spec, BatteryState(e), dt)
        pb[k] = min(max(pb[k], lo), hi)
        e = e - dt * (spec.eta_ch * min(pb[k], 0.0) + max(pb[k], 0.0) / spec.eta_dis)
        e = min(max(e, spec.e_min), spec.e_max)
        soe.append(e)
    return pb, np.array(soe)

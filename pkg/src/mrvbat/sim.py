"""Receding-horizon simulation and controller tournaments."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from . import controllers as ctl
from .battery import BatterySpec, BatteryState, step
from .controllers import ControllerKind, HourAction
from .forecast import FitCache, QuantileForecast, SyntheticForecastModel, point_forecast, synthesize_quantiles
from .gmix import GaussianMixture2
from .scheduler import SolverOptions

log = logging.getLogger(__name__)

METRICS = ("import_kwh", "import_cost_eur", "export_kwh", "export_revenue_eur", "total_cost_eur")
TRACE_FIELDS = ("hour", "p_l", "p_b", "p_g", "soe", "pb_lo", "pb_hi", "pg_des", "setpoint", "reclamped", "status")


@dataclass(frozen=True)
class ScenarioFrame:
    """Hour ``k``: mixtures for lead hours ``k, k+1, ...``, the realized net-load and prices."""

    k: int
    forecast: tuple[GaussianMixture2, ...]
    truth: float
    c_buy: float
    c_sell: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.truth, self.c_buy, self.c_sell)):
            raise ValueError(f"non-finite truth or price at hour {self.k}")


@dataclass(frozen=True)
class Scenario:
    name: str
    frames: tuple[ScenarioFrame, ...]
    spec: BatterySpec = BatterySpec()
    dt: float = 1.0
    initial_soe: float | None = None
    hours: int | None = None


@dataclass
class EpisodeReport:
    scenario: str
    controller: str
    import_kwh: float = 0.0
    import_cost_eur: float = 0.0
    export_kwh: float = 0.0
    export_revenue_eur: float = 0.0
    total_cost_eur: float = 0.0
    regret_pct: float = math.nan
    rank: float = math.nan
    reclamps: int = 0
    solver_warnings: int = 0
    trace: list[dict] = field(default_factory=list, repr=False)

    def metrics(self) -> dict:
        return {k: getattr(self, k) for k in METRICS + ("regret_pct", "rank", "reclamps", "solver_warnings")}


@dataclass
class TournamentReport:
    episodes: list[EpisodeReport]
    summary: list[dict]


class EpisodeError(RuntimeError):
    def __init__(self, hour: int, status: str):
        super().__init__(f"controller failed at hour {hour}: {status}")
        self.hour = hour
        self.status = status


def build_frames(
    truth: Sequence[float],
    c_buy: Sequence[float],
    c_sell: Sequence[float],
    horizon: int = 24,
    *,
    model: SyntheticForecastModel | None = None,
    quantiles: Sequence[QuantileForecast] | None = None,
    seed: int | Sequence[int] = 0,
    cache: FitCache | None = None,
) -> tuple[ScenarioFrame, ...]:
    """Frames with rolling lead-hour mixtures.

    A synthetic ``model`` redraws quantiles for the next ``horizon`` hours at
    every hour; a fixed list of hourly ``quantiles`` is fitted once and
    windowed.  The draw at hour ``k`` is seeded by ``(*seed, k)``.
    """
    truth = np.asarray(truth, dtype=float)
    n = truth.size
    if not (len(c_buy) == len(c_sell) == n):
        raise ValueError("truth and price series differ in length")
    if (model is None) == (quantiles is None):
        raise ValueError("give exactly one of model, quantiles")
    cache = cache or FitCache()
    prefix = [int(seed)] if np.isscalar(seed) else [int(v) for v in seed]
    frames = []
    if quantiles is not None:
        if len(quantiles) != n:
            raise ValueError("need one quantile forecast per hour")
        fitted = [cache.fit(q).mixture for q in quantiles]
    for k in range(n):
        end = min(n, k + horizon)
        if model is not None:
            qs = synthesize_quantiles(truth[k:end], model, prefix + [k])
            mix = tuple(cache.fit(q).mixture for q in qs)
        else:
            mix = tuple(fitted[k:end])
        frames.append(ScenarioFrame(k, mix, float(truth[k]), float(c_buy[k]), float(c_sell[k])))
    return tuple(frames)


def _plan(kind: ControllerKind, frames, k: int, K: int, spec, state, dt, opts) -> HourAction:
    K = min(K, len(frames) - k, len(frames[k].forecast)) if kind.needs_forecast else min(K, len(frames) - k)
    window = frames[k : k + K]
    cb = [f.c_buy for f in window]
    cs = [f.c_sell for f in window]
    mix = frames[k].forecast[:K]
    if kind is ControllerKind.SMPC_FG:
        return ctl.plan_smpc_fg(mix, cb, cs, spec, state, dt, opts)
    if kind is ControllerKind.SMPC_FB:
        return ctl.plan_smpc_fb(mix, cb, cs, spec, state, dt, opts)
    if kind is ControllerKind.MPC_FG:
        return ctl.plan_mpc_fg([point_forecast(m) for m in mix], cb, cs, spec, state, dt)
    if kind is ControllerKind.MPC_FB:
        return ctl.plan_mpc_fb([point_forecast(m) for m in mix], cb, cs, spec, state, dt)
    if kind is ControllerKind.MPC_IDEAL:
        return ctl.plan_mpc_ideal([f.truth for f in window], cb, cs, spec, state, dt)
    return HourAction(rule=True)


def run_episode(
    scenario: Scenario,
    controller: ControllerKind | str,
    horizon: int = 24,
    seed: int = 0,
    opts: SolverOptions | None = None,
) -> EpisodeReport:
    """Simulate ``scenario.hours`` hours (all frames by default) under one controller."""
    kind = controller if isinstance(controller, ControllerKind) else ControllerKind.parse(controller)
    frames, spec, dt = scenario.frames, scenario.spec, scenario.dt
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    hours = len(frames) if scenario.hours is None else min(scenario.hours, len(frames))
    opts = opts or SolverOptions(seed=seed)
    state = BatteryState(spec.mid_soe if scenario.initial_soe is None else scenario.initial_soe)
    rep = EpisodeReport(scenario.name, kind.value)
    for k in range(hours):
        fr = frames[k]
        try:
            action = _plan(kind, frames, k, horizon, spec, state, dt, opts)
        except (RuntimeError, ValueError) as exc:
            raise EpisodeError(k, str(exc)) from exc
        if action.status != "converged":
            rep.solver_warnings += 1
        r = ctl.realize_action(action, spec, state, fr.truth, dt)
        rep.reclamps += r.reclamped
        pol = r.policy
        rep.trace.append(
            {
                "hour": fr.k,
                "p_l": fr.truth,
                "p_b": r.p_b,
                "p_g": r.p_g,
                "soe": state.soe,
                "pb_lo": pol.pb_lo if pol else math.nan,
                "pb_hi": pol.pb_hi if pol else math.nan,
                "pg_des": pol.pg_des if pol else math.nan,
                "setpoint": action.setpoint if action.setpoint is not None else math.nan,
                "reclamped": int(r.reclamped),
                "status": action.status,
            }
        )
        imp, exp = max(r.p_g, 0.0) * dt, -min(r.p_g, 0.0) * dt
        rep.import_kwh += imp
        rep.export_kwh += exp
        rep.import_cost_eur += fr.c_buy * imp
        rep.export_revenue_eur += fr.c_sell * exp
        state = step(spec, state, r.p_b, dt)
    rep.total_cost_eur = rep.import_cost_eur - rep.export_revenue_eur
    return rep


def _regret(cost: float, ideal: float) -> float:
    # the magnitude keeps the sign meaningful when the ideal cost is a net revenue
    if not math.isfinite(ideal) or ideal == 0.0:
        return math.nan
    return 100.0 * (cost - ideal) / abs(ideal)


def _episode_job(args):
    return run_episode(*args)


def tournament(
    scenarios: Sequence[Scenario],
    controllers: Sequence[ControllerKind | str],
    horizon: int = 24,
    seed: int = 0,
    opts: SolverOptions | None = None,
    workers: int = 1,
) -> TournamentReport:
    """Every controller on every scenario, with per-scenario regret and placements.

    Placements rank total cost ascending per scenario, ties sharing the mean
    placement; a controller's rank is its mean placement.  The summary regret
    compares mean total costs.
    """
    kinds = [c if isinstance(c, ControllerKind) else ControllerKind.parse(c) for c in controllers]
    if len(scenarios) < 1 or len(kinds) < 1:
        raise ValueError("a tournament needs at least one scenario and one controller")
    if len(set(kinds)) != len(kinds):
        raise ValueError("duplicate controllers")
    jobs = [(sc, kind, horizon, seed, opts) for sc in scenarios for kind in kinds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            episodes = list(pool.map(_episode_job, jobs))
    else:
        episodes = [_episode_job(j) for j in jobs]
    n = len(kinds)
    ideal = ControllerKind.MPC_IDEAL.value
    for i, sc in enumerate(scenarios):
        group = episodes[i * n : (i + 1) * n]
        ranks = rankdata([e.total_cost_eur for e in group], method="average")
        ref = next((e.total_cost_eur for e in group if e.controller == ideal), math.nan)
        for e, r in zip(group, ranks):
            e.rank = float(r)
            e.regret_pct = _regret(e.total_cost_eur, ref)
            if e.controller != ideal and e.regret_pct < 0.0:
                log.info("scenario %s: %s beats the ideal plan (regret %.3f%%)", sc.name, e.controller, e.regret_pct)
    summary = []
    means = {}
    for j, kind in enumerate(kinds):
        eps = episodes[j::n]
        row = {"controller": kind.value}
        for m in METRICS + ("rank",):
            row[m] = float(np.mean([getattr(e, m) for e in eps]))
        row["reclamps"] = int(sum(e.reclamps for e in eps))
        row["solver_warnings"] = int(sum(e.solver_warnings for e in eps))
        means[kind.value] = row["total_cost_eur"]
        summary.append(row)
    for row in summary:
        row["regret_pct"] = _regret(row["total_cost_eur"], means.get(ideal, math.nan))
    return TournamentReport(episodes, summary)

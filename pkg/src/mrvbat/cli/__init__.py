"""Command-line entry point: ``mrvbat {generate,run,fit-forecast,tariff}``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 solver failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .. import gmix, tariff
from ..battery import BatterySpec
from ..controllers import ControllerKind
from ..forecast import FitCache, fit_mixture, synthesize_quantiles
from ..mixedrv import DispatchPolicy, boundary_probabilities
from ..sim import METRICS, TRACE_FIELDS, EpisodeError, tournament
from . import io
from .profiles import PROFILES, generate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 2, 3, 4
REPORT_FIELDS = ("scenario", "controller") + METRICS + ("regret_pct", "rank", "reclamps", "solver_warnings")

log = logging.getLogger("mrvbat")


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mrvbat", description="Stochastic battery scheduling experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress and solver warnings")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic scenario bundle")
    g.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
    g.add_argument("--days", type=int, default=14, help="number of days (default 14)")
    g.add_argument("--profile", choices=sorted(PROFILES), default="summer-pv", help="household profile")
    g.add_argument("--name", help="scenario name (default: directory name)")
    g.add_argument("--out", type=Path, required=True, help="output bundle directory")

    r = sub.add_parser("run", help="simulate controllers on scenario bundles")
    r.add_argument("--scenario", type=Path, action="append", required=True,
                   help="scenario bundle, or a directory of bundles; repeatable")
    r.add_argument("--controllers", default=",".join(k.value for k in ControllerKind),
                   help="comma-separated controller names (default: all six)")
    r.add_argument("--horizon", type=int, default=24, help="planning horizon in hours (default 24)")
    r.add_argument("--seed", type=int, default=0, help="root seed for forecast draws and solver starts")
    r.add_argument("--hours", type=int, help="simulate only the first N hours")
    r.add_argument("--starts", type=int, help="override the multi-start count")
    r.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    r.add_argument("--out", type=Path, required=True, help="output directory")
    r.add_argument("--emit-plots", action="store_true", help="also write plot-data files")
    r.add_argument("--plot-hour", type=int, default=12, help="hour for mixed-distribution plot data (default 12)")

    f = sub.add_parser("fit-forecast", help="fit two-component mixtures to a quantile CSV")
    f.add_argument("--quantiles", type=Path, required=True, help="CSV with timestamp,q01..q99")
    f.add_argument("--out", type=Path, required=True, help="output CSV of mixture parameters")

    t = sub.add_parser("tariff", help="build import/export prices from wholesale prices")
    t.add_argument("--wholesale", type=Path, required=True, help="CSV with timestamp,price_eur_per_kwh")
    t.add_argument("--buy-mean", type=float, default=0.4, help="target mean import price (default 0.4)")
    t.add_argument("--sell-mean", type=float, default=0.08, help="target mean export price (default 0.08)")
    t.add_argument("--out", type=Path, required=True, help="output tariff CSV")
    return p


def cmd_generate(args) -> int:
    if args.days < 1:
        raise UsageError("--days must be at least 1")
    prof = PROFILES[args.profile]
    data = generate(args.profile, args.days, args.seed)
    n = data["netload"].size
    ts = io.hourly_timestamps(prof.start, n)
    tar = tariff.build(data["wholesale"], 0.4, 0.08, ts)
    out = args.out
    io.write_rows(out / "netload.csv", ["timestamp", "netload_kw"], zip(ts, data["netload"].tolist()))
    io.write_rows(out / "tariff.csv", ["timestamp", "price_eur_per_kwh", "c_buy_eur_per_kwh", "c_sell_eur_per_kwh"],
                  zip(ts, data["wholesale"].tolist(), tar.c_buy.tolist(), tar.c_sell.tolist()))
    # day-ahead quantiles: issued at midnight, lead hour = hour of day
    rows = []
    for d in range(args.days):
        day = data["netload"][24 * d : 24 * d + 24]
        for q in synthesize_quantiles(day, prof.forecast, [args.seed, 1, d]):
            rows.append([ts[24 * d + q.timestamp]] + q.quantiles.tolist())
    io.write_rows(out / "quantiles.csv", ["timestamp"] + io.QUANTILE_COLUMNS, rows)
    cfg = {
        "name": args.name or out.name,
        "profile": args.profile,
        "seed": args.seed,
        "days": args.days,
        "dt_hours": 1.0,
        "initial_soe_kwh": None,
        "sim_hours": None,
        "battery": io.battery_to_config(BatterySpec()),
        "tariff": {"buy_mean_eur_per_kwh": 0.4, "sell_mean_eur_per_kwh": 0.08},
        "forecast": io.forecast_to_config(prof.forecast),
        "solver": {"max_outer": 200, "feas_tol": 1e-6, "stat_tol": 1e-5, "n_starts": 3},
    }
    io.write_json(out / io.SCENARIO_FILE, cfg)
    print(f"wrote {n} hours to {out}")
    return EXIT_OK


def _parse_controllers(text: str) -> list[ControllerKind]:
    try:
        kinds = [ControllerKind.parse(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not kinds:
        raise UsageError("no controllers given")
    if len(set(kinds)) != len(kinds):
        raise UsageError("duplicate controllers")
    return kinds


def _mixed_pdf_rows(m: gmix.GaussianMixture2, pol: DispatchPolicy, n: int = 201):
    """Continuous densities and point masses of battery and grid power under ``pol``."""
    bp = boundary_probabilities(m, pol)
    lo, hi, g = pol.pb_lo, pol.pb_hi, pol.pg_des
    sd = float(np.max(m.stdevs))
    rows = []
    for z in np.linspace(lo - 0.5, hi + 0.5, n):
        f_b = float(gmix.pdf(m, z + g)) if lo < z < hi else 0.0
        rows.append(["battery", float(z), f_b, math.nan])
    rows += [["battery", lo, math.nan, bp.p1], ["battery", hi, math.nan, bp.p2]]
    for z in np.linspace(min(g, gmix.mean(m)) - 4 * sd, max(g, gmix.mean(m)) + 4 * sd, n):
        f_g = float(gmix.pdf(m, z + lo)) if z < g else float(gmix.pdf(m, z + hi)) if z > g else 0.0
        rows.append(["grid", float(z), f_g, math.nan])
    rows.append(["grid", g, math.nan, bp.interior])
    return rows


def _write_plots(out: Path, bundle, episodes, hour: int) -> None:
    for ep in episodes:
        io.write_rows(out / "plots" / f"timeseries_{ep.controller}.csv", ["hour", "p_l", "p_b", "p_g", "soe"],
                      ([r["hour"], r["p_l"], r["p_b"], r["p_g"], r["soe"]] for r in ep.trace))
        if math.isnan(ep.trace[0]["pb_lo"]):
            continue
        k = min(max(hour, 0), len(ep.trace) - 1)
        r = ep.trace[k]
        pol = DispatchPolicy.from_setpoint(r["pb_lo"], r["pb_hi"], r["pg_des"])
        m = bundle.scenario.frames[k].forecast[0]
        io.write_rows(out / "plots" / f"pdf_{ep.controller}_hour{k}.csv", ["variable", "power_kw", "density", "mass"],
                      _mixed_pdf_rows(m, pol))


def cmd_run(args) -> int:
    kinds = _parse_controllers(args.controllers)
    if args.horizon < 1:
        raise UsageError("--horizon must be at least 1")
    paths = io.find_bundles(args.scenario)
    cache = FitCache()
    bundles = [io.load_bundle(p, args.horizon, args.seed, cache) for p in paths]
    scenarios = []
    for b in bundles:
        sc = b.scenario
        if args.hours is not None:
            sc = type(sc)(sc.name, sc.frames, sc.spec, sc.dt, sc.initial_soe, args.hours)
        scenarios.append(sc)
    opts = bundles[0].solver
    if args.starts is not None:
        opts.n_starts = args.starts
    names = [s.name for s in scenarios]
    if len(set(names)) != len(names):
        raise io.DataError("scenario names must be unique")
    rep = tournament(scenarios, kinds, args.horizon, args.seed, opts, args.workers)
    episodes, summary = rep.episodes, rep.summary
    out = args.out
    rows = [[e.scenario, e.controller] + [e.metrics()[k] for k in REPORT_FIELDS[2:]] for e in episodes]
    rows += [["ALL", s["controller"]] + [s[k] for k in REPORT_FIELDS[2:]] for s in summary]
    io.write_rows(out / "report.csv", REPORT_FIELDS, rows)
    io.write_json(out / "report.json", {
        "config": {
            "scenarios": names,
            "controllers": [k.value for k in kinds],
            "horizon": args.horizon,
            "seed": args.seed,
            "hours": args.hours,
            "n_starts": opts.n_starts,
        },
        "episodes": [{"scenario": e.scenario, "controller": e.controller, **e.metrics()} for e in episodes],
        "summary": summary,
    })
    for b, sc in zip(bundles, scenarios):
        eps = [e for e in episodes if e.scenario == sc.name]
        tdir = out if len(scenarios) == 1 else out / sc.name
        for e in eps:
            io.write_rows(tdir / f"trace_{e.controller}.csv", ["timestamp"] + list(TRACE_FIELDS),
                          ([b.timestamps[r["hour"]]] + [r[f] for f in TRACE_FIELDS] for r in e.trace))
        if args.emit_plots:
            _write_plots(tdir, b, eps, args.plot_hour)
    width = max(len(s["controller"]) for s in summary)
    print(f"{'controller':<{width}}  {'total_cost_eur':>14}  {'regret_pct':>10}  {'rank':>5}")
    for s in summary:
        print(f"{s['controller']:<{width}}  {s['total_cost_eur']:>14.4f}  {s['regret_pct']:>10.3f}  {s['rank']:>5.2f}")
    return EXIT_OK


def cmd_fit_forecast(args) -> int:
    ts, qs = io.read_quantiles(args.quantiles)
    cache = FitCache()
    rows = []
    for t, q in zip(ts, qs):
        fit = cache.fit(q) if not q.repaired else fit_mixture(q)
        (c0, c1) = fit.mixture.components
        rows.append([t, c0.weight, c0.mean, c0.stdev, c1.weight, c1.mean, c1.stdev, fit.rms, int(fit.degenerate)])
    io.write_rows(args.out, ["timestamp", "w1", "mu1_kw", "sigma1_kw", "w2", "mu2_kw", "sigma2_kw", "rms_kw",
                             "degenerate"], rows)
    worst = max(r[7] for r in rows)
    print(f"fitted {len(rows)} hours, worst RMS {worst:.4g} kW")
    return EXIT_OK


def cmd_tariff(args) -> int:
    ts, price = io.read_series(args.wholesale, "price_eur_per_kwh")
    tar = tariff.build(price, args.buy_mean, args.sell_mean, ts)
    io.write_rows(args.out, ["timestamp", "price_eur_per_kwh", "c_buy_eur_per_kwh", "c_sell_eur_per_kwh"],
                  zip(ts, price.tolist(), tar.c_buy.tolist(), tar.c_sell.tolist()))
    print(f"mean import {np.mean(tar.c_buy):.6f}, mean export {np.mean(tar.c_sell):.6f} EUR/kWh")
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "run": cmd_run, "fit-forecast": cmd_fit_forecast, "tariff": cmd_tariff}


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except (io.DataError, tariff.TariffError) as exc:
        print(f"mrvbat: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except EpisodeError as exc:
        print(f"mrvbat: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"mrvbat: I/O error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_USAGE

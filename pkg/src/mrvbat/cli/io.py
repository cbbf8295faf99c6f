"""File formats of scenario bundles, forecasts, tariffs and reports."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..battery import BatterySpec
from ..forecast import PROBS, FitCache, QuantileForecast, SyntheticForecastModel
from ..scheduler import SolverOptions
from ..sim import Scenario, build_frames

QUANTILE_COLUMNS = [f"q{int(round(100 * p)):02d}" for p in PROBS]
SCENARIO_FILE = "scenario.json"

BATTERY_KEYS = {
    "e_min_kwh": "e_min",
    "e_max_kwh": "e_max",
    "p_min_kw": "p_min",
    "p_max_kw": "p_max",
    "eta_ch": "eta_ch",
    "eta_dis": "eta_dis",
}
FORECAST_KEYS = {
    "bias_kw": "bias",
    "sigma_base_kw": "sigma_base",
    "sigma_growth_kw": "sigma_growth",
    "skew_weight": "skew_weight",
    "skew_offset_kw": "skew_offset",
}
SOLVER_KEYS = ("max_outer", "max_inner", "feas_tol", "stat_tol", "n_starts")


class DataError(ValueError):
    """Malformed input data; messages name the file and line."""


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def read_table(path: Path, required: Sequence[str]) -> tuple[list[str], dict[str, list[str]]]:
    """Columns of a CSV file as strings; the header must contain ``required``."""
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        missing = [c for c in required if c not in header]
        if missing:
            raise DataError(f"{path}:1: missing columns {', '.join(missing)}")
        cols: dict[str, list[str]] = {h: [] for h in header}
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{reader.line_num}: expected {len(header)} fields, got {len(row)}")
            for h, c in zip(header, row):
                cols[h].append(c.strip())
    if not cols[header[0]]:
        raise DataError(f"{path}: no data rows")
    return header, cols


def _floats(path: Path, name: str, values: list[str]) -> np.ndarray:
    out = np.empty(len(values))
    for i, v in enumerate(values):
        try:
            out[i] = float(v)
        except ValueError:
            raise DataError(f"{path}:{i + 2}: column {name}: not a number: {v!r}") from None
        if not math.isfinite(out[i]):
            raise DataError(f"{path}:{i + 2}: column {name}: non-finite value")
    return out


def _timestamps(path: Path, values: list[str]) -> list[str]:
    prev = None
    for i, v in enumerate(values):
        try:
            t = datetime.fromisoformat(v)
        except ValueError:
            raise DataError(f"{path}:{i + 2}: bad ISO-8601 timestamp {v!r}") from None
        if prev is not None and t - prev != timedelta(hours=1):
            raise DataError(f"{path}:{i + 2}: timestamps must be consecutive hours")
        prev = t
    return values


def read_series(path: Path, column: str) -> tuple[list[str], np.ndarray]:
    _, cols = read_table(path, ["timestamp", column])
    return _timestamps(path, cols["timestamp"]), _floats(path, column, cols[column])


def read_quantiles(path: Path) -> tuple[list[str], list[QuantileForecast]]:
    _, cols = read_table(path, ["timestamp"] + QUANTILE_COLUMNS)
    ts = _timestamps(path, cols["timestamp"])
    arr = np.column_stack([_floats(path, c, cols[c]) for c in QUANTILE_COLUMNS])
    return ts, [QuantileForecast(k, arr[k]) for k in range(len(ts))]


def read_tariff(path: Path) -> tuple[list[str], np.ndarray, np.ndarray]:
    _, cols = read_table(path, ["timestamp", "c_buy_eur_per_kwh", "c_sell_eur_per_kwh"])
    ts = _timestamps(path, cols["timestamp"])
    return ts, _floats(path, "c_buy_eur_per_kwh", cols["c_buy_eur_per_kwh"]), _floats(
        path, "c_sell_eur_per_kwh", cols["c_sell_eur_per_kwh"]
    )


def write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def hourly_timestamps(start: str, n: int) -> list[str]:
    t0 = datetime.fromisoformat(start)
    return [(t0 + timedelta(hours=k)).isoformat() for k in range(n)]


def battery_to_config(spec: BatterySpec) -> dict:
    return {k: getattr(spec, v) for k, v in BATTERY_KEYS.items()}


def battery_from_config(cfg: dict) -> BatterySpec:
    unknown = set(cfg) - set(BATTERY_KEYS)
    if unknown:
        raise DataError(f"unknown battery keys: {', '.join(sorted(unknown))}")
    try:
        return BatterySpec(**{BATTERY_KEYS[k]: float(v) for k, v in cfg.items()})
    except (TypeError, ValueError) as exc:
        raise DataError(f"battery: {exc}") from None


def forecast_to_config(model: SyntheticForecastModel) -> dict:
    return {"source": "synthetic", **{k: getattr(model, v) for k, v in FORECAST_KEYS.items()}}


def forecast_from_config(cfg: dict) -> SyntheticForecastModel | None:
    cfg = dict(cfg)
    source = cfg.pop("source", "synthetic")
    if source == "quantiles":
        return None
    if source != "synthetic":
        raise DataError(f"forecast source must be 'synthetic' or 'quantiles', got {source!r}")
    unknown = set(cfg) - set(FORECAST_KEYS)
    if unknown:
        raise DataError(f"unknown forecast keys: {', '.join(sorted(unknown))}")
    try:
        return SyntheticForecastModel(**{FORECAST_KEYS[k]: float(v) for k, v in cfg.items()})
    except (TypeError, ValueError) as exc:
        raise DataError(f"forecast: {exc}") from None


def solver_from_config(cfg: dict, seed: int) -> SolverOptions:
    unknown = set(cfg) - set(SOLVER_KEYS)
    if unknown:
        raise DataError(f"unknown solver keys: {', '.join(sorted(unknown))}")
    return SolverOptions(seed=seed, **cfg)


def write_json(path: Path, obj) -> None:
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        return v

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(clean(obj), indent=2, sort_keys=True) + "\n")


def read_config(bundle: Path) -> dict:
    path = Path(bundle) / SCENARIO_FILE
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}: {exc.msg}") from exc


@dataclass
class Bundle:
    path: Path
    config: dict
    timestamps: list[str]
    scenario: Scenario
    solver: SolverOptions


def load_bundle(path: Path, horizon: int, seed: int, cache: FitCache | None = None) -> Bundle:
    """Read a scenario directory and build its simulation frames."""
    path = Path(path)
    cfg = read_config(path)
    ts, netload = read_series(path / "netload.csv", "netload_kw")
    tts, c_buy, c_sell = read_tariff(path / "tariff.csv")
    if tts != ts:
        raise DataError(f"{path}: netload.csv and tariff.csv timestamps differ")
    if np.any(c_sell < 0.0):
        raise DataError(f"{path / 'tariff.csv'}: negative export price")
    model = forecast_from_config(cfg.get("forecast", {}))
    quantiles = None
    if model is None:
        qts, quantiles = read_quantiles(path / "quantiles.csv")
        if qts != ts:
            raise DataError(f"{path}: quantiles.csv and netload.csv timestamps differ")
    scenario_seed = int(cfg.get("seed", 0))
    frames = build_frames(netload, c_buy, c_sell, horizon, model=model, quantiles=quantiles,
                          seed=(seed, scenario_seed), cache=cache)
    spec = battery_from_config(cfg.get("battery", {}))
    init = cfg.get("initial_soe_kwh")
    hours = cfg.get("sim_hours")
    scenario = Scenario(
        str(cfg.get("name", path.name)), frames, spec, float(cfg.get("dt_hours", 1.0)),
        None if init is None else float(init), None if hours is None else int(hours),
    )
    return Bundle(path, cfg, ts, scenario, solver_from_config(cfg.get("solver", {}), seed))


def find_bundles(paths: Sequence[Path]) -> list[Path]:
    """Scenario directories, expanding corpus directories one level deep."""
    out = []
    for p in map(Path, paths):
        if (p / SCENARIO_FILE).is_file():
            out.append(p)
        elif p.is_dir():
            subs = sorted(q for q in p.iterdir() if (q / SCENARIO_FILE).is_file())
            if not subs:
                raise DataError(f"{p}: no {SCENARIO_FILE} here or in subdirectories")
            out.extend(subs)
        else:
            raise DataError(f"{p}: not a scenario directory")
    return out

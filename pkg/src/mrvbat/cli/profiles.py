"""Synthetic household net-load, wholesale price and forecast settings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..forecast import SyntheticForecastModel


@dataclass(frozen=True)
class Profile:
    start: str
    pv_kwp: float
    sunrise: float
    sunset: float
    load_scale: float
    solar_price_dip: float
    forecast: SyntheticForecastModel


PROFILES = {
    "no-pv": Profile("2024-01-08T00:00:00", 0.0, 8.0, 16.5, 1.2, 0.0,
                     SyntheticForecastModel(0.0, 0.25, 0.01, 0.15, 0.8)),
    "winter-pv": Profile("2024-02-05T00:00:00", 5.0, 7.5, 17.5, 1.1, 0.02,
                         SyntheticForecastModel(0.0, 0.3, 0.015, 0.2, -1.0)),
    "spring-pv": Profile("2024-04-08T00:00:00", 7.0, 6.5, 20.0, 1.0, 0.06,
                         SyntheticForecastModel(0.0, 0.35, 0.02, 0.25, -1.5)),
    "summer-pv": Profile("2024-06-10T00:00:00", 8.0, 5.5, 21.5, 0.9, 0.09,
                         SyntheticForecastModel(0.0, 0.35, 0.02, 0.25, -1.5)),
}


def _load_shape(hours: np.ndarray) -> np.ndarray:
    h = hours % 24
    morning = 0.9 * np.exp(-0.5 * ((h - 7.5) / 1.2) ** 2)
    noon = 0.35 * np.exp(-0.5 * ((h - 12.5) / 1.5) ** 2)
    evening = 1.6 * np.exp(-0.5 * ((h - 19.0) / 1.8) ** 2)
    return 0.3 + morning + noon + evening


def _clear_sky(hours: np.ndarray, sunrise: float, sunset: float) -> np.ndarray:
    h = hours % 24 + 0.5
    x = (h - sunrise) / (sunset - sunrise)
    return np.where((x > 0) & (x < 1), np.sin(np.pi * np.clip(x, 0, 1)) ** 1.5, 0.0)


def generate(profile: str, days: int, seed: int) -> dict[str, np.ndarray]:
    """Hourly ``netload`` (kW, PV negative), ``pv`` and ``wholesale`` (EUR/kWh) series."""
    if days < 1:
        raise ValueError("days must be at least 1")
    pr = PROFILES[profile]
    rng = np.random.default_rng([seed, days])
    n = 24 * days
    hours = np.arange(n)
    day_level = np.repeat(rng.lognormal(0.0, 0.15, days), 24)
    ar = np.zeros(n)
    eps = rng.normal(0.0, 0.25, n)
    for k in range(1, n):
        ar[k] = 0.6 * ar[k - 1] + eps[k]
    spikes = rng.exponential(1.0, n) * (rng.random(n) < 0.06)
    load = np.maximum(pr.load_scale * day_level * _load_shape(hours) * np.exp(0.5 * ar) + spikes, 0.05)
    cloud = np.repeat(rng.beta(3.0, 1.5, days), 24)
    flicker = np.clip(1.0 - 0.35 * rng.random(n) * (rng.random(n) < 0.3), 0.0, 1.0)
    pv = 0.78 * pr.pv_kwp * _clear_sky(hours, pr.sunrise, pr.sunset) * cloud * flicker
    netload = load - pv

    h = hours % 24
    price_shape = 0.02 * np.exp(-0.5 * ((h - 8) / 1.5) ** 2) + 0.05 * np.exp(-0.5 * ((h - 19) / 2.0) ** 2)
    dip = pr.solar_price_dip * _clear_sky(hours, pr.sunrise, pr.sunset) * cloud
    pe = np.zeros(n)
    pn = rng.normal(0.0, 0.012, n)
    for k in range(1, n):
        pe[k] = 0.8 * pe[k - 1] + pn[k]
    wholesale = 0.09 + np.repeat(rng.normal(0.0, 0.015, days), 24) + price_shape - dip + pe
    return {"netload": netload, "pv": pv, "wholesale": wholesale}

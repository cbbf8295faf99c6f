import math

import numpy as np
import pytest

from mrvbat import gmix, mixedrv
from mrvbat.gmix import GaussianMixture2
from mrvbat.mixedrv import DispatchPolicy

from conftest import mc_moments, random_mixture, random_policy

INF = math.inf
STD = GaussianMixture2.normal(0.0, 1.0)


def closed_form(f, pol):
    bp = mixedrv.boundary_probabilities(f, pol)
    split = mixedrv.expected_grid_split(f, pol)
    return {"p1": bp.p1, "p2": bp.p2, "e_pb": mixedrv.expected_battery_power(f, pol),
            "exp_sell": split.exp_sell, "exp_buy": split.exp_buy}


def assert_matches_mc(f, pol, keys, seed=3):
    ref = mc_moments(f, pol.pb_lo, pol.pb_hi, pol.pg_des, 10_000_000, seed)
    got = closed_form(f, pol)
    for k in keys:
        mean, se = ref[k]
        assert abs(got[k] - mean) <= 3 * se + 1e-12, (k, got[k], mean, se)


class TestPolicy:
    def test_from_setpoint(self):
        p = DispatchPolicy.from_setpoint(-1, 1, -0.3)
        assert (p.pg_des_sell, p.pg_des_buy) == (-0.3, 0.0)

    def test_inverted_interval(self):
        with pytest.raises(ValueError):
            DispatchPolicy.from_setpoint(1.0, -1.0, 0.0)

    def test_split_mismatch(self):
        with pytest.raises(ValueError):
            DispatchPolicy(-1, 1, 0.5, 0.0, 0.4)

    def test_complementarity(self):
        with pytest.raises(ValueError):
            DispatchPolicy.from_split(-1, 1, -0.5, 0.5)
        DispatchPolicy.from_split(-1, 1, -1e-5, 1e-4)


class TestBoundaryProbabilities:
    def test_median(self):
        bp = mixedrv.boundary_probabilities(STD, DispatchPolicy.from_setpoint(0, 0, 0))
        assert (bp.p1, bp.p2) == (0.5, 0.5)

    def test_wide(self):
        bp = mixedrv.boundary_probabilities(STD, DispatchPolicy.from_setpoint(-40, 40, 0))
        assert bp.p1 == pytest.approx(0.0, abs=1e-300) and bp.p2 == pytest.approx(0.0, abs=1e-15)

    def test_monte_carlo(self):
        f = GaussianMixture2.from_params(0.5, -1, 0.5, 2, 1.0)
        assert_matches_mc(f, DispatchPolicy.from_setpoint(-1, 1.5, 0.3), ["p1", "p2"])


class TestExpectedBatteryPower:
    def test_unclipped(self):
        assert mixedrv.expected_battery_power(STD, DispatchPolicy.from_setpoint(-40, 40, 0)) == pytest.approx(0.0, abs=1e-12)

    def test_degenerate(self):
        assert mixedrv.expected_battery_power(STD, DispatchPolicy.from_setpoint(0.7, 0.7, 0.2)) == 0.7

    def test_monte_carlo(self):
        f = GaussianMixture2.from_params(0.6, 0.8, 0.4, 2.1, 0.9)
        assert_matches_mc(f, DispatchPolicy.from_setpoint(-0.5, 1.2, 0.6), ["e_pb"])


class TestExpectedGridSplit:
    def test_no_export_mass(self):
        f = GaussianMixture2.normal(5.0, 0.1)
        s = mixedrv.expected_grid_split(f, DispatchPolicy.from_setpoint(-40, 40, 5))
        assert s.exp_sell == pytest.approx(0.0, abs=1e-12) and s.exp_buy == pytest.approx(5.0, abs=1e-12)

    def test_full_compensation(self):
        s = mixedrv.expected_grid_split(STD, DispatchPolicy.from_setpoint(-40, 40, 0))
        assert s.exp_sell == pytest.approx(0.0, abs=1e-12) and s.exp_buy == pytest.approx(0.0, abs=1e-12)

    def test_monte_carlo(self):
        f = GaussianMixture2.from_params(0.5, -1.5, 0.6, 1.0, 0.8)
        assert_matches_mc(f, DispatchPolicy.from_setpoint(-1, 1, -0.2), ["exp_sell", "exp_buy"])

    def test_signs(self, rng):
        for _ in range(200):
            s = mixedrv.expected_grid_split(random_mixture(rng), DispatchPolicy.from_setpoint(*random_policy(rng)))
            assert s.exp_sell <= 1e-9 and s.exp_buy >= -1e-9


class TestRealize:
    @pytest.mark.parametrize("p_l, p_b, p_g", [(3, 2, 1), (5, 2, 3), (-4, -2, -2)])
    def test_cases(self, p_l, p_b, p_g):
        assert mixedrv.realize(DispatchPolicy.from_setpoint(-2, 2, 1), p_l) == (p_b, p_g)

    def test_power_balance(self, rng):
        for _ in range(1000):
            pol = DispatchPolicy.from_setpoint(*random_policy(rng))
            p_l = rng.normal(0, 3)
            p_b, p_g = mixedrv.realize(pol, p_l)
            assert p_b + p_g == p_l or abs(p_b + p_g - p_l) <= 1e-15 * max(1.0, abs(p_l))
            assert pol.pb_lo <= p_b <= pol.pb_hi


class TestProperties:
    def test_mass_conservation(self, rng):
        for _ in range(500):
            f = random_mixture(rng)
            pol = DispatchPolicy.from_setpoint(*random_policy(rng))
            bp = mixedrv.boundary_probabilities(f, pol)
            assert bp.p1 + bp.p2 + gmix.mass(f, pol.pb_lo, pol.pb_hi, pol.pg_des) == pytest.approx(1.0, abs=1e-10)

    def test_linearity(self, rng):
        for _ in range(500):
            f = random_mixture(rng)
            pol = DispatchPolicy.from_setpoint(*random_policy(rng))
            s = mixedrv.expected_grid_split(f, pol)
            e_pb = mixedrv.expected_battery_power(f, pol)
            assert e_pb + s.total == pytest.approx(gmix.mean(f), abs=1e-9)
            assert s.total == pytest.approx(mixedrv.expected_grid_power(f, pol), abs=1e-9)

    def test_range(self, rng):
        for _ in range(500):
            pol = DispatchPolicy.from_setpoint(*random_policy(rng))
            assert pol.pb_lo <= mixedrv.expected_battery_power(random_mixture(rng), pol) <= pol.pb_hi

    def test_degenerate_collapse(self, rng):
        for _ in range(100):
            f = random_mixture(rng)
            c = float(rng.uniform(-3, 3))
            s = mixedrv.expected_grid_split(f, DispatchPolicy.from_setpoint(c, c, rng.uniform(-2, 2)))
            assert s.exp_sell == pytest.approx(gmix.partial_expectation(f, -INF, 0.0, c), abs=1e-12)
            assert s.exp_buy == pytest.approx(gmix.partial_expectation(f, 0.0, INF, c), abs=1e-12)

    def test_widening_monotone(self, rng):
        for _ in range(300):
            f = random_mixture(rng)
            lo, hi, g = random_policy(rng)
            base = mixedrv.boundary_probabilities(f, DispatchPolicy.from_setpoint(lo, hi, g)).interior
            wider = DispatchPolicy.from_setpoint(lo - rng.uniform(0, 1), hi + rng.uniform(0, 1), g)
            assert mixedrv.boundary_probabilities(f, wider).interior >= base - 1e-15

    def test_zero_setpoint_continuity(self):
        f = GaussianMixture2.from_params(0.5, -1.5, 0.6, 1.0, 0.8)
        at = mixedrv.expected_grid_split(f, DispatchPolicy.from_setpoint(-1, 1, 0.0))
        for eps in (1e-9, -1e-9):
            near = mixedrv.expected_grid_split(f, DispatchPolicy.from_setpoint(-1, 1, eps))
            assert near.exp_sell == pytest.approx(at.exp_sell, abs=1e-8)
            assert near.exp_buy == pytest.approx(at.exp_buy, abs=1e-8)

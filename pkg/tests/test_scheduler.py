import itertools
import math

import numpy as np
import pytest

from mrvbat import mixedrv, scheduler
from mrvbat.auglag import minimize_auglag
from mrvbat.battery import BatterySpec, BatteryState, feasible_interval, soe_delta
from mrvbat.gmix import GaussianMixture2
from mrvbat.mixedrv import DispatchPolicy
from mrvbat.scheduler import HorizonProblem, HourFrame, SolverOptions

from conftest import random_mixture

TABLE = BatterySpec()
TINY = 1e-7


def problem(mixtures, c_buy, c_sell, soe=None, spec=TABLE, dt=1.0):
    frames = tuple(HourFrame(m, b, s) for m, b, s in zip(mixtures, c_buy, c_sell))
    return HorizonProblem(frames, spec, BatteryState(spec.mid_soe if soe is None else soe), dt)


def point(values):
    return [GaussianMixture2.normal(v, TINY) for v in values]


def random_problem(rng, K):
    mixtures = [random_mixture(rng) for _ in range(K)]
    cb = rng.uniform(0.3, 0.5, K)
    return problem(mixtures, cb, rng.uniform(0.0, 0.1, K), soe=rng.uniform(1.0, 6.5))


def random_interior_policies(rng, K):
    out = []
    for _ in range(K):
        lo, hi = np.sort(rng.uniform(-4.5, 4.5, 2))
        g = rng.uniform(-2, 2)
        out.append(DispatchPolicy.from_setpoint(lo, hi, g if abs(g) > 0.05 else 0.3))
    return out


def assert_feasible(prob, sol, tol=1e-6):
    spec = prob.spec
    soe = sol.expected_soe
    assert len(soe) == prob.K + 1 and soe[0] == pytest.approx(prob.initial_state.soe, abs=tol)
    for k, (pol, fr) in enumerate(zip(sol.policies, prob.frames)):
        assert spec.p_min - tol <= pol.pb_lo <= pol.pb_hi + tol and pol.pb_hi <= spec.p_max + tol
        lo, hi = feasible_interval(spec, BatteryState(soe[k]), prob.dt)
        assert pol.pb_lo >= lo - tol and pol.pb_hi <= hi + tol
        assert spec.e_min - tol <= soe[k + 1] <= spec.e_max + tol
        e_pb = mixedrv.expected_battery_power(fr.forecast, pol)
        assert soe[k + 1] == pytest.approx(soe[k] + soe_delta(spec, e_pb, prob.dt), abs=1e-5)
        assert pol.pg_des_sell * pol.pg_des_buy >= -1e-8


class TestObjective:
    def test_export_only(self):
        f = GaussianMixture2.normal(-3.0, 0.2)
        prob = problem([f], [0.4], [0.08])
        pol = DispatchPolicy.from_setpoint(0.0, 0.0, -3.0)
        assert scheduler.objective(prob, [pol]) == pytest.approx(0.08 * -3.0, abs=1e-9)

    @pytest.mark.parametrize("p_l", [2.5, -1.5])
    def test_pass_through(self, p_l):
        prob = problem(point([p_l]), [0.4], [0.08], dt=0.5)
        cost = scheduler.objective(prob, [DispatchPolicy.from_setpoint(0.0, 0.0, p_l)])
        assert cost == pytest.approx(0.5 * (0.4 * max(p_l, 0) + 0.08 * min(p_l, 0)), abs=1e-9)

    def test_monte_carlo(self):
        rng = np.random.default_rng(11)
        prob = random_problem(rng, 3)
        pols = random_interior_policies(rng, 3)
        n = 1_000_000
        total = np.zeros(n)
        for fr, pol in zip(prob.frames, pols):
            z = fr.forecast.sample(rng, n)
            p_g = z - np.clip(z - pol.pg_des, pol.pb_lo, pol.pb_hi)
            total += np.where(p_g > 0, fr.c_buy * p_g, fr.c_sell * p_g)
        se = total.std() / math.sqrt(n)
        assert abs(scheduler.objective(prob, pols) - total.mean()) < 3 * se

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            scheduler.objective(problem(point([1, 2]), [0.4] * 2, [0.08] * 2), [DispatchPolicy.from_setpoint(0, 0, 0)])


class TestGradient:
    @staticmethod
    def _cost(prob, x4):
        vals, _ = scheduler.expected_terms(prob, x4)
        cb = np.array([f.c_buy for f in prob.frames])
        cs = np.array([f.c_sell for f in prob.frames])
        return prob.dt * float(cb @ vals[2] + cs @ vals[1])

    def test_finite_differences(self):
        rng = np.random.default_rng(21)
        for _ in range(50):
            prob = random_problem(rng, 3)
            pols = random_interior_policies(rng, 3)
            x = scheduler.policy_vector(pols)
            assert self._cost(prob, x) == pytest.approx(scheduler.objective(prob, pols), abs=1e-14)
            g = scheduler.gradient(prob, pols)
            for i in range(x.size):
                h = 1e-5 * max(1.0, abs(x[i]))
                xp, xm = x.copy(), x.copy()
                xp[i] += h
                xm[i] -= h
                fd = (self._cost(prob, xp) - self._cost(prob, xm)) / (2 * h)
                assert abs(fd - g[i]) <= 1e-4 * max(abs(g[i]), 1e-3), (i, fd, g[i])

    def test_discrete_mass_only(self):
        prob = problem(point([2.0]), [0.4], [0.08])
        pol = DispatchPolicy.from_setpoint(-1.0, 1.0, 1.5)
        _, d = scheduler.expected_terms(prob, scheduler.policy_vector([pol]))
        assert d[2, 3, 0] == pytest.approx(1.0, abs=1e-9)

    def test_leibniz_sensitivities(self):
        rng = np.random.default_rng(22)
        for _ in range(50):
            f = random_mixture(rng)
            lo, hi = np.sort(rng.uniform(-3, 3, 2))
            g = rng.uniform(0.1, 2) * rng.choice([-1, 1])
            pol = DispatchPolicy.from_setpoint(lo, hi, g)
            bp = mixedrv.boundary_probabilities(f, pol)
            h = 1e-6

            def e(lo_, hi_, g_):
                return mixedrv.expected_battery_power(f, DispatchPolicy.from_setpoint(lo_, hi_, g_))

            d_hi = (e(lo, hi + h, g) - e(lo, hi - h, g)) / (2 * h)
            d_g = (e(lo, hi, g + h) - e(lo, hi, g - h)) / (2 * h)
            assert d_hi == pytest.approx(bp.p2, abs=1e-6)
            assert d_g == pytest.approx(-(1 - bp.p1 - bp.p2), abs=1e-6)
            _, d = scheduler.expected_terms(problem([f], [0.4], [0.08]), scheduler.policy_vector([pol]))
            assert d[0, 1, 0] == pytest.approx(bp.p2, abs=1e-12)
            assert d[0, 3 if g > 0 else 2, 0] == pytest.approx(-(1 - bp.p1 - bp.p2), abs=1e-12)


class TestSolve:
    def test_forced_import(self):
        prob = problem(point([2.0]), [0.4], [0.08], soe=0.0)
        sol = scheduler.solve(prob)
        assert sol.expected_cost == pytest.approx(0.8, abs=1e-6)
        assert sol.policies[0].pg_des == pytest.approx(2.0, abs=1e-4)
        assert_feasible(prob, sol)

    def test_two_hour_grid_search(self):
        spec = BatterySpec(e_max=10.0)
        p_l, cb, cs = np.array([-3.0, 3.0]), 0.4, 0.08
        prob = problem(point(p_l), [cb] * 2, [cs] * 2, soe=0.0, spec=spec)
        sol = scheduler.solve(prob)
        best = math.inf
        grid = np.round(np.arange(spec.p_min, spec.p_max + 1e-9, 0.01), 10)
        for p1 in grid:
            e1 = soe_delta(spec, p1, 1.0)
            if not 0.0 <= e1 <= 10.0:
                continue
            for q in grid:
                if not 0.0 <= e1 + soe_delta(spec, q, 1.0) <= 10.0:
                    continue
                g = p_l - np.array([p1, q])
                best = min(best, float(np.sum(np.where(g > 0, cb * g, cs * g))))
        assert sol.expected_cost == pytest.approx(best, abs=1e-3)
        assert sol.expected_cost == pytest.approx(3 * (1 - 0.98 * 0.98) * cb, abs=1e-4)
        assert sol.policies[0].pg_des == pytest.approx(0.0, abs=1e-3)
        assert_feasible(prob, sol)

    def test_interval_beats_fixed_battery(self):
        prob = problem([GaussianMixture2.normal(0.0, 1.0)], [0.4], [0.08])
        sol = scheduler.solve(prob)
        g = sol.policies[0].pg_des
        assert sol.expected_cost <= scheduler.objective(prob, [DispatchPolicy.from_setpoint(0.0, 0.0, g)]) + 1e-12
        fb = scheduler.solve_fixed_battery(prob)
        assert sol.expected_cost <= fb.expected_cost + 1e-9
        assert_feasible(prob, sol)

    def test_feasible_on_random_problems(self):
        rng = np.random.default_rng(31)
        for _ in range(5):
            prob = random_problem(rng, 8)
            sol = scheduler.solve(prob)
            assert sol.solver_status in ("converged", "max_iterations")
            assert sol.expected_cost == pytest.approx(scheduler.objective(prob, sol.policies), abs=1e-9)
            assert_feasible(prob, sol)

    def test_collapse_to_linear_program(self):
        rng = np.random.default_rng(41)
        for _ in range(3):
            K = 6
            p_l = rng.uniform(-4, 4, K)
            cb, cs = rng.uniform(0.3, 0.5, K), rng.uniform(0.0, 0.1, K)
            prob = problem(point(p_l), cb, cs, soe=rng.uniform(0, 7.68))
            lp = scheduler.solve_deterministic(p_l, cb, cs, TABLE, prob.initial_state)
            assert scheduler.solve(prob).expected_cost == pytest.approx(lp.cost, abs=1e-4)

    def test_more_starts_never_worse(self):
        prob = random_problem(np.random.default_rng(51), 6)
        costs = [scheduler.solve(prob, SolverOptions(n_starts=n)).expected_cost for n in (1, 2, 3, 5)]
        assert all(b <= a + 1e-12 for a, b in zip(costs, costs[1:]))

    def test_start_costs_include_winner(self):
        sol = scheduler.solve(random_problem(np.random.default_rng(52), 4))
        assert sol.expected_cost == pytest.approx(min(sol.start_costs), abs=1e-12)

    def test_infeasible_initial_state(self):
        prob = problem(point([1.0]), [0.4], [0.08], soe=-1.0)
        sol = scheduler.solve(prob)
        assert sol.solver_status == "infeasible" and sol.policies == []

    def test_terminal_soe(self):
        frames = tuple(HourFrame(m, 0.4, 0.08) for m in point([2.0, 2.0]))
        prob = HorizonProblem(frames, TABLE, BatteryState(4.0), 1.0, terminal_soe_min=4.0)
        sol = scheduler.solve(prob)
        assert sol.expected_soe[-1] >= 4.0 - 1e-6
        assert sol.expected_cost == pytest.approx(0.4 * 4.0, abs=1e-4)

    def test_deterministic_runs_repeat(self):
        prob = random_problem(np.random.default_rng(53), 5)
        a, b = scheduler.solve(prob), scheduler.solve(prob)
        assert np.array_equal(a.raw, b.raw)


class TestMerit:
    def test_nonincreasing_across_accepted_iterations(self):
        prob = random_problem(np.random.default_rng(61), 6)
        nlp = scheduler._FixedGridNLP(prob)
        x0, _ = nlp.assemble(np.full(6, TABLE.p_min), np.full(6, TABLE.p_max), np.zeros(6))
        res = nlp.minimize(x0, scheduler._al_options(SolverOptions()), record_merit=True)
        assert res.merit_trace and sum(t.size for t in res.merit_trace) > 1
        for t in res.merit_trace:
            assert np.all(np.diff(t) <= 1e-12 * np.maximum(1.0, np.abs(t[:-1])))


class TestHorizonProblem:
    def test_negative_export_price(self):
        with pytest.raises(ValueError):
            problem(point([1.0]), [0.4], [-0.01])

    def test_nonfinite_price(self):
        with pytest.raises(ValueError):
            problem(point([1.0]), [math.nan], [0.08])

    def test_empty(self):
        with pytest.raises(ValueError):
            HorizonProblem((), TABLE, BatteryState(1.0))


class TestFixedBattery:
    def test_hedges_against_imports(self):
        K = 4
        prob = problem([GaussianMixture2.normal(0.0, 1.0)] * K, [0.4] * K, [0.08] * K)
        sol = scheduler.solve_fixed_battery(prob)
        assert sol.expected_cost <= scheduler.fixed_battery_objective(prob, [0.0] * K) + 1e-12
        assert sol.setpoints[0] > 0.0

    def test_zero_variance_matches_linear_program(self):
        p_l = np.array([-2.0, 1.0, 3.0, -1.0])
        cb, cs = np.array([0.3, 0.5, 0.45, 0.35]), np.full(4, 0.05)
        prob = problem(point(p_l), cb, cs, soe=2.0)
        lp = scheduler.solve_deterministic(p_l, cb, cs, TABLE, prob.initial_state)
        sol = scheduler.solve_fixed_battery(prob)
        assert sol.expected_cost == pytest.approx(lp.cost, abs=1e-4)

    def test_setpoints_feasible(self):
        prob = random_problem(np.random.default_rng(71), 6)
        sol = scheduler.solve_fixed_battery(prob)
        e = prob.initial_state.soe
        for pb in sol.setpoints:
            lo, hi = feasible_interval(TABLE, BatteryState(e), 1.0)
            assert lo - 1e-12 <= pb <= hi + 1e-12
            e += soe_delta(TABLE, pb, 1.0)


class TestDeterministicLP:
    def test_brute_force(self):
        spec = BatterySpec(e_max=3.0, p_min=-2.0, p_max=2.0)
        p_l, cb, cs = np.array([-1.5, 0.8, 2.0]), np.array([0.2, 0.5, 0.6]), np.array([0.05, 0.1, 0.02])
        plan = scheduler.solve_deterministic(p_l, cb, cs, spec, BatteryState(1.0))
        grid = np.round(np.arange(-2.0, 2.0 + 1e-9, 0.02), 10)
        best = math.inf
        for p in itertools.product(grid, repeat=2):
            e = 1.0
            ok = True
            pb = list(p)
            for v in pb:
                e += soe_delta(spec, v, 1.0)
                ok &= -1e-12 <= e <= 3.0 + 1e-12
            if not ok:
                continue
            lo, hi = feasible_interval(spec, BatteryState(min(max(e, 0.0), 3.0)), 1.0)
            pb.append(min(max(p_l[2], lo), hi))
            g = p_l - np.array(pb)
            best = min(best, float(np.sum(np.where(g > 0, cb * g, cs * g))))
        assert plan.cost == pytest.approx(best, abs=2e-3)
        assert plan.cost <= best + 1e-9

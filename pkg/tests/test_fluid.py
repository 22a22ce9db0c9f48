import math
from fractions import Fraction

import numpy as np
import pytest

from modsim.fluid import (FluidSolution, average_regret, solve_w_fluid, threshold_chain_loss,
                          threshold_lower_bound, threshold_stationary)
from modsim.harness import disjoint_capacity_env
from tests.helpers import one_type_env, random_env
from tests.oracles import fluid_lp


def test_one_type_instance_per_period():
    env = one_type_env(T=2100, lifetime=100)
    sol = solve_w_fluid(env, 1)
    assert np.allclose(sol.admission, 0.5)
    assert abs(sol.objective - 0.5 * 0.5 * 100 * 2100) <= 1e-9 * sol.objective
    assert average_regret(0.5 * 100 * 2100, sol) == pytest.approx(25.0)


def test_disjoint_capacity_instance():
    env = disjoint_capacity_env(T=1100, lifetime=100, mu=1.0)
    assert solve_w_fluid(env, env.horizon).objective == 0.0
    assert solve_w_fluid(env, 1).objective == 0.5 * 100 * (1100 - 100) / 2


def test_bad_window():
    with pytest.raises(ValueError):
        solve_w_fluid(one_type_env(T=10), 0)


def test_matches_lp_over_all_partitions():
    rng = np.random.default_rng(99)
    uniform_worse = 0
    for _ in range(200):
        env = random_env(rng, K=int(rng.integers(1, 4)), T=int(rng.integers(1, 7)))
        w = int(rng.integers(1, 4))
        ref = fluid_lp(env, w)
        sol = solve_w_fluid(env, w)
        assert sol.objective == pytest.approx(ref, abs=1e-6)
        uni = solve_w_fluid(env, w, partition="uniform").objective
        assert uni >= ref - 1e-9
        uniform_worse += uni > ref + 1e-6
    # fixed-width windows are not always optimal
    assert uniform_worse > 0


def test_uniform_windows_counterexample():
    # one arrival in period 2, one reviewer in period 3: the windows {1,2},{3} keep them
    # apart while {1},{2,3} bring them together
    from modsim.model import EnvConfig, Schedule, TwoPoint, TypeParams
    env = EnvConfig(3, [Schedule([(1, 0.0), (2, 1.0), (3, 0.0)])], Schedule([(1, 0), (3, 1)]),
                    [TypeParams(0, 10, 1.0, TwoPoint(1, -1, 0.5))])
    opt = solve_w_fluid(env, 2)
    assert opt.objective == 0.0
    assert opt.windows == [1, 2]
    assert solve_w_fluid(env, 2, partition="uniform").objective == pytest.approx(5.0)
    assert fluid_lp(env, 2) == pytest.approx(0.0, abs=1e-9)


def test_monotone_in_window(rng):
    for _ in range(40):
        env = random_env(rng, max_T=40)
        T = env.horizon
        vals = [solve_w_fluid(env, w).objective for w in sorted({1, 2, 5, T})]
        assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))


def test_solution_is_feasible_and_consistent(rng):
    for _ in range(40):
        env = random_env(rng, max_T=40)
        for w in (1, 3, env.horizon):
            sol = solve_w_fluid(env, w)
            assert sol.check(env) == []
            assert sol.windows[0] == 1


def test_check_reports_problems():
    env = one_type_env(T=10)
    sol = solve_w_fluid(env, 1)
    sol.admission[3, 0] = 0.9
    problems = sol.check(env)
    assert any("capacity" in p for p in problems)
    assert any("objective" in p for p in problems)


def test_moving_slots_never_helps(rng):
    for _ in range(100):
        env = random_env(rng, max_T=20)
        T = env.horizon
        sol = solve_w_fluid(env, T)
        v = np.array([m.r for m in env.moments()]) * env.lifetimes
        mu = env.service_rates
        Lam = env.lam().sum(axis=0)
        a = sol.admission.sum(axis=0)
        slots = a / mu
        C = env.cap().sum()
        eps = 1e-3
        for i in range(env.K):
            for j in range(env.K):
                if i == j or slots[i] < eps:
                    continue
                gain_j = min(mu[j] * eps, Lam[j] - a[j])
                assert v[j] * gain_j - v[i] * mu[i] * eps <= 1e-12
        if slots.sum() < C - 1e-9:
            # leftover capacity only when every valuable type is fully admitted
            assert np.all((a >= Lam - 1e-9) | (v * mu <= 0))


def test_json_round_trip(rng):
    env = random_env(rng, max_T=30)
    sol = solve_w_fluid(env, 2)
    back = FluidSolution.from_dict(sol.to_dict(), env)
    assert np.allclose(back.admission, sol.admission)
    assert np.allclose(back.service, sol.service)
    assert back.objective == pytest.approx(sol.objective)
    assert back.windows == sol.windows


def test_regret_is_antitone_in_benchmark():
    assert average_regret(50.0, 50.0, 10) == 0.0
    assert average_regret(50.0, 20.0, 10) > average_regret(50.0, 30.0, 10)


def test_stationary_threshold_values():
    assert threshold_stationary(40, 0) == Fraction(20)
    assert threshold_stationary(42, 1) == Fraction(7)
    # Θ = 3: ℓ/14 + (0 + 1 + 2)/7
    assert threshold_stationary(14, 3) == Fraction(1) + Fraction(3, 7)


@pytest.mark.parametrize("ell", [25, 100, 400])
def test_threshold_lower_bound(ell):
    th, v = threshold_lower_bound(ell)
    assert v >= math.sqrt(ell) / 6
    assert threshold_stationary(ell, th) == v


def test_chain_matches_stationary_loss():
    ell, th = 25, 5
    sim = threshold_chain_loss(ell, th, 300_000, seed=1)
    assert sim == pytest.approx(float(threshold_stationary(ell, th)), rel=0.03)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from modsim.model import EnvConfig, TwoPoint, TypeParams
from modsim.policies import (Colbacid, ConfigurationError, GroupPartition, OLBacid, RidgeState,
                             b_delta, contextual_conf, make_partition)
from modsim.policies.contextual import RESOLVE_EVERY
from modsim.sim import SimState, run
from tests.helpers import one_type_env, random_env
from tests.oracles import ellipse_h_range, ellipse_max_min


def test_ridge_hand_solved_scalar():
    rs = RidgeState(1, 1.0)
    rs.update([1.0], 2.0).update([1.0], -1.0)
    assert rs.V[0, 0] == 3.0
    assert rs.b_pos[0] == 2.0 and rs.b_neg[0] == -1.0
    assert rs.theta_O[0] == pytest.approx(2 / 3)
    assert rs.theta_neg[0] == pytest.approx(-1 / 3)
    assert rs.theta_R[0] == pytest.approx(1 / 3)
    assert rs.theta_h[0] == pytest.approx(1 / 3)


def test_ridge_starts_at_zero():
    rs = RidgeState(4, 2.0)
    assert not rs.theta_O.any() and not rs.theta_R.any()


def test_one_hot_ridge_is_shrunk_mean(rng):
    K = 4
    rs = RidgeState(K, 1.0)
    costs = {k: [] for k in range(K)}
    for _ in range(200):
        k = int(rng.integers(K))
        c = float(rng.normal(0.2 * k - 0.3, 1.0))
        costs[k].append(c)
        rs.update(np.eye(K)[k], c)
    for k in range(K):
        c = np.array(costs[k])
        assert rs.theta_O[k] == pytest.approx(np.maximum(c, 0).sum() / (len(c) + 1), abs=1e-12)
        assert rs.theta_R[k] == pytest.approx(-np.minimum(c, 0).sum() / (len(c) + 1), abs=1e-12)


def test_maintained_inverse_matches_fresh_solve(rng):
    rs = RidgeState(3, 1.0)
    for i in range(3 * RESOLVE_EVERY + 100):
        phi = rng.normal(size=3)
        phi /= max(1.0, np.linalg.norm(phi))
        rs.update(phi, float(rng.normal()))
        if i % 500 == 0 or i == 3 * RESOLVE_EVERY + 99:
            thO, thR = rs.solve_fresh()
            assert np.allclose(rs.theta_O, thO, atol=1e-9, rtol=0)
            assert np.allclose(rs.theta_R, thR, atol=1e-9, rtol=0)
    assert np.allclose(rs.V, rs.V.T)
    assert np.linalg.eigvalsh(rs.V).min() >= 1.0 - 1e-9


def test_ridge_rejects_non_finite():
    rs = RidgeState(2)
    with pytest.raises(ValueError):
        rs.update([np.nan, 0.0], 1.0)
    with pytest.raises(ValueError):
        rs.update([1.0, 0.0], math.inf)


def test_radius_values():
    for d in (1, 3, 7):
        assert b_delta(0, d, 1, 1, 1, 1.0) == 1.0
    assert b_delta(0, 2, 1, 1, 1, 0.1) == pytest.approx(1 + math.sqrt(4 * math.log(10)))
    assert b_delta(0, 2, 1, 1, 1, 0.1) == pytest.approx(4.0349, abs=1e-4)
    with pytest.raises(ValueError):
        b_delta(0, 2, 1, 1, 1, 0.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 5), st.floats(1e-4, 0.9))
def test_radius_monotone(t, d, delta):
    assert b_delta(t + 1, d, 1, 1, 1, delta) >= b_delta(t, d, 1, 1, 1, delta)
    assert b_delta(t, d, 1, 1, 1, delta / 2) >= b_delta(t, d, 1, 1, 1, delta)


def test_zero_feature_bounds():
    rs = RidgeState(2).update([0.5, 0.5], 1.0)
    b = contextual_conf(rs, [0.0, 0.0], 3.0, 1.0)
    assert (b.h_lo, b.h_hi, b.r_bar) == (0.0, 0.0, 0.0)


def test_hand_evaluated_contextual_bounds():
    rs = RidgeState(1, 4.0)
    rs.b_pos[:] = 2.4
    rs.b_neg[:] = -0.8
    b = contextual_conf(rs, [1.0], 1.0, 1.0)
    assert b.h_lo == pytest.approx(-0.6)
    assert b.h_hi == 1.0
    assert b.r_bar == pytest.approx(0.7)
    with pytest.raises(ValueError):
        contextual_conf(rs, [1.0], -0.1, 1.0)


def test_closed_form_against_grid_search():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        A = rng.normal(size=(2, 2))
        V = np.eye(2) + A @ A.T * rng.uniform(0, 5)
        rs = RidgeState(2, 1.0)
        rs.V = V
        rs.V_inv = np.linalg.inv(V)
        thO, thR = rng.uniform(-0.5, 1.0, 2), rng.uniform(-0.5, 1.0, 2)
        rs.b_pos = V @ thO
        rs.b_neg = -(V @ thR)
        phi = rng.normal(size=2)
        B = rng.uniform(0.05, 1.5)
        big = 1e6
        b = contextual_conf(rs, phi, B, big)
        ref = ellipse_max_min(thO, thR, rs.V_inv, phi, B)
        assert b.r_bar == pytest.approx(min(big, max(0.0, ref)), abs=1e-3)
        lo, hi = ellipse_h_range(thO, thR, rs.V_inv, phi, B)
        assert b.h_lo == pytest.approx(lo, abs=1e-3)
        assert b.h_hi == pytest.approx(hi, abs=1e-3)


def test_elliptical_potential(rng):
    for d in (1, 2, 5):
        rs = RidgeState(d, 1.0)
        total = 0.0
        n = 2000
        for _ in range(n):
            phi = rng.normal(size=d)
            phi /= max(1.0, np.linalg.norm(phi))
            total += float(phi @ rs.V_inv @ phi)
            rs.update(phi, 0.0)
        assert total <= 2 * d * math.log(1 + n / d)


def test_partition_examples():
    p = make_partition([0.4, 0.4, 0.4], 0.3, 1.0)
    assert p.G == 1 and p.gap == 0.0
    p = make_partition([0.3, 0.4, 0.9], 0.5, 1.0)
    assert p.groups == (0, 0, 1)
    assert p.gap == pytest.approx(0.1)
    assert p.proxy_rates == (0.3, 0.9)
    p = make_partition([0.05, 0.2, 0.1], 1.0, 4.0)
    assert p.G == 1 and p.gap == pytest.approx(4 * 0.15)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.001, 1.0), min_size=1, max_size=8), st.floats(0.05, 1.0))
def test_partition_invariants(mus, zeta):
    p = make_partition(mus, zeta, 1.0)
    assert len(p.groups) == len(mus)
    assert set(p.groups) == set(range(p.G))
    for mu, g in zip(mus, p.groups):
        assert p.proxy_rates[g] <= mu
    assert 0 <= p.gap <= zeta + 1e-9


def _colbacid_env(mus=(0.5, 0.1)):
    return EnvConfig(100, [0.3, 0.3], 1, [TypeParams(k, 10, mus[k], TwoPoint(1, -1, 0.5))
                                          for k in range(2)])


def test_group_maxweight_uses_proxy_rates():
    env = _colbacid_env()
    p = Colbacid(groups=[0, 1])
    p.reset(env, np.random.default_rng(0))
    s = SimState(env, p.lane_of)
    for g, n in enumerate((2, 11)):
        for j in range(n):
            s.lanes[g].append(100 * g + j)
        s.lane_len[g] = n
    assert p.schedule(s) == 100


def test_missing_group_is_rejected():
    env = _colbacid_env()
    with pytest.raises(ConfigurationError):
        run(env, Colbacid(groups=[0]), 0)
    with pytest.raises(ConfigurationError):
        run(env, Colbacid(partition=GroupPartition.from_groups([0], [0.5], 1)), 0)


def test_group_queue_bound_and_fcfs(rng):
    for s in range(30):
        env = random_env(rng, d=int(rng.integers(1, 4)))
        p = Colbacid(zeta=float(rng.uniform(0.1, 1.0)))
        tr = run(env, p, s)
        groups = np.array(p.lane_of)
        for g in range(p.partition.G):
            q = tr.queues[:, groups == g].sum(axis=1)
            assert (q <= 2 * p.beta * p.r_max * env.l_max + 1e-12).all()
            ids = np.nonzero(np.isin(tr.post_type, np.nonzero(groups == g)[0])
                             & (tr.post_admitted == 1) & (tr.post_done > 0))[0]
            assert np.all(np.diff(tr.post_done[ids]) >= 0)
        assert tr.ld_queue.max(initial=0) <= 1


def test_single_type_reduces_to_olbacid():
    env = one_type_env(T=1000, lifetime=50)
    a = run(env, Colbacid(), 3)
    b = run(env, OLBacid(), 3)
    assert a.digest() == b.digest()


def _coverage_batch(reps, steps, delta, seed):
    """Fraction of replications whose ellipsoids hold the true parameters at every step."""
    rng = np.random.default_rng(seed)
    d, kappa, U, sigma = 3, 1.0, 1.0, 0.5
    thO = np.array([0.5 * math.sqrt(2), 0.3, -0.2])
    thR = np.array([math.sqrt(2), 0.0, 0.0]) - thO
    V = np.broadcast_to(kappa * np.eye(d), (reps, d, d)).copy()
    bO = np.zeros((reps, d))
    bR = np.zeros((reps, d))
    ok = np.ones(reps, dtype=bool)
    for t in range(1, steps + 1):
        uv = rng.uniform(-0.5, 0.5, size=(reps, 2))
        phi = np.column_stack([np.full(reps, 1 / math.sqrt(2)), uv])
        p = phi @ thO
        pos = rng.random(reps) < p
        V += phi[:, :, None] * phi[:, None, :]
        bO += phi * pos[:, None]
        bR += phi * (~pos)[:, None]
        B = b_delta(t, d, U, kappa, sigma, delta)
        for th, b in ((thO, bO), (thR, bR)):
            e = b - V @ th
            q = np.einsum("ri,ri->r", e, np.linalg.solve(V, e[:, :, None])[:, :, 0])
            ok &= q <= B * B
    return ok.mean()


def test_ellipsoid_coverage_small():
    assert _coverage_batch(200, 200, 0.05, 0) >= 1 - 2 * 0.05

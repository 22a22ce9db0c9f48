import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from modsim.fluid import solve_w_fluid
from modsim.model import EnvConfig, TwoPoint, TypeParams
from modsim.policies import (AIOnly, Bacid, ConfigurationError, Dynamic, HumanOnly, Static,
                             default_beta, make_policy, maxweight)
from modsim.sim import SimState, run
from tests.helpers import one_type_env, random_env


def _env2(mus=(0.5, 0.1), lifetimes=(10, 10), dists=None):
    dists = dists or [TwoPoint(1, -1, 0.5)] * 2
    return EnvConfig(50, [0.3, 0.3], 1, [TypeParams(k, lifetimes[k], mus[k], dists[k])
                                         for k in range(2)])


def _state(env, qlen):
    s = SimState(env, list(range(env.K)))
    pid = 0
    for k, n in enumerate(qlen):
        for _ in range(n):
            s.lanes[k].append(pid)
            pid += 1
        s.lane_len[k] = n
        s.qlen[k] = n
    return s


def test_zero_mean_type_is_kept():
    env = one_type_env()
    p = Bacid()
    p.reset(env, np.random.default_rng(0))
    assert p.admit(_state(env, [0]), 0)[0] == 1


def test_positive_mean_type_is_removed():
    env = one_type_env(p_pos=0.9)
    p = Bacid()
    p.reset(env, np.random.default_rng(0))
    assert p.admit(_state(env, [0]), 0)[0] == 0


def test_threshold_tie_admits():
    env = one_type_env(lifetime=100)   # r = 0.5
    p = Bacid(beta=0.1)                 # β r ℓ = 5
    p.reset(env, np.random.default_rng(0))
    assert p.admit(_state(env, [5]), 0)[1] == 1
    assert p.admit(_state(env, [6]), 0)[1] == 0


def test_maxweight_picks_larger_product():
    env = _env2()
    s = _state(env, [2, 11])
    assert maxweight(s, [0.5, 0.1]) == s.lanes[1][0]
    assert maxweight(_state(env, [0, 0]), [0.5, 0.1]) is None


def test_maxweight_tie_goes_to_lower_index():
    env = _env2()
    s = _state(env, [2, 10])
    assert maxweight(s, [0.5, 0.1]) == s.lanes[0][0]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 30), min_size=3, max_size=3),
       st.lists(st.floats(0.01, 1.0), min_size=3, max_size=3),
       st.sampled_from([0.5, 2.0, 4.0, 0.125]))
def test_maxweight_invariant_to_common_scaling(q, mu, c):
    s = SimpleNamespace(lane_len=q, lanes=[[10 * g] for g in range(3)])
    assert maxweight(s, mu) == maxweight(s, [c * m for m in mu])


def test_ai_only_never_admits_or_schedules():
    tr = run(one_type_env(T=200), AIOnly(), 0)
    assert tr.admit.sum() == 0 and (tr.scheduled < 0).all()


def test_static_admits_one_type():
    env = _env2()
    tr = run(env, Static(1), 2)
    arr = tr.arrival
    assert tr.admit[arr == 1].all()
    assert not tr.admit[arr == 0].any()
    with pytest.raises(ConfigurationError):
        run(env, Static(2), 0)


def test_dynamic_with_full_admission_admits_all():
    env = one_type_env(T=200)
    fl = solve_w_fluid(env, 1)
    fl.admission[:] = env.lam()
    tr = run(env, Dynamic(fl), 0)
    assert tr.admit[tr.arrival >= 0].all()


def test_dynamic_rate_follows_fluid():
    env = one_type_env(T=4000)
    tr = run(env, Dynamic(), 0)
    assert abs(tr.admit.mean() - 0.5) < 0.03


def test_dynamic_rejects_mismatched_fluid():
    fl = solve_w_fluid(one_type_env(T=100), 1)
    with pytest.raises(ConfigurationError):
        run(one_type_env(T=200), Dynamic(fl), 0)


def test_bacid_queue_bound_on_random_envs(rng):
    for s in range(30):
        env = random_env(rng)
        p = Bacid()
        tr = run(env, p, s)
        bound = np.array([p.beta * m.r * tp.lifetime + 1
                          for m, tp in zip(env.moments(), env.types)])
        assert (tr.queues <= bound + 1e-12).all()


def test_default_beta_values():
    assert default_beta(2, 500) == pytest.approx(1 / math.sqrt(1000))
    assert default_beta(2, 500, window=10) == pytest.approx(math.sqrt(10 / 1000))
    env = one_type_env(lifetime=100)
    p = Bacid(window=4)
    p.reset(env, np.random.default_rng(0))
    assert p.beta == pytest.approx(0.2)
    with pytest.raises(ConfigurationError):
        Bacid(beta=-1).reset(env, np.random.default_rng(0))


def test_human_only_queue_grows_at_half_rate():
    env = one_type_env(T=2100)
    tr = run(env, HumanOnly(), 1)
    # arrivals at rate 1, service at rate 1/2
    assert abs(tr.queues[-1, 0] / 2100 - 0.5) < 0.05


def test_registry_errors():
    with pytest.raises(ConfigurationError):
        make_policy("nope")
    with pytest.raises(ConfigurationError):
        make_policy("bacid", gamma=0.1)

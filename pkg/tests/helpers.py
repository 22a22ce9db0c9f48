import numpy as np
from modsim.model import EnvConfig, Normal, Schedule, TwoPoint, TypeParams


def one_type_env(T=2100, lifetime=100, lam=1.0, mu=0.5, N=1, p_pos=0.5, **kw):
    return EnvConfig(T, [lam], N, [TypeParams(0, lifetime, mu, TwoPoint(1, -1, p_pos))], **kw)


def random_env(rng, K=None, T=None, max_T=60, d=None):
    """Small random valid environment with piecewise-constant schedules."""
    K = int(rng.integers(1, 4)) if K is None else K
    T = int(rng.integers(1, max_T)) if T is None else T
    nseg = int(rng.integers(1, 4))
    starts = sorted({1, *rng.integers(1, max(T, 1) + 1, size=nseg - 1).tolist()})
    lam_rows = rng.dirichlet(np.ones(K + 1), size=len(starts))[:, :K]
    caps = rng.integers(0, 4, size=len(starts))
    n_max = max(int(caps.max()), 1)
    types = []
    for k in range(K):
        mu = float(rng.uniform(0.05, 1.0 / n_max))
        if rng.random() < 0.5:
            dist = TwoPoint(1, -1, float(rng.uniform(0, 1)))
        else:
            dist = Normal(float(rng.uniform(-0.5, 0.5)), float(rng.uniform(0.3, 0.8)))
        feat = None
        if d is not None:
            v = rng.normal(size=d)
            feat = tuple((v / max(np.linalg.norm(v), 1.0)).tolist())
        types.append(TypeParams(k, int(rng.integers(1, 30)), mu, dist, feat))
    return EnvConfig(T, [Schedule([(s, float(lam_rows[i, k])) for i, s in enumerate(starts)])
                         for k in range(K)],
                     Schedule([(s, int(caps[i])) for i, s in enumerate(starts)]), types)



"""Learning the mean costs from reviewed posts: sample-average statistics,
their confidence bounds, the optimism-only BACID.UCB and OLBACID (which adds
label-driven admission with forced scheduling)."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .base import Policy, default_beta


@dataclass
class TypeStats:
    n: int = 0
    sum_pos: float = 0.0
    sum_neg: float = 0.0  # Σ (−c⁻) ≥ 0

    def add(self, c: float) -> None:
        self.n += 1
        if c > 0:
            self.sum_pos += c
        else:
            self.sum_neg -= c

    @property
    def rO(self) -> float:
        return self.sum_pos / self.n if self.n else 0.0

    @property
    def rR(self) -> float:
        return self.sum_neg / self.n if self.n else 0.0

    @property
    def h(self) -> float:
        return self.rO - self.rR


@dataclass(frozen=True)
class ConfBounds:
    h_lo: float
    h_hi: float
    r_bar: float


def conf_bounds(stats: TypeStats, t: int, sigma_max: float, r_max: float) -> ConfBounds:
    """Confidence interval for h_k and upper bound for r_k at period t.

    With no data the widths are infinite (a/0 = +∞), giving the clipped
    extremes (−r_max, r_max, r_max). ln t is used as is, so t = 1 gives a
    zero width; n = 0 always holds then.
    """
    n = stats.n
    if n == 0:
        return ConfBounds(-r_max, r_max, r_max)
    lt = math.log(t)
    h = stats.h
    wh = sigma_max * math.sqrt(8.0 * lt / n)
    r_bar = min(r_max, min(stats.rO, stats.rR) + 4.0 * sigma_max * math.sqrt(lt / n))
    return ConfBounds(max(-r_max, h - wh), min(r_max, h + wh), r_bar)


class _Learner(Policy):
    def __init__(self, beta: float | None = None, sigma_max: float | None = None,
                 r_max: float | None = None, known_types=()):
        self._beta = beta
        self._sigma = sigma_max
        self._rmax = r_max
        self.known_types = tuple(known_types)

    def reset(self, env, rng):
        super().reset(env, rng)
        self.sigma_max = env.sigma_max if self._sigma is None else self._sigma
        self.r_max = env.r_max if self._rmax is None else self._rmax
        self.beta = default_beta(env.K, env.l_max) if self._beta is None else self._beta
        self.stats = [TypeStats() for _ in range(env.K)]
        mom = env.moments()
        # types whose distribution is given up front: exact bounds, never updated
        self.known = {k: ConfBounds(mom[k].h, mom[k].h, mom[k].r) for k in self.known_types}

    def bounds(self, k: int, t: int) -> ConfBounds:
        b = self.known.get(k)
        if b is not None:
            return b
        return conf_bounds(self.stats[k], t, self.sigma_max, self.r_max)

    def h_hat(self, k: int) -> float:
        b = self.known.get(k)
        return b.h_lo if b is not None else self.stats[k].h

    def observe(self, k, cost):
        self.stats[k].add(cost)

    def probe(self, state):
        out = {}
        for k in range(self.K):
            b = self.bounds(k, state.t)
            out[k] = {"h_hat": self.h_hat(k), "h_lo": b.h_lo, "h_hi": b.h_hi,
                      "r_bar": b.r_bar, "n": self.stats[k].n}
        return out

    def params(self):
        return {"beta": self._beta, "sigma_max": self._sigma, "r_max": self._rmax,
                "known_types": list(self.known_types)}


class BacidUCB(_Learner):
    """Optimistic admission β·r̄_k·ℓ_k ≥ Q_k(t); no label-driven queue."""

    name = "bacid_ucb"

    def admit(self, state, k):
        b = self.bounds(k, state.t)
        keep = 0 if self.h_hat(k) > 0 else 1
        return keep, int(self.beta * b.r_bar * self.lifetimes[k] >= state.qlen[k]), 0


class OLBacid(_Learner):
    """Optimistic plus label-driven admission; the label queue is served first."""

    name = "olbacid"

    def __init__(self, beta=None, gamma=None, sigma_max=None, r_max=None, known_types=()):
        super().__init__(beta, sigma_max, r_max, known_types)
        self._gamma = gamma

    def reset(self, env, rng):
        super().reset(env, rng)
        self.gamma = default_beta(env.K, env.l_max) if self._gamma is None else self._gamma

    def admit(self, state, k):
        b = self.bounds(k, state.t)
        keep = 0 if self.h_hat(k) > 0 else 1
        g = self.gamma
        if state.ld is None and b.h_lo < -g < g < b.h_hi:
            return keep, 0, 1
        return keep, int(self.beta * b.r_bar * self.lifetimes[k] >= state.qlen[k]), 0

    def schedule(self, state):
        if state.ld is not None:
            return state.ld
        return super().schedule(state)

    def params(self):
        return {**super().params(), "gamma": self._gamma}

"""Policy protocol shared by every admission/scheduling rule."""

from __future__ import annotations

import math

import numpy as np

from ..model import EnvConfig


class Policy:
    """One instance per run. The simulator calls, each period:

    ``admit(state, k)`` on an arrival of type k, returning (keep, A, E);
    ``schedule(state)`` returning a queued post id or None;
    ``observe(k, cost)`` when a review completes (end of period).
    """

    name = "policy"

    def reset(self, env: EnvConfig, rng: np.random.Generator) -> None:
        self.env = env
        self.rng = rng
        self.K = env.K
        self.lane_of = list(range(env.K))
        self.lifetimes = [tp.lifetime for tp in env.types]
        self.mu = [tp.service_rate for tp in env.types]
        self.lane_weight = list(self.mu)

    def admit(self, state, k: int) -> tuple[int, int, int]:
        raise NotImplementedError

    def schedule(self, state):
        return maxweight(state, self.lane_weight)

    def observe(self, k: int, cost: float) -> None:
        pass

    def probe(self, state):
        return None

    def params(self) -> dict:
        return {}


def maxweight(state, weights) -> int | None:
    """Head of the lane maximizing weight × lane length; lowest index wins ties."""
    best, best_v = -1, 0.0
    for g, n in enumerate(state.lane_len):
        if n:
            v = weights[g] * n
            if v > best_v:
                best, best_v = g, v
    if best < 0:
        return None
    return state.lanes[best][0]


def default_beta(n_classes: int, l_max: int, window: int | None = None) -> float:
    if window is None:
        return 1.0 / math.sqrt(n_classes * l_max)
    return math.sqrt(window / (n_classes * l_max))

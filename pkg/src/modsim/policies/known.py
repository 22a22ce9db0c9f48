"""Policies that know every type's cost distribution: BACID and the
congestion-unaware baselines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import Policy, default_beta, maxweight


class ConfigurationError(ValueError):
    pass


@dataclass
class BacidParams:
    beta: float | None = None
    window: int | None = None

    def resolve(self, K: int, l_max: int) -> float:
        if self.beta is not None:
            if self.beta <= 0:
                raise ConfigurationError("beta must be positive")
            return self.beta
        return default_beta(K, l_max, self.window)


class KnownCostPolicy(Policy):
    """Classifies by the sign of the true mean cost (keep iff h_k ≤ 0)."""

    def reset(self, env, rng):
        super().reset(env, rng)
        mom = env.moments()
        self.keep_flag = [1 if m.h <= 0 else 0 for m in mom]
        self.r = [m.r for m in mom]


class Bacid(KnownCostPolicy):
    """Admit iff β·r_k·ℓ_k ≥ Q_k(t); MaxWeight scheduling on μ_k·Q_k."""

    name = "bacid"

    def __init__(self, beta: float | None = None, window: int | None = None):
        self.cfg = BacidParams(beta, window)

    def reset(self, env, rng):
        super().reset(env, rng)
        self.beta = self.cfg.resolve(env.K, env.l_max)
        self.threshold = [self.beta * r * l for r, l in zip(self.r, self.lifetimes)]

    def admit(self, state, k):
        return self.keep_flag[k], int(self.threshold[k] >= state.qlen[k]), 0

    def params(self):
        return {"beta": self.cfg.beta, "window": self.cfg.window}


class AIOnly(KnownCostPolicy):
    name = "ai_only"

    def admit(self, state, k):
        return self.keep_flag[k], 0, 0

    def schedule(self, state):
        return None


class HumanOnly(KnownCostPolicy):
    name = "human_only"

    def admit(self, state, k):
        return self.keep_flag[k], 1, 0


class Static(KnownCostPolicy):
    """Admit every post of one fixed type and nothing else."""

    name = "static"

    def __init__(self, k: int):
        self.k = int(k)

    def reset(self, env, rng):
        super().reset(env, rng)
        if not 0 <= self.k < env.K:
            raise ConfigurationError(f"static type {self.k} out of range")

    def admit(self, state, k):
        return self.keep_flag[k], int(k == self.k), 0

    def params(self):
        return {"k": self.k}


class Dynamic(KnownCostPolicy):
    """Admit a type-k post w.p. a*_k(t)/λ_k(t) from the 1-fluid solution."""

    name = "dynamic"

    def __init__(self, fluid=None):
        self.fluid = fluid

    def reset(self, env, rng):
        super().reset(env, rng)
        fluid = self.fluid
        if fluid is None:
            from ..fluid import solve_w_fluid
            fluid = solve_w_fluid(env, 1)
        if fluid.admission.shape != (env.horizon, env.K):
            raise ConfigurationError("fluid solution does not match the environment")
        lam = env.lam()
        with np.errstate(invalid="ignore", divide="ignore"):
            p = np.where(lam > 0, fluid.admission / np.where(lam > 0, lam, 1), 0.0)
        self.p = np.clip(p, 0, 1).tolist()

    def admit(self, state, k):
        p = self.p[state.t - 1][k]
        a = 1 if p >= 1 else int(p > 0 and self.rng.random() < p)
        return self.keep_flag[k], a, 0


class Threshold(KnownCostPolicy):
    """Admit iff the whole review queue holds fewer than ``theta`` posts."""

    name = "threshold"

    def __init__(self, theta: int):
        self.theta = int(theta)

    def admit(self, state, k):
        return self.keep_flag[k], int(sum(state.lane_len) < self.theta), 0

    def params(self):
        return {"theta": self.theta}


__all__ = ["Bacid", "BacidParams", "AIOnly", "HumanOnly", "Static", "Dynamic", "Threshold",
           "ConfigurationError", "maxweight"]

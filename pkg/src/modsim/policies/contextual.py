"""Contextual learning with type aggregation (COLBACID).

Mean keep/remove costs are linear in a per-type feature vector. A ridge
regression on reviewed posts gives ellipsoidal confidence sets; types are
pooled into groups of similar service rate for admission and scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .base import Policy, default_beta
from .known import ConfigurationError
from .learning import ConfBounds

RESOLVE_EVERY = 1024


class RidgeState:
    """Regularized design matrix V̄ = κI + Σ φφᵀ and the two regression targets.

    ``b_pos`` accumulates φ·c⁺ and ``b_neg`` accumulates φ·c⁻ (c⁻ ≤ 0), the
    two columns of the stacked target. ``theta_R`` is the negated c⁻ column so
    that φᵀθ̂R estimates the (nonnegative) removal cost directly.
    """

    def __init__(self, d: int, kappa: float = 1.0):
        if kappa <= 0:
            raise ValueError("kappa must be positive")
        self.d = d
        self.kappa = float(kappa)
        self.V = kappa * np.eye(d)
        self.V_inv = np.eye(d) / kappa
        self.b_pos = np.zeros(d)
        self.b_neg = np.zeros(d)
        self.count = 0
        self._since_solve = 0

    def update(self, phi, c: float) -> "RidgeState":
        phi = np.asarray(phi, dtype=float)
        if not (np.all(np.isfinite(phi)) and math.isfinite(c)):
            raise ValueError("non-finite ridge update")
        self.V += np.outer(phi, phi)
        self._since_solve += 1
        if self._since_solve >= RESOLVE_EVERY:
            self.V_inv = np.linalg.inv(self.V)
            self.V_inv = 0.5 * (self.V_inv + self.V_inv.T)
            self._since_solve = 0
        else:
            u = self.V_inv @ phi
            self.V_inv -= np.outer(u, u) / (1.0 + phi @ u)
        if c > 0:
            self.b_pos += phi * c
        else:
            self.b_neg += phi * c
        self.count += 1
        return self

    @property
    def theta_O(self) -> np.ndarray:
        return self.V_inv @ self.b_pos

    @property
    def theta_neg(self) -> np.ndarray:
        """Estimate for the c⁻ column as stacked in the regression target."""
        return self.V_inv @ self.b_neg

    @property
    def theta_R(self) -> np.ndarray:
        return -self.theta_neg

    @property
    def theta_h(self) -> np.ndarray:
        return self.V_inv @ (self.b_pos + self.b_neg)

    def solve_fresh(self) -> tuple[np.ndarray, np.ndarray]:
        """(θ̂O, θ̂R) from a direct solve, bypassing the maintained inverse."""
        return np.linalg.solve(self.V, self.b_pos), -np.linalg.solve(self.V, self.b_neg)


def b_delta(t: int, d: int, U: float, kappa: float, sigma_max: float, delta: float) -> float:
    """Confidence radius after t reviewed samples."""
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    return sigma_max * math.sqrt(2 * d * math.log((1 + t * U * U / kappa) / delta)) \
        + math.sqrt(kappa) * U


def contextual_conf(state: RidgeState, phi, B: float, r_max: float) -> ConfBounds:
    """Bounds on h and r for feature ``phi`` from the ellipsoids of radius B.

    Over {θ : ‖θ − θ̂‖_V̄ ≤ B} the extremes of φᵀθ are φᵀθ̂ ± B‖φ‖_{V̄⁻¹}. The
    difference of two such independent ellipsoids is one of radius 2B, and
    max over a product set of min(f, g) equals min(max f, max g).
    """
    if B < 0:
        raise ValueError("confidence radius must be nonnegative")
    phi = np.asarray(phi, dtype=float)
    w = math.sqrt(max(float(phi @ state.V_inv @ phi), 0.0))
    rO = float(phi @ state.theta_O)
    rR = float(phi @ state.theta_R)
    h = rO - rR
    r_bar = min(rO, rR) + B * w
    return ConfBounds(max(-r_max, h - 2 * B * w), min(r_max, h + 2 * B * w),
                      min(r_max, max(0.0, r_bar)))


# --------------------------------------------------------------------------
# type aggregation


@dataclass(frozen=True)
class GroupPartition:
    groups: tuple[int, ...]        # type -> group
    proxy_rates: tuple[float, ...] # per group: min member service rate
    gap: float                     # max_g max_{k∈g} N_max·(μ_k − μ̃_g)
    n_max: float

    @property
    def G(self) -> int:
        return len(self.proxy_rates)

    @classmethod
    def from_groups(cls, groups: Sequence[int], mus: Sequence[float], n_max: float):
        labels = sorted(set(groups))
        relabel = {g: i for i, g in enumerate(labels)}
        groups = tuple(relabel[g] for g in groups)
        proxy = [min(mu for mu, g in zip(mus, groups) if g == i) for i in range(len(labels))]
        gap = max((n_max * (mu - proxy[g]) for mu, g in zip(mus, groups)), default=0.0)
        return cls(groups, tuple(proxy), float(gap), float(n_max))


def make_partition(types, zeta: float, n_max: float) -> GroupPartition:
    """Group types by which interval (0,ζ], (ζ,2ζ], … holds N_max·μ_k."""
    if not 0 < zeta <= 1:
        raise ValueError("zeta must lie in (0, 1]")
    mus = [getattr(tp, "service_rate", tp) for tp in types]
    idx = []
    for mu in mus:
        x = n_max * mu
        if x > 1 + 1e-12:
            raise ValueError(f"N_max·μ = {x} exceeds 1")
        idx.append(max(math.ceil(x / zeta - 1e-9) - 1, 0))
    return GroupPartition.from_groups(idx, mus, n_max)


# --------------------------------------------------------------------------
# policy


class Colbacid(Policy):
    name = "colbacid"

    def __init__(self, beta=None, gamma=None, delta=None, kappa=None, partition=None,
                 zeta=None, groups=None, features=None, U=None, sigma_max=None, r_max=None):
        self._beta, self._gamma, self._delta, self._kappa = beta, gamma, delta, kappa
        self._partition, self._zeta, self._groups = partition, zeta, groups
        self._features = features
        self._U, self._sigma, self._rmax = U, sigma_max, r_max

    def reset(self, env, rng):
        super().reset(env, rng)
        n_max = env.n_max
        if self._partition is not None:
            part = self._partition
        elif self._groups is not None:
            part = GroupPartition.from_groups(self._groups, self.mu, n_max)
        else:
            zeta = self._zeta if self._zeta is not None else env.l_max ** (-1 / 3)
            part = make_partition(self.mu, zeta, n_max)
        if len(part.groups) != env.K:
            raise ConfigurationError("every type needs a group")
        self.partition = part
        self.lane_of = list(part.groups)
        self.lane_weight = list(part.proxy_rates)
        G = part.G
        self.U = env.U if self._U is None else self._U
        self.sigma_max = env.sigma_max if self._sigma is None else self._sigma
        self.r_max = env.r_max if self._rmax is None else self._rmax
        self.beta = default_beta(G, env.l_max) if self._beta is None else self._beta
        self.gamma = default_beta(G, env.l_max) if self._gamma is None else self._gamma
        self.delta = min(self.gamma, 0.5 / max(env.horizon, 1)) if self._delta is None else self._delta
        self.kappa = max(1.0, self.U ** 2) if self._kappa is None else self._kappa
        phi = np.asarray(self._features, dtype=float) if self._features is not None \
            else env.features()
        if phi.shape[0] != env.K:
            raise ConfigurationError("need one feature row per type")
        self.phi = phi
        self.ridge = RidgeState(phi.shape[1], self.kappa)
        self._cache: dict[int, tuple[float, ConfBounds]] = {}

    def _bounds(self, k: int) -> tuple[float, ConfBounds]:
        hit = self._cache.get(k)
        if hit is None:
            rs = self.ridge
            B = b_delta(rs.count, rs.d, self.U, self.kappa, self.sigma_max, self.delta)
            cb = contextual_conf(rs, self.phi[k], B, self.r_max)
            hit = (float(self.phi[k] @ rs.theta_h), cb)
            self._cache[k] = hit
        return hit

    def admit(self, state, k):
        h_hat, b = self._bounds(k)
        keep = 0 if h_hat > 0 else 1
        g = self.gamma
        if state.ld is None and b.h_lo < -g < g < b.h_hi:
            return keep, 0, 1
        lane = self.lane_of[k]
        return keep, int(self.beta * b.r_bar * self.lifetimes[k] >= state.lane_len[lane]), 0

    def schedule(self, state):
        if state.ld is not None:
            return state.ld
        return super().schedule(state)

    def observe(self, k, cost):
        self.ridge.update(self.phi[k], cost)
        self._cache.clear()

    def probe(self, state):
        out = {}
        for k in range(self.K):
            h, b = self._bounds(k)
            out[k] = {"h_hat": h, "h_lo": b.h_lo, "h_hi": b.h_hi, "r_bar": b.r_bar}
        return out

    def params(self):
        return {"beta": self._beta, "gamma": self._gamma, "delta": self._delta,
                "kappa": self._kappa, "zeta": self._zeta, "groups": self._groups}

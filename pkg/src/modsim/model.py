"""Domain types for the moderation pipeline: cost distributions, post types and
environments (arrival/capacity schedules), plus closed-form moments."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import jsonschema
import numpy as np

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / _SQRT2)


def _norm_pdf(x: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)


class ValidationError(ValueError):
    """Raised when a distribution or environment has invalid parameters."""


# --------------------------------------------------------------------------
# cost distributions


@dataclass(frozen=True)
class Moments:
    """Expected per-period costs of keeping (rO) and removing (rR) a post."""

    rO: float
    rR: float

    @property
    def h(self) -> float:
        return self.rO - self.rR

    @property
    def r(self) -> float:
        return min(self.rO, self.rR)


class CostDistribution:
    """Base class. Subclasses supply moments, sampling and a variance proxy."""

    variance_proxy: float

    def moments(self) -> Moments:
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def mean_abs(self) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class TwoPoint(CostDistribution):
    """Cost equals ``value_pos`` w.p. ``prob_pos`` and ``value_neg`` otherwise."""

    value_pos: float
    value_neg: float
    prob_pos: float
    variance_proxy: float = None  # type: ignore[assignment]

    def __post_init__(self):
        if not 0.0 <= self.prob_pos <= 1.0:
            raise ValidationError(f"prob_pos={self.prob_pos} outside [0, 1]")
        if not (math.isfinite(self.value_pos) and math.isfinite(self.value_neg)):
            raise ValidationError("two-point atoms must be finite")
        floor = (self.value_pos - self.value_neg) ** 2 / 4.0
        if self.variance_proxy is None:
            object.__setattr__(self, "variance_proxy", floor)
        elif self.variance_proxy < floor - 1e-12:
            raise ValidationError(
                f"variance proxy {self.variance_proxy} below (b-a)^2/4 = {floor}")

    def moments(self) -> Moments:
        p, a, b = self.prob_pos, self.value_pos, self.value_neg
        rO = p * max(a, 0.0) + (1 - p) * max(b, 0.0)
        rR = p * -min(a, 0.0) + (1 - p) * -min(b, 0.0)
        return Moments(rO, rR)

    def mean(self) -> float:
        return self.prob_pos * self.value_pos + (1 - self.prob_pos) * self.value_neg

    def mean_abs(self) -> float:
        return self.prob_pos * abs(self.value_pos) + (1 - self.prob_pos) * abs(self.value_neg)

    def sample(self, rng, size=None):
        u = rng.random(size)
        return np.where(u < self.prob_pos, self.value_pos, self.value_neg) if size is not None \
            else (self.value_pos if u < self.prob_pos else self.value_neg)

    def to_dict(self) -> dict:
        return {"kind": "two_point", "value_pos": self.value_pos, "value_neg": self.value_neg,
                "prob_pos": self.prob_pos, "variance_proxy": self.variance_proxy}


@dataclass(frozen=True)
class Normal(CostDistribution):
    mean_cost: float
    std: float
    variance_proxy: float = None  # type: ignore[assignment]

    def __post_init__(self):
        if not (self.std > 0 and math.isfinite(self.std)):
            raise ValidationError(f"std must be positive, got {self.std}")
        if not math.isfinite(self.mean_cost):
            raise ValidationError("mean must be finite")
        if self.variance_proxy is None:
            object.__setattr__(self, "variance_proxy", self.std ** 2)
        elif self.variance_proxy < self.std ** 2 - 1e-12:
            raise ValidationError(
                f"variance proxy {self.variance_proxy} below std^2 = {self.std ** 2}")

    def moments(self) -> Moments:
        m, s = self.mean_cost, self.std
        rO = m * _norm_cdf(m / s) + s * _norm_pdf(m / s)
        return Moments(rO, rO - m)

    def mean(self) -> float:
        return self.mean_cost

    def mean_abs(self) -> float:
        m = self.moments()
        return m.rO + m.rR

    def sample(self, rng, size=None):
        return rng.normal(self.mean_cost, self.std, size)

    def to_dict(self) -> dict:
        return {"kind": "normal", "mean": self.mean_cost, "std": self.std,
                "variance_proxy": self.variance_proxy}


def moments(dist: CostDistribution) -> Moments:
    return dist.moments()


def sample_cost(dist: CostDistribution, rng: np.random.Generator) -> float:
    return float(dist.sample(rng))


def dist_from_dict(d: dict) -> CostDistribution:
    kind = d.get("kind")
    if kind == "two_point":
        return TwoPoint(d["value_pos"], d["value_neg"], d["prob_pos"], d.get("variance_proxy"))
    if kind == "normal":
        return Normal(d["mean"], d["std"], d.get("variance_proxy"))
    raise ValidationError(f"unknown distribution kind {kind!r}")


# --------------------------------------------------------------------------
# schedules, types, environments


@dataclass(frozen=True)
class Schedule:
    """Piecewise-constant value over periods 1..T, as (from_t, value) segments."""

    segments: tuple[tuple[int, float], ...]

    def __init__(self, segments):
        if isinstance(segments, (int, float)):
            segments = [(1, segments)]
        segs = []
        for s in segments:
            if isinstance(s, dict):
                segs.append((int(s["from_t"]), float(s["value"])))
            else:
                segs.append((int(s[0]), float(s[1])))
        if not segs or segs[0][0] != 1:
            raise ValidationError("schedule must start with a segment at from_t=1")
        for (a, _), (b, _) in zip(segs, segs[1:]):
            if b <= a:
                raise ValidationError("schedule segments must have increasing from_t")
        object.__setattr__(self, "segments", tuple(segs))

    @classmethod
    def constant(cls, value: float) -> "Schedule":
        return cls([(1, value)])

    @classmethod
    def periodic(cls, T: int, period: int, pattern: Sequence[tuple[int, float]]) -> "Schedule":
        """Repeat ``pattern`` (offset, value) every ``period`` periods up to T."""
        segs = []
        for start in range(1, T + 1, period):
            for off, v in pattern:
                if start + off <= T:
                    segs.append((start + off, v))
        merged = [segs[0]]
        for s in segs[1:]:
            if s[1] != merged[-1][1]:
                merged.append(s)
        return cls(merged)

    def value_at(self, t: int) -> float:
        v = self.segments[0][1]
        for start, val in self.segments:
            if start > t:
                break
            v = val
        return v

    def expand(self, T: int) -> np.ndarray:
        out = np.empty(T, dtype=float)
        bounds = [s for s, _ in self.segments] + [T + 1]
        for (start, val), end in zip(self.segments, bounds[1:]):
            if start > T:
                break
            out[start - 1:min(end, T + 1) - 1] = val
        return out

    def breakpoints(self) -> list[int]:
        return [s for s, _ in self.segments]

    def to_list(self) -> list[dict]:
        return [{"from_t": s, "value": v} for s, v in self.segments]


@dataclass(frozen=True)
class TypeParams:
    type_id: int
    lifetime: int
    service_rate: float
    dist: CostDistribution
    feature: tuple[float, ...] | None = None

    def to_dict(self) -> dict:
        d = {"type_id": self.type_id, "lifetime": self.lifetime,
             "service_rate": self.service_rate, "dist": self.dist.to_dict()}
        if self.feature is not None:
            d["feature"] = list(self.feature)
        return d


@dataclass(frozen=True)
class EnvConfig:
    horizon: int
    arrival_rates: tuple[Schedule, ...]
    capacity: Schedule
    types: tuple[TypeParams, ...]
    r_max: float = 1.0
    sigma_max: float = 1.0
    U: float = 1.0
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "arrival_rates", tuple(
            s if isinstance(s, Schedule) else Schedule(s) for s in self.arrival_rates))
        if not isinstance(self.capacity, Schedule):
            object.__setattr__(self, "capacity", Schedule(self.capacity))
        object.__setattr__(self, "types", tuple(self.types))
        if len(self.arrival_rates) != len(self.types):
            raise ValidationError("need one arrival schedule per type")

    @property
    def K(self) -> int:
        return len(self.types)

    @property
    def T(self) -> int:
        return self.horizon

    @property
    def lifetimes(self) -> np.ndarray:
        return np.array([tp.lifetime for tp in self.types], dtype=np.int64)

    @property
    def service_rates(self) -> np.ndarray:
        return np.array([tp.service_rate for tp in self.types], dtype=float)

    @property
    def l_max(self) -> int:
        return max(tp.lifetime for tp in self.types)

    def moments(self) -> list[Moments]:
        if "moments" not in self._cache:
            self._cache["moments"] = [tp.dist.moments() for tp in self.types]
        return self._cache["moments"]

    def lam(self) -> np.ndarray:
        """Per-period arrival rates, shape (T, K)."""
        if "lam" not in self._cache:
            self._cache["lam"] = np.stack(
                [s.expand(self.horizon) for s in self.arrival_rates], axis=1) \
                if self.horizon > 0 else np.zeros((0, self.K))
        return self._cache["lam"]

    def cap(self) -> np.ndarray:
        """Per-period reviewer counts, shape (T,)."""
        if "cap" not in self._cache:
            self._cache["cap"] = self.capacity.expand(self.horizon)
        return self._cache["cap"]

    @property
    def n_max(self) -> float:
        return float(self.cap().max()) if self.horizon > 0 else max(v for _, v in self.capacity.segments)

    def features(self) -> np.ndarray:
        """Feature matrix (K, d); one-hot rows for types without a feature."""
        if all(tp.feature is None for tp in self.types):
            return np.eye(self.K)
        if any(tp.feature is None for tp in self.types):
            raise ValidationError("either all or no types may carry features")
        return np.array([tp.feature for tp in self.types], dtype=float)

    def with_(self, **kw) -> "EnvConfig":
        d = dict(horizon=self.horizon, arrival_rates=self.arrival_rates, capacity=self.capacity,
                 types=self.types, r_max=self.r_max, sigma_max=self.sigma_max, U=self.U)
        d.update(kw)
        return EnvConfig(**d)

    # -- serialization

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "arrival_rates": [s.to_list() for s in self.arrival_rates],
            "capacity": self.capacity.to_list(),
            "types": [tp.to_dict() for tp in self.types],
            "r_max": self.r_max, "sigma_max": self.sigma_max, "U": self.U,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnvConfig":
        try:
            jsonschema.validate(d, ENV_SCHEMA)
        except jsonschema.ValidationError as e:
            raise ValidationError(f"environment file: {e.message}") from None
        types = [TypeParams(t.get("type_id", i), int(t["lifetime"]), float(t["service_rate"]),
                            dist_from_dict(t["dist"]),
                            tuple(t["feature"]) if t.get("feature") is not None else None)
                 for i, t in enumerate(d["types"])]
        return cls(int(d["horizon"]), tuple(Schedule(s) for s in d["arrival_rates"]),
                   Schedule(d["capacity"]), tuple(types),
                   float(d.get("r_max", 1.0)), float(d.get("sigma_max", 1.0)), float(d.get("U", 1.0)))

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, s: str) -> "EnvConfig":
        return cls.from_dict(json.loads(s))


_SEGMENTS = {"type": "array", "minItems": 1, "items": {
    "type": "object", "required": ["from_t", "value"],
    "properties": {"from_t": {"type": "integer", "minimum": 1}, "value": {"type": "number"}}}}

ENV_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "EnvConfig",
    "type": "object",
    "required": ["horizon", "arrival_rates", "capacity", "types"],
    "properties": {
        "horizon": {"type": "integer", "minimum": 0},
        "arrival_rates": {"type": "array", "items": _SEGMENTS},
        "capacity": _SEGMENTS,
        "types": {"type": "array", "minItems": 1, "items": {
            "type": "object",
            "required": ["lifetime", "service_rate", "dist"],
            "properties": {
                "type_id": {"type": "integer"},
                "lifetime": {"type": "integer", "minimum": 1},
                "service_rate": {"type": "number", "minimum": 0},
                "feature": {"type": "array", "items": {"type": "number"}},
                "dist": {"type": "object", "required": ["kind"], "oneOf": [
                    {"properties": {"kind": {"const": "two_point"}},
                     "required": ["value_pos", "value_neg", "prob_pos"]},
                    {"properties": {"kind": {"const": "normal"}}, "required": ["mean", "std"]},
                ]},
            }}},
        "r_max": {"type": "number", "minimum": 1},
        "sigma_max": {"type": "number", "exclusiveMinimum": 0},
        "U": {"type": "number", "minimum": 1},
    },
}


# --------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    t: int | None = None
    k: int | None = None

    def __str__(self):
        loc = []
        if self.t is not None:
            loc.append(f"t={self.t}")
        if self.k is not None:
            loc.append(f"k={self.k}")
        return f"{self.message}" + (f" at {', '.join(loc)}" if loc else "")


def validate_env(cfg: EnvConfig) -> list[Violation]:
    """Return every invariant violation of ``cfg``; an empty list means ok.

    Schedules are piecewise constant, so checking each segment start suffices.
    """
    out: list[Violation] = []
    eps = 1e-12
    points = sorted({1, *cfg.capacity.breakpoints(),
                     *(b for s in cfg.arrival_rates for b in s.breakpoints())})
    points = [p for p in points if p <= max(cfg.horizon, 1)]
    mus = [tp.service_rate for tp in cfg.types]

    for t in points:
        lams = [s.value_at(t) for s in cfg.arrival_rates]
        n = cfg.capacity.value_at(t)
        for k, lam in enumerate(lams):
            if lam < 0 or lam > 1:
                out.append(Violation("lambda_range", f"lambda_{k} = {lam} outside [0, 1]", t, k))
        if sum(lams) > 1 + eps:
            out.append(Violation("lambda_sum", f"Σλ > 1 ({sum(lams):.6g})", t))
        if n < 0 or n != int(n):
            out.append(Violation("capacity", f"N = {n} is not a nonnegative integer", t))
        for k, mu in enumerate(mus):
            if n * mu > 1 + eps:
                out.append(Violation("n_mu", f"N·μ > 1 ({n}·{mu})", t, k))

    d = None
    for k, tp in enumerate(cfg.types):
        if tp.lifetime < 1:
            out.append(Violation("lifetime", f"lifetime {tp.lifetime} < 1", k=k))
        if not 0 <= tp.service_rate <= 1:
            out.append(Violation("mu_range", f"μ = {tp.service_rate} outside [0, 1]", k=k))
        if tp.dist.mean_abs() > cfg.r_max + eps:
            out.append(Violation("r_max", f"E|c| = {tp.dist.mean_abs():.6g} exceeds r_max", k=k))
        if tp.dist.variance_proxy > cfg.sigma_max ** 2 + eps:
            out.append(Violation("sigma_max", "variance proxy exceeds sigma_max^2", k=k))
        if tp.feature is not None:
            if d is not None and len(tp.feature) != d:
                out.append(Violation("feature_dim", "feature dimensions differ", k=k))
            d = len(tp.feature)
            if float(np.linalg.norm(tp.feature)) > cfg.U + eps:
                out.append(Violation("feature_norm", "‖φ‖ exceeds U", k=k))
    if cfg.r_max < 1:
        out.append(Violation("r_max", "r_max must be ≥ 1"))
    if cfg.U < 1:
        out.append(Violation("U", "U must be ≥ 1"))
    if cfg.sigma_max <= 0:
        out.append(Violation("sigma_max", "sigma_max must be positive"))
    return out

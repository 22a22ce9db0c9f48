"""Period-by-period simulator of the arrival / classification / admission /
scheduling / review pipeline, plus loss accounting on finished traces.

Within period t the order is: arrival, classification + admission, queue
snapshot, scheduling, Bernoulli review completion, dataset update. A post
admitted in period t may therefore be reviewed in period t.
"""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Iterable

import numpy as np

from .model import EnvConfig, validate_env

if TYPE_CHECKING:
    from .policies.base import Policy

KEEP, REMOVE = 1, 0
NOT_ADMITTED, REVIEW_QUEUE, LABEL_QUEUE = 0, 1, 2


class ContractViolation(RuntimeError):
    """A policy emitted a decision the pipeline cannot execute."""


# --------------------------------------------------------------------------
# exogenous randomness


@dataclass(frozen=True)
class Exogenous:
    """All environment randomness of one run, drawn up front.

    ``arrivals[t-1]`` is the arriving type in period t (-1 if none),
    ``costs[t-1]`` the cost of that arrival, ``service_u[t-1]`` the uniform
    compared against N(t)·μ for the review coin. Policies draw from their
    own stream and cannot shift these.
    """

    arrivals: np.ndarray
    costs: np.ndarray
    service_u: np.ndarray

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in (self.arrivals, self.costs, self.service_u):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()


def spawn_streams(seed: int) -> dict[str, np.random.Generator]:
    """Split a master seed into the named sub-streams, in fixed order."""
    names = ("arrival", "cost", "service", "policy")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.default_rng(c) for n, c in zip(names, children)}


def draw_exogenous(env: EnvConfig, seed: int) -> Exogenous:
    streams = spawn_streams(seed)
    T, K = env.horizon, env.K
    u = streams["arrival"].random(T)
    cum = np.cumsum(env.lam(), axis=1) if T else np.zeros((0, K))
    arrivals = np.full(T, -1, dtype=np.int64)
    # first type whose cumulative rate exceeds u
    hit = u[:, None] < cum
    any_hit = hit.any(axis=1)
    arrivals[any_hit] = hit[any_hit].argmax(axis=1)
    # one independent cost draw per (type, period); the arrival's type picks one
    rng_c = streams["cost"]
    per_type = np.stack([np.asarray(tp.dist.sample(rng_c, T), dtype=float)
                         for tp in env.types]) if T else np.zeros((K, 0))
    costs = np.zeros(T)
    idx = np.nonzero(arrivals >= 0)[0]
    costs[idx] = per_type[arrivals[idx], idx]
    service_u = streams["service"].random(T)
    return Exogenous(arrivals, costs, service_u)


# --------------------------------------------------------------------------
# state and records


@dataclass(frozen=True)
class Decision:
    keep: int
    admit: int
    label: int
    schedule: int | None

    def __post_init__(self):
        if self.admit and self.label:
            raise ContractViolation("A and E both set")


@dataclass(frozen=True)
class Post:
    post_id: int
    type_id: int
    arrival_period: int
    true_cost: float
    initial_keep: int
    admitted: int
    review_completion_period: int | None


class SimState:
    """Mutable queueing state that policies read.

    ``lanes`` are FIFO queues of post ids. By default there is one lane per
    type; a policy may map several types onto one lane (group queues).
    ``qlen[k]`` always counts type-k posts in the review queue, excluding
    the label-driven slot ``ld``.
    """

    def __init__(self, env: EnvConfig, lane_of: list[int]):
        self.env = env
        self.t = 1
        self.K = env.K
        self.lane_of = list(lane_of)
        n_lanes = max(lane_of) + 1 if lane_of else 0
        self.lanes: list[deque] = [deque() for _ in range(n_lanes)]
        self.lane_len = [0] * n_lanes
        self.qlen = [0] * env.K
        self.ld: int | None = None
        self.n = [0] * env.K
        self.post_type: list[int] = []
        self.post_cost: list[float] = []
        self.post_t: list[int] = []
        self.dataset: list[tuple[int, int, float]] = []

    def queued(self) -> int:
        return sum(self.lane_len) + (self.ld is not None)


@dataclass
class Trace:
    env: EnvConfig
    seed: int
    policy: str
    policy_params: dict
    # per period (index t-1)
    arrival: np.ndarray
    keep: np.ndarray
    admit: np.ndarray
    label: np.ndarray
    scheduled: np.ndarray
    served: np.ndarray
    queues: np.ndarray     # (T, K) review-queue lengths after admission
    ld_queue: np.ndarray   # (T,) label-driven queue length after admission
    # per post
    post_type: np.ndarray
    post_t: np.ndarray
    post_cost: np.ndarray
    post_keep: np.ndarray
    post_admitted: np.ndarray
    post_done: np.ndarray  # completion period, 0 if never reviewed
    exo_digest: str = ""
    probes: list = field(default_factory=list)

    @property
    def T(self) -> int:
        return self.env.horizon

    def delays(self) -> np.ndarray:
        """D(j) per post: completion − t(j) + 1, or T + 1 − t(j) if unreviewed."""
        return np.where(self.post_done > 0, self.post_done - self.post_t + 1,
                        self.T + 1 - self.post_t)

    def posts(self) -> list[Post]:
        return [Post(j, int(self.post_type[j]), int(self.post_t[j]), float(self.post_cost[j]),
                     int(self.post_keep[j]), int(self.post_admitted[j]),
                     int(self.post_done[j]) or None) for j in range(len(self.post_t))]

    def reviewed_count(self) -> np.ndarray:
        return np.bincount(self.post_type[self.post_done > 0], minlength=self.env.K)

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in (self.arrival, self.keep, self.admit, self.label, self.scheduled, self.served,
                  self.queues, self.ld_queue, self.post_type, self.post_t, self.post_cost,
                  self.post_keep, self.post_admitted, self.post_done):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()


# --------------------------------------------------------------------------
# simulator


class Simulator:
    """Drives one policy through one environment realization."""

    def __init__(self, env: EnvConfig, policy: "Policy", seed: int,
                 exo: Exogenous | None = None, probe_every: int = 0):
        self.env = env
        self.seed = seed
        self.policy = policy
        streams = spawn_streams(seed)
        self.exo = exo if exo is not None else draw_exogenous(env, seed)
        policy.reset(env, streams["policy"])
        self.state = SimState(env, policy.lane_of)
        self.probe_every = probe_every
        self.probes: list = []
        self._cap = env.cap().tolist()
        self._mu = [tp.service_rate for tp in env.types]
        self._arr = self.exo.arrivals.tolist()
        self._cost = self.exo.costs.tolist()
        self._su = self.exo.service_u.tolist()
        self._rec: dict[str, list] = {k: [] for k in
                                      ("keep", "admit", "label", "sched", "served", "ld")}
        self._qsnap: list[int] = []
        self._post_keep: list[int] = []
        self._post_adm: list[int] = []
        self._post_done: list[int] = []
        self._where: dict[int, int] = {}  # queued post id -> lane, -1 for ld

    def step(self) -> Decision:
        st, pol = self.state, self.policy
        t = st.t
        if t > self.env.horizon:
            raise ContractViolation("step past horizon")
        i = t - 1
        k = self._arr[i]
        keep = admit = label = 0
        if k >= 0:
            pid = len(st.post_t)
            st.post_type.append(k)
            st.post_cost.append(self._cost[i])
            st.post_t.append(t)
            keep, admit, label = pol.admit(st, k)
            if admit and label:
                raise ContractViolation(f"t={t}: A and E both set")
            if admit:
                g = st.lane_of[k]
                st.lanes[g].append(pid)
                st.lane_len[g] += 1
                st.qlen[k] += 1
                self._where[pid] = g
            elif label:
                if st.ld is not None:
                    raise ContractViolation(f"t={t}: label-driven queue already occupied")
                st.ld = pid
                self._where[pid] = -1
            self._post_keep.append(keep)
            self._post_adm.append(REVIEW_QUEUE if admit else LABEL_QUEUE if label else NOT_ADMITTED)
            self._post_done.append(0)
        self._qsnap.extend(st.qlen)
        rec = self._rec
        rec["ld"].append(0 if st.ld is None else 1)

        m = pol.schedule(st)
        served = 0
        if m is not None:
            lane = self._where.get(m)
            if lane is None:
                raise ContractViolation(f"t={t}: scheduled post {m} is not queued")
            km = st.post_type[m]
            if self._su[i] < self._cap[i] * self._mu[km]:
                served = 1
                del self._where[m]
                if lane < 0:
                    st.ld = None
                else:
                    q = st.lanes[lane]
                    if q[0] == m:
                        q.popleft()
                    else:
                        q.remove(m)
                    st.lane_len[lane] -= 1
                    st.qlen[km] -= 1
                c = st.post_cost[m]
                st.dataset.append((m, km, c))
                st.n[km] += 1
                self._post_done[m] = t
                pol.observe(km, c)
        rec["keep"].append(keep)
        rec["admit"].append(admit)
        rec["label"].append(label)
        rec["sched"].append(-1 if m is None else m)
        rec["served"].append(served)
        if self.probe_every and t % self.probe_every == 0:
            p = pol.probe(st)
            if p is not None:
                self.probes.append((t, p))
        st.t = t + 1
        return Decision(keep, admit, label, m)

    def run(self) -> Trace:
        st, pol = self.state, self.policy
        # inlined copy of step() without the Decision allocation
        T = self.env.horizon
        arr, cost, su, cap, mu = self._arr, self._cost, self._su, self._cap, self._mu
        rec = self._rec
        r_keep, r_admit, r_label = rec["keep"].append, rec["admit"].append, rec["label"].append
        r_sched, r_served, r_ld = rec["sched"].append, rec["served"].append, rec["ld"].append
        qsnap = self._qsnap.extend
        where = self._where
        post_type, post_cost, post_t = st.post_type, st.post_cost, st.post_t
        lanes, lane_len, qlen, lane_of = st.lanes, st.lane_len, st.qlen, st.lane_of
        p_keep, p_adm, p_done = self._post_keep, self._post_adm, self._post_done
        admit_fn, sched_fn, obs_fn = pol.admit, pol.schedule, pol.observe
        probe_every = self.probe_every
        for t in range(st.t, T + 1):
            st.t = t
            i = t - 1
            k = arr[i]
            keep = admit = label = 0
            if k >= 0:
                pid = len(post_t)
                post_type.append(k)
                post_cost.append(cost[i])
                post_t.append(t)
                keep, admit, label = admit_fn(st, k)
                if admit:
                    if label:
                        raise ContractViolation(f"t={t}: A and E both set")
                    g = lane_of[k]
                    lanes[g].append(pid)
                    lane_len[g] += 1
                    qlen[k] += 1
                    where[pid] = g
                    p_adm.append(REVIEW_QUEUE)
                elif label:
                    if st.ld is not None:
                        raise ContractViolation(f"t={t}: label-driven queue already occupied")
                    st.ld = pid
                    where[pid] = -1
                    p_adm.append(LABEL_QUEUE)
                else:
                    p_adm.append(NOT_ADMITTED)
                p_keep.append(keep)
                p_done.append(0)
            qsnap(qlen)
            r_ld(0 if st.ld is None else 1)
            m = sched_fn(st)
            served = 0
            if m is not None:
                lane = where.get(m)
                if lane is None:
                    raise ContractViolation(f"t={t}: scheduled post {m} is not queued")
                km = post_type[m]
                if su[i] < cap[i] * mu[km]:
                    served = 1
                    del where[m]
                    if lane < 0:
                        st.ld = None
                    else:
                        q = lanes[lane]
                        if q[0] == m:
                            q.popleft()
                        else:
                            q.remove(m)
                        lane_len[lane] -= 1
                        qlen[km] -= 1
                    c = post_cost[m]
                    st.dataset.append((m, km, c))
                    st.n[km] += 1
                    p_done[m] = t
                    obs_fn(km, c)
                r_sched(m)
            else:
                r_sched(-1)
            r_keep(keep)
            r_admit(admit)
            r_label(label)
            r_served(served)
            if probe_every and t % probe_every == 0:
                p = pol.probe(st)
                if p is not None:
                    self.probes.append((t, p))
        st.t = T + 1
        return self.trace()

    def trace(self) -> Trace:
        st, rec = self.state, self._rec
        n = len(rec["keep"])
        K = self.env.K
        i8 = np.int8
        return Trace(
            env=self.env, seed=self.seed, policy=self.policy.name,
            policy_params=self.policy.params(),
            arrival=self.exo.arrivals[:n].copy(),
            keep=np.array(rec["keep"], dtype=i8), admit=np.array(rec["admit"], dtype=i8),
            label=np.array(rec["label"], dtype=i8),
            scheduled=np.array(rec["sched"], dtype=np.int64),
            served=np.array(rec["served"], dtype=i8),
            queues=np.array(self._qsnap, dtype=np.int64).reshape(n, K),
            ld_queue=np.array(rec["ld"], dtype=i8),
            post_type=np.array(st.post_type, dtype=np.int64),
            post_t=np.array(st.post_t, dtype=np.int64),
            post_cost=np.array(st.post_cost, dtype=float),
            post_keep=np.array(self._post_keep, dtype=i8),
            post_admitted=np.array(self._post_adm, dtype=i8),
            post_done=np.array(self._post_done, dtype=np.int64),
            exo_digest=self.exo.digest(),
            probes=list(self.probes),
        )


def run(env: EnvConfig, policy: "Policy", seed: int, *, exo: Exogenous | None = None,
        probe_every: int = 0, validate: bool = True) -> Trace:
    """Simulate ``policy`` on ``env`` for the full horizon."""
    if validate:
        bad = validate_env(env)
        if bad:
            raise ValueError("invalid environment: " + "; ".join(map(str, bad)))
    return Simulator(env, policy, seed, exo=exo, probe_every=probe_every).run()


# --------------------------------------------------------------------------
# loss accounting


def _exposure(trace: Trace, horizon: int | None = None, truncate: bool = False) -> tuple:
    T = trace.T if horizon is None else horizon
    sel = trace.post_t <= T
    t0 = trace.post_t[sel]
    done = trace.post_done[sel]
    lt = trace.env.lifetimes[trace.post_type[sel]]
    D = np.where((done > 0) & (done <= T), done - t0 + 1, T + 1 - t0)
    admitted = trace.post_admitted[sel] != NOT_ADMITTED
    if truncate:
        exposure = np.minimum(np.minimum(D, lt), T - t0 + 1)
    else:
        exposure = np.where(admitted, np.minimum(D, lt), lt)
    return sel, exposure


def realized_loss(trace: Trace, horizon: int | None = None, truncate: bool = False) -> float:
    """Loss against the clairvoyant that keeps a post iff its cost is ≤ 0.

    A wrongly classified post diverges from the clairvoyant until it is
    reviewed. Non-admitted posts are charged their full lifetime and admitted
    ones min(D, ℓ), the same accounting the fluid benchmark uses. With
    ``truncate=True`` every post is additionally cut at the horizon.
    ``horizon`` evaluates the loss of the first ``horizon`` periods.
    """
    sel, exposure = _exposure(trace, horizon, truncate)
    c = trace.post_cost[sel]
    wrong = trace.post_keep[sel] != (c <= 0)
    return float(np.sum(np.abs(c) * exposure * wrong))


def loss_curve(trace: Trace, checkpoints: Iterable[int]) -> np.ndarray:
    return np.array([realized_loss(trace, horizon=int(t)) for t in checkpoints])


def loss_decomposition(trace: Trace) -> dict[str, float]:
    """Idiosyncrasy / delay / classification components, with true moments."""
    env = trace.env
    mom = env.moments()
    r = np.array([m.r for m in mom])
    rO = np.array([m.rO for m in mom])
    rR = np.array([m.rR for m in mom])
    lt = env.lifetimes
    k = trace.post_type
    adm = trace.post_admitted != NOT_ADMITTED
    idio = float(np.sum((r * lt)[k][~adm]))
    D = trace.delays()
    delay = float(np.sum(r[k][adm] * np.minimum(D[adm], lt[k][adm])))
    keep = trace.post_keep.astype(bool)
    excess = np.where(keep, np.maximum(rO - rR, 0)[k], np.maximum(rR - rO, 0)[k])
    cls = float(np.sum((excess * lt[k])[~adm]))
    return {"idiosyncrasy": idio, "delay": delay, "classification": cls}


def littles_law(trace: Trace) -> tuple[int, int]:
    """(Σ admitted min(D, T+1−t), Σ_t queue lengths after admission)."""
    adm = trace.post_admitted != NOT_ADMITTED
    D = trace.delays()[adm]
    lhs = int(np.sum(np.minimum(D, trace.T + 1 - trace.post_t[adm])))
    rhs = int(trace.queues.sum() + trace.ld_queue.sum())
    return lhs, rhs


# --------------------------------------------------------------------------
# line-delimited export


def write_trace(trace: Trace, path) -> None:
    with open(path, "w") as f:
        f.write(json.dumps({"kind": "header", "seed": trace.seed, "policy": trace.policy,
                            "policy_params": trace.policy_params, "env": trace.env.to_dict(),
                            "exo_digest": trace.exo_digest}) + "\n")
        for i in range(len(trace.keep)):
            a = int(trace.arrival[i])
            f.write(json.dumps({
                "kind": "period", "t": i + 1, "arrival": a if a >= 0 else None,
                "Y": int(trace.keep[i]), "A": int(trace.admit[i]), "E": int(trace.label[i]),
                "M": int(trace.scheduled[i]) if trace.scheduled[i] >= 0 else None,
                "S": int(trace.served[i]), "Q": trace.queues[i].tolist(),
                "Qld": int(trace.ld_queue[i])}) + "\n")
        D = trace.delays()
        for j in range(len(trace.post_t)):
            f.write(json.dumps({
                "kind": "post", "post_id": j, "type": int(trace.post_type[j]),
                "t": int(trace.post_t[j]), "cost": float(trace.post_cost[j]),
                "Y": int(trace.post_keep[j]), "admitted": int(trace.post_admitted[j]),
                "completion": int(trace.post_done[j]) or None, "delay": int(D[j])}) + "\n")


def read_trace(path) -> Trace:
    periods: list[dict] = []
    posts: list[dict] = []
    header: dict[str, Any] = {}
    with open(path) as f:
        for line in f:
            rec = json.loads(line)
            kind = rec["kind"]
            if kind == "header":
                header = rec
            elif kind == "period":
                periods.append(rec)
            elif kind == "post":
                posts.append(rec)
    env = EnvConfig.from_dict(header["env"])
    K = env.K
    col = lambda rows, key, fill=-1, dt=np.int64: np.array(
        [fill if r[key] is None else r[key] for r in rows], dtype=dt)
    return Trace(
        env=env, seed=header["seed"], policy=header["policy"],
        policy_params=header["policy_params"],
        arrival=col(periods, "arrival"), keep=col(periods, "Y", dt=np.int8),
        admit=col(periods, "A", dt=np.int8), label=col(periods, "E", dt=np.int8),
        scheduled=col(periods, "M"), served=col(periods, "S", dt=np.int8),
        queues=np.array([r["Q"] for r in periods], dtype=np.int64).reshape(len(periods), K),
        ld_queue=col(periods, "Qld", dt=np.int8),
        post_type=col(posts, "type"), post_t=col(posts, "t"),
        post_cost=np.array([r["cost"] for r in posts], dtype=float),
        post_keep=col(posts, "Y", dt=np.int8), post_admitted=col(posts, "admitted", dt=np.int8),
        post_done=col(posts, "completion", fill=0),
        exo_digest=header.get("exo_digest", ""),
    )

"""Scenario presets, paired-seed replications and regret reports."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .fluid import FluidSolution, solve_w_fluid
from .model import EnvConfig, Normal, Schedule, TwoPoint, TypeParams, validate_env
from .policies import REGISTRY, ConfigurationError, make_policy
from .sim import draw_exogenous, loss_decomposition, realized_loss, run


class ExperimentError(RuntimeError):
    def __init__(self, policy: str, seed: int, cause: Exception):
        super().__init__(f"{policy} failed at seed {seed}: {cause}")
        self.policy, self.seed, self.cause = policy, seed, cause


# --------------------------------------------------------------------------
# environment generators


def single_type_env(T=2100, lifetime=100, lam=1.0, mu=0.5, N=1, p_pos=0.5, **kw) -> EnvConfig:
    return EnvConfig(T, [lam], N, [TypeParams(0, lifetime, mu, TwoPoint(1, -1, p_pos))], **kw)


def disjoint_capacity_env(T=1100, lifetime=100, mu=1.0, **kw) -> EnvConfig:
    """Arrivals only in the first (T−ℓ)/2 periods, reviewers only from (T+ℓ)/2 on."""
    if (T - lifetime) % 2:
        raise ConfigurationError("T − lifetime must be even")
    a, b = (T - lifetime) // 2, (T + lifetime) // 2
    return EnvConfig(T, [Schedule([(1, 1.0), (a + 1, 0.0)])],
                     Schedule([(1, 0), (b, 1)]),
                     [TypeParams(0, lifetime, mu, TwoPoint(1, -1, 0.5))], **kw)


def nonstationary_env(T=50000, lifetime=500, block=500, high=400, n_high=9, n_low=2,
                      lam=(0.2, 0.4), mu=0.05, means=(-1.0, 0.1), std=1.0, r_max=2.0,
                      **kw) -> EnvConfig:
    """Two normal-cost types; reviewer count cycles high/low every ``block`` periods."""
    cap = Schedule.periodic(T, block, [(0, n_high), (high, n_low)])
    types = [TypeParams(k, lifetime, mu, Normal(m, std)) for k, m in enumerate(means)]
    return EnvConfig(T, list(lam), cap, types, r_max=r_max, **kw)


def label_driven_env(T=10000, l1=1000, ratio=0.1, switch=500, p1=0.6, mu=0.5,
                     p_harm2=0.95, l2=None, **kw) -> EnvConfig:
    """Only type 1 arrives until ``switch``; afterwards type 1 w.p. p1 and type 2 otherwise."""
    l2 = max(1, int(round(l1 * ratio))) if l2 is None else l2
    rates = [Schedule([(1, 1.0), (switch + 1, p1)]), Schedule([(1, 0.0), (switch + 1, 1 - p1)])]
    types = [TypeParams(0, l1, mu, TwoPoint(1, -1, 0.5)),
             TypeParams(1, l2, mu, TwoPoint(1, -1, p_harm2))]
    return EnvConfig(T, rates, 1, types, **kw)


GENERATORS: dict[str, Callable[..., EnvConfig]] = {
    "single_type": single_type_env,
    "disjoint_capacity": disjoint_capacity_env,
    "nonstationary": nonstationary_env,
    "label_driven": label_driven_env,
}

# sweep parameter name -> generator keyword
SWEEP_PARAMS = {"lifetime": "lifetime", "ratio": "ratio"}


# --------------------------------------------------------------------------
# scenarios


@dataclass
class PolicySpec:
    label: str
    name: str
    params: dict = field(default_factory=dict)


@dataclass
class Scenario:
    name: str
    generator: str | None = None
    params: dict = field(default_factory=dict)
    env: EnvConfig | None = None
    policies: list[PolicySpec] = field(default_factory=list)
    windows: list[int] = field(default_factory=lambda: [1])
    replications: int = 10
    base_seed: int = 0
    curves: list[str] = field(default_factory=list)
    curve_points: int = 50
    gap: tuple[str, str] | None = None
    sweep: dict | None = None
    figures: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    def build_env(self, **override) -> EnvConfig:
        if self.env is not None and not override:
            env = self.env
        elif self.generator is not None:
            try:
                gen = GENERATORS[self.generator]
            except KeyError:
                raise ConfigurationError(f"unknown generator {self.generator!r}") from None
            env = gen(**{**self.params, **override})
        else:
            raise ConfigurationError("scenario needs an env or a generator")
        bad = validate_env(env)
        if bad:
            raise ConfigurationError("invalid environment: " + "; ".join(map(str, bad)))
        return env

    def validate(self) -> None:
        for p in self.policies:
            if p.name not in REGISTRY:
                raise ConfigurationError(f"unknown policy {p.name!r}")
        if len({p.label for p in self.policies}) != len(self.policies):
            raise ConfigurationError("policy labels must be unique")
        if self.replications < 1:
            raise ConfigurationError("need at least one replication")
        if self.gap and not set(self.gap) <= {p.label for p in self.policies}:
            raise ConfigurationError("gap refers to an unknown policy label")
        self.build_env()

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        pols = [PolicySpec(p.get("label", p["name"]), p["name"], dict(p.get("params", {})))
                for p in d.get("policies", [])]
        env = EnvConfig.from_dict(d["env"]) if "env" in d else None
        return cls(name=d["name"], generator=d.get("generator"), params=dict(d.get("params", {})),
                   env=env, policies=pols, windows=list(d.get("windows", [1])),
                   replications=int(d.get("replications", 10)),
                   base_seed=int(d.get("base_seed", 0)), curves=list(d.get("curves", [])),
                   curve_points=int(d.get("curve_points", 50)),
                   gap=tuple(d["gap"]) if d.get("gap") else None, sweep=d.get("sweep"),
                   figures=dict(d.get("figures", {})), notes=dict(d.get("notes", {})))

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"name": self.name}
        if self.generator:
            d["generator"] = self.generator
            d["params"] = self.params
        if self.env is not None:
            d["env"] = self.env.to_dict()
        d.update(policies=[{"label": p.label, "name": p.name, "params": p.params}
                           for p in self.policies],
                 windows=self.windows, replications=self.replications,
                 base_seed=self.base_seed, curves=self.curves, curve_points=self.curve_points,
                 gap=list(self.gap) if self.gap else None, sweep=self.sweep,
                 figures=self.figures, notes=self.notes)
        return d

    def with_(self, **kw) -> "Scenario":
        d = {**self.__dict__, **kw}
        return Scenario(**d)


def preset_names() -> list[str]:
    root = resources.files("modsim") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_scenario(ref: str | os.PathLike) -> Scenario:
    """A preset name or a path to a scenario JSON file."""
    path = Path(ref)
    if path.suffix == ".json" and path.exists():
        text = path.read_text()
    else:
        res = resources.files("modsim") / "presets" / f"{ref}.json"
        if not res.is_file():
            raise ConfigurationError(f"no scenario file or preset named {ref!r}")
        text = res.read_text()
    return Scenario.from_dict(json.loads(text))


# --------------------------------------------------------------------------
# accumulation


class RunningStats:
    """Sums and sums of squares; merging is order independent."""

    def __init__(self, shape=()):
        self.n = 0
        self.s = np.zeros(shape)
        self.ss = np.zeros(shape)

    def add(self, x) -> None:
        x = np.asarray(x, dtype=float)
        self.n += 1
        self.s = self.s + x
        self.ss = self.ss + x * x

    @property
    def mean(self):
        return self.s / self.n if self.n else self.s * np.nan

    @property
    def stderr(self):
        if self.n < 2:
            return np.zeros_like(self.s)
        var = np.maximum(self.ss - self.s ** 2 / self.n, 0) / (self.n - 1)
        return np.sqrt(var / self.n)


@dataclass
class Curve:
    x: list
    xlabel: str
    ylabel: str
    series: dict = field(default_factory=dict)   # label -> (mean list, stderr list)


@dataclass
class RegretReport:
    scenario: str
    rows: list[dict] = field(default_factory=list)      # policy, w, x, mean, stderr, n
    diagnostics: dict = field(default_factory=dict)     # label -> {...}
    curves: dict[str, Curve] = field(default_factory=dict)
    fluid: dict = field(default_factory=dict)           # "w" -> L*
    per_seed: dict = field(default_factory=dict)        # label -> list of per-seed values

    def row(self, policy: str, w: int = 1, x=None) -> dict:
        for r in self.rows:
            if r["policy"] == policy and r["w"] == w and r["x"] == x:
                return r
        raise KeyError((policy, w, x))

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "rows": self.rows, "diagnostics": self.diagnostics,
                "fluid": self.fluid, "per_seed": self.per_seed,
                "curves": {k: {"x": c.x, "xlabel": c.xlabel, "ylabel": c.ylabel,
                               "series": c.series} for k, c in self.curves.items()}}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


# --------------------------------------------------------------------------
# experiments


def _checkpoints(T: int, n: int) -> list[int]:
    pts = np.unique(np.linspace(1, T, min(n, T)).round().astype(int))
    return pts.tolist()


def _learning_probe(sc: Scenario, T: int) -> int:
    if "bounds_t" not in sc.curves:
        return 0
    return max(1, T // sc.curve_points)


def run_experiment(scenario: Scenario, *, sweep_value=None, replications: int | None = None,
                   base_seed: int | None = None, out_dir=None, trace_dir=None) -> RegretReport:
    """Run every policy on every replication with paired seeds and aggregate regret."""
    sc = scenario
    sc.validate()
    R = sc.replications if replications is None else replications
    seed0 = sc.base_seed if base_seed is None else base_seed
    override = {}
    if sweep_value is not None:
        if not sc.sweep:
            raise ConfigurationError("scenario has no sweep parameter")
        override[SWEEP_PARAMS[sc.sweep["param"]]] = sweep_value
    env = sc.build_env(**override)
    T = env.horizon
    fluids: dict[int, FluidSolution] = {w: solve_w_fluid(env, w) for w in sc.windows}
    f1 = fluids[1] if 1 in fluids else solve_w_fluid(env, 1)
    checks = _checkpoints(T, sc.curve_points)
    L_prefix = np.cumsum(f1.per_period)[np.array(checks) - 1]
    probe_every = _learning_probe(sc, T)

    labels = [p.label for p in sc.policies]
    reg = {(lb, w): RunningStats() for lb in labels for w in sc.windows}
    per_seed = {lb: [] for lb in labels}
    decomp = {lb: RunningStats(3) for lb in labels}
    reviewed = {lb: RunningStats(env.K) for lb in labels}
    curves_acc: dict[str, dict[str, RunningStats]] = {c: {} for c in sc.curves}

    for rep in range(R):
        seed = seed0 + rep
        exo = draw_exogenous(env, seed)
        for spec in sc.policies:
            lb = spec.label
            try:
                pol = make_policy(spec.name, **spec.params)
                tr = run(env, pol, seed, exo=exo, probe_every=probe_every, validate=False)
            except Exception as e:
                raise ExperimentError(lb, seed, e) from e
            if trace_dir is not None and rep == 0:
                from .sim import write_trace
                Path(trace_dir).mkdir(parents=True, exist_ok=True)
                write_trace(tr, Path(trace_dir) / f"{sc.name}_{lb}_seed{seed}.jsonl")
            loss = realized_loss(tr)
            per_seed[lb].append(loss / T)
            for w in sc.windows:
                reg[(lb, w)].add((loss - fluids[w].objective) / T)
            dec = loss_decomposition(tr)
            decomp[lb].add([dec["idiosyncrasy"], dec["delay"], dec["classification"]])
            reviewed[lb].add(tr.reviewed_count())
            _accumulate_curves(curves_acc, lb, tr, checks, L_prefix)

    rep_ = RegretReport(sc.name)
    rep_.fluid = {str(w): f.objective for w, f in fluids.items()}
    for (lb, w), st in reg.items():
        rep_.rows.append({"policy": lb, "w": w, "x": sweep_value, "mean": float(st.mean),
                          "stderr": float(st.stderr), "n": st.n})
    rep_.per_seed = {lb: [float(v) for v in vals] for lb, vals in per_seed.items()}
    for lb in labels:
        m = decomp[lb].mean
        rep_.diagnostics[lb] = {
            "loss_decomposition": {"idiosyncrasy": float(m[0]), "delay": float(m[1]),
                                   "classification": float(m[2])},
            "reviewed_per_type": reviewed[lb].mean.tolist(),
        }
    for name, acc in curves_acc.items():
        if not acc:
            continue
        ylab = {"regret_t": "average regret", "queue_t": "queue length",
                "reviewed_t": "reviewed posts", "bounds_t": "confidence bound"}[name]
        c = Curve(checks if name != "bounds_t" else _probe_x(T, probe_every), "period", ylab)
        for key, st in acc.items():
            c.series[key] = (np.round(st.mean, 12).tolist(), np.round(st.stderr, 12).tolist())
        rep_.curves[name] = c
    if sc.gap:
        a, b = sc.gap
        d = np.array(rep_.per_seed[a]) - np.array(rep_.per_seed[b])
        st = RunningStats()
        for v in d:
            st.add(v)
        rep_.rows.append({"policy": f"{a}-{b}", "w": 1, "x": sweep_value,
                          "mean": float(st.mean), "stderr": float(st.stderr), "n": st.n})
    if out_dir is not None:
        write_report(rep_, out_dir, sc)
    return rep_


def _probe_x(T, every):
    return list(range(every, T + 1, every))


def _accumulate_curves(acc, lb, tr, checks, L_prefix):
    idx = np.array(checks) - 1
    for name in acc:
        if name == "regret_t":
            from .sim import loss_curve
            v = (loss_curve(tr, checks) - L_prefix) / np.array(checks)
            acc[name].setdefault(lb, RunningStats(len(checks))).add(v)
        elif name == "queue_t":
            for k in range(tr.env.K):
                acc[name].setdefault(f"{lb} type {k + 1}", RunningStats(len(checks))).add(
                    tr.queues[idx, k])
        elif name == "reviewed_t":
            done = tr.post_done
            for k in range(tr.env.K):
                times = np.sort(done[(done > 0) & (tr.post_type == k)])
                acc[name].setdefault(f"{lb} type {k + 1}", RunningStats(len(checks))).add(
                    np.searchsorted(times, checks, side="right"))
        elif name == "bounds_t" and tr.probes:
            for k in range(tr.env.K):
                for key in ("h_lo", "h_hat", "h_hi"):
                    vals = [p[k][key] for _, p in tr.probes]
                    acc[name].setdefault(f"{lb} {key} type {k + 1}",
                                         RunningStats(len(vals))).add(vals)


def sweep(scenario: Scenario, param: str | None = None, values=None, *,
          replications: int | None = None, out_dir=None) -> RegretReport:
    """One row block per value of the swept generator parameter."""
    sc = scenario
    if param is not None:
        if param not in SWEEP_PARAMS:
            raise ConfigurationError(f"cannot sweep {param!r}")
        sc = sc.with_(sweep={**(sc.sweep or {}), "param": param})
    if not sc.sweep:
        raise ConfigurationError("scenario has no sweep parameter")
    if values is None:
        values = sc.sweep.get("values", [])
    sc_run = sc.with_(curves=[])
    out = RegretReport(sc.name)
    for v in values:
        r = run_experiment(sc_run, sweep_value=v, replications=replications)
        out.rows.extend(r.rows)
        out.fluid[str(v)] = r.fluid
        out.per_seed[str(v)] = r.per_seed
        out.diagnostics[str(v)] = r.diagnostics
    if values:
        x = list(values)
        labels = sorted({r["policy"] for r in out.rows}, key=[r["policy"] for r in out.rows].index)
        c = Curve(x, sc.sweep["param"], "average regret")
        for lb in labels:
            rows = [next(r for r in out.rows if r["policy"] == lb and r["x"] == v and r["w"] == 1)
                    for v in x]
            c.series[lb] = ([r["mean"] for r in rows], [r["stderr"] for r in rows])
        out.curves["regret_x"] = c
    if out_dir is not None:
        write_report(out, out_dir, sc)
    return out


def write_report(report: RegretReport, out_dir, scenario: Scenario | None = None) -> list[Path]:
    from .figures import emit_figures
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{report.scenario}_report.json").write_text(report.to_json(indent=1, sort_keys=True))
    names = dict(scenario.figures) if scenario else {}
    return emit_figures(report, out, names)


def default_out_dir() -> Path:
    return Path(os.environ.get("MODSIM_OUT", "out"))


def endpoint_ratio(report: RegretReport, policy: str, w: int = 1) -> float:
    rows = sorted((r for r in report.rows if r["policy"] == policy and r["w"] == w),
                  key=lambda r: r["x"])
    lo, hi = rows[0]["mean"], rows[-1]["mean"]
    return hi / lo if lo > 0 else math.inf


__all__ = ["Scenario", "PolicySpec", "RegretReport", "Curve", "RunningStats", "ExperimentError",
           "run_experiment", "sweep", "load_scenario", "preset_names", "write_report",
           "endpoint_ratio", "GENERATORS", "single_type_env", "disjoint_capacity_env",
           "nonstationary_env", "label_driven_env", "default_out_dir"]

"""Command line entry point: simulate, fluid, replay, sweep."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .fluid import solve_w_fluid
from .harness import (ExperimentError, default_out_dir, load_scenario, preset_names,
                      run_experiment, sweep)
from .model import EnvConfig, ValidationError, validate_env
from .policies import ConfigurationError, make_policy
from .sim import ContractViolation, littles_law, read_trace, realized_loss, run

EXIT_INVALID = 2
EXIT_CONTRACT = 3


def _list(s: str, cast=float) -> list:
    return [cast(v) for v in s.replace(",", " ").split()]


def _print_rows(report) -> None:
    print(f"{'policy':<22}{'w':>6}{'x':>10}{'mean':>14}{'stderr':>12}{'n':>5}")
    for r in report.rows:
        x = "" if r["x"] is None else f"{r['x']:g}"
        print(f"{r['policy']:<22}{r['w']:>6}{x:>10}{r['mean']:>14.5f}{r['stderr']:>12.5f}"
              f"{r['n']:>5}")


def cmd_simulate(args) -> int:
    sc = load_scenario(args.scenario)
    out = Path(args.out) if args.out else default_out_dir()
    rep = run_experiment(sc, replications=args.reps, base_seed=args.seed, out_dir=out,
                         trace_dir=out / "traces" if args.traces else None)
    _print_rows(rep)
    print(f"wrote {out}")
    return 0


def cmd_sweep(args) -> int:
    sc = load_scenario(args.scenario)
    cast = int if args.param == "lifetime" else float
    values = _list(args.values, cast) if args.values else None
    out = Path(args.out) if args.out else default_out_dir()
    rep = sweep(sc, args.param, values, replications=args.reps, out_dir=out)
    _print_rows(rep)
    print(f"wrote {out}")
    return 0


def cmd_fluid(args) -> int:
    env = EnvConfig.from_json(Path(args.env).read_text())
    bad = validate_env(env)
    if bad:
        raise ValidationError("; ".join(map(str, bad)))
    result = {}
    for w in _list(args.w, int):
        sol = solve_w_fluid(env, w)
        result[str(w)] = {"objective": sol.objective, "average": sol.objective / env.horizon,
                          "windows": len(sol.windows)}
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            (Path(args.out) / f"fluid_w{w}.json").write_text(sol.to_json())
    print(json.dumps(result, indent=1))
    return 0


def cmd_replay(args) -> int:
    """Re-simulate a stored trace from its header and compare period records."""
    tr = read_trace(args.trace)
    pol = make_policy(tr.policy, **(tr.policy_params or {}))
    again = run(tr.env, pol, tr.seed)
    fields = ("arrival", "keep", "admit", "label", "scheduled", "served", "queues", "ld_queue",
              "post_done")
    diff = [f for f in fields if not np.array_equal(getattr(tr, f), getattr(again, f))]
    lhs, rhs = littles_law(tr)
    print(json.dumps({"policy": tr.policy, "seed": tr.seed, "periods": int(len(tr.keep)),
                      "loss": realized_loss(tr), "littles_law": [lhs, rhs],
                      "reproduced": not diff, "mismatched": diff}, indent=1))
    return 0 if not diff and lhs == rhs else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="modsim", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("simulate", help="run a scenario file or preset")
    s.add_argument("--scenario", required=True, help=f"file or one of {preset_names()}")
    s.add_argument("--reps", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", default=None, help="output directory (default $MODSIM_OUT or ./out)")
    s.add_argument("--traces", action="store_true", help="also write replication-0 traces")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fluid", help="solve the windowed fluid benchmark")
    f.add_argument("--env", required=True)
    f.add_argument("--w", required=True, help="window sizes, comma separated")
    f.add_argument("--out", default=None)
    f.set_defaults(func=cmd_fluid)

    r = sub.add_parser("replay", help="re-run a stored trace and check it reproduces")
    r.add_argument("--trace", required=True)
    r.set_defaults(func=cmd_replay)

    w = sub.add_parser("sweep", help="sweep a generator parameter")
    w.add_argument("--scenario", required=True)
    w.add_argument("--param", required=True, choices=["lifetime", "ratio"])
    w.add_argument("--values", default=None, help="comma separated; default from the scenario")
    w.add_argument("--reps", type=int, default=None)
    w.add_argument("--out", default=None)
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ConfigurationError, FileNotFoundError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except ExperimentError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONTRACT if isinstance(e.cause, ContractViolation) else EXIT_INVALID
    except ContractViolation as e:
        print(f"contract violation: {e}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())

"""Command line front end: solve, simulate, figures, check.

Exit codes: 0 success, 1 validation error, 2 numerical failure,
3 acceptance failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace

import numpy as np

from .config import ConfigError, MCSpec, RunSpec, load_config
from .figures import run_figures
from .checks import run_check
from .grid import GridError, build_grid
from .model import DomainError
from .simulator import PolicySpec, estimate_value
from .solver import SolverError, iterate

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_ACCEPTANCE = 3

ENV_SEED = "BONUSMALUS_MC_SEED"
ENV_N_PATHS = "BONUSMALUS_MC_N_PATHS"


def _apply_env_overrides(spec: RunSpec) -> RunSpec:
    """Only mc.seed and mc.n_paths may be overridden from the environment."""
    seed, n_paths = spec.mc.seed, spec.mc.n_paths
    for env, cast in ((ENV_SEED, "seed"), (ENV_N_PATHS, "n_paths")):
        raw = os.environ.get(env)
        if raw is None:
            continue
        try:
            val = int(raw)
        except ValueError:
            raise ConfigError(f"environment override {env}={raw!r} is not an integer")
        if cast == "seed":
            seed = val
        else:
            if val < 2:
                raise ConfigError(f"{env} must be at least 2")
            n_paths = val
    if (seed, n_paths) == (spec.mc.seed, spec.mc.n_paths):
        return spec
    return replace(spec, mc=MCSpec(n_paths=n_paths, seed=seed))


def _parse_policy(arg: str, spec: RunSpec) -> PolicySpec:
    if arg == "grid":
        grid = build_grid(spec.model, spec.grid)
        result = iterate(spec.model, grid, spec.control)
        if result.barrier is None:
            raise ConfigError("policy `grid` needs an optimize-mode control section")
        return PolicySpec.from_field(result.barrier)
    if arg.startswith("const:"):
        raw = arg[len("const:"):]
        b = math.inf if raw in ("inf", "Inf", "INF") else float(raw)
        return PolicySpec.constant(b)
    raise ConfigError(f"policy must be `grid` or `const:B`, got {arg!r}")


def _parse_init(arg: str):
    parts = arg.split(",")
    if len(parts) != 4:
        raise ConfigError("--init expects i,t,s,x")
    try:
        i = int(parts[0])
        t, s, x = (float(v) for v in parts[1:])
    except ValueError:
        raise ConfigError(f"could not parse --init {arg!r}")
    return i, t, s, x


def _cmd_solve(spec: RunSpec, out_dir: str | None) -> int:
    out_dir = spec.output_dir if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    grid = build_grid(spec.model, spec.grid)
    result = iterate(spec.model, grid, spec.control)
    arrays = {"t": grid.t, "x": grid.x,
              "v1": result.value.v1, "v2": result.value.v2}
    if result.barrier is not None:
        arrays["b1"] = result.barrier.b1
        arrays["b2"] = result.barrier.b2
    np.savez_compressed(os.path.join(out_dir, "solve_fields.npz"), **arrays)
    meta = {
        "iterations_used": result.iterations_used,
        "sup_change_history": result.sup_change_history,
        "mode": spec.control.mode,
        "grid": {"h_t": grid.h_t, "h_x": grid.h_x, "n_t": grid.n_t, "n_x": grid.n_x},
    }
    with open(os.path.join(out_dir, "solve_meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    print(f"solved in {result.iterations_used} sweeps; fields written to {out_dir}")
    return EXIT_OK


def _cmd_simulate(spec: RunSpec, policy_arg: str, init_arg: str) -> int:
    policy = _parse_policy(policy_arg, spec)
    init = _parse_init(init_arg)
    res = estimate_value(spec.model, policy, init, spec.mc.n_paths, spec.mc.seed)
    print(json.dumps({"mean": res.mean, "stderr": res.stderr,
                      "n_paths": res.n_paths, "seed": res.seed}, indent=2))
    return EXIT_OK


def _cmd_figures(spec: RunSpec) -> int:
    written = run_figures(spec)
    for path in written:
        print(path)
    return EXIT_OK


def _cmd_check(spec: RunSpec) -> int:
    code, results = run_check(spec)
    for res in results:
        print(res.summary_line())
    print(f"report: {os.path.join(spec.output_dir, 'check_report.json')}")
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bonusmalus",
        description="Optimal claim reporting in a two-class bonus-malus contract.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve the control problem, export fields")
    p_solve.add_argument("config")
    p_solve.add_argument("--out", default=None, help="output directory override")

    p_sim = sub.add_parser("simulate", help="Monte Carlo value of a policy")
    p_sim.add_argument("config")
    p_sim.add_argument("--policy", required=True, help="`grid` or `const:B` (B may be inf)")
    p_sim.add_argument("--init", required=True, help="initial state i,t,s,x")

    p_fig = sub.add_parser("figures", help="export the figure series as CSV")
    p_fig.add_argument("config")

    p_check = sub.add_parser("check", help="run the acceptance suite")
    p_check.add_argument("config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = _apply_env_overrides(load_config(args.config))
        if args.command == "solve":
            return _cmd_solve(spec, args.out)
        if args.command == "simulate":
            return _cmd_simulate(spec, args.policy, args.init)
        if args.command == "figures":
            return _cmd_figures(spec)
        return _cmd_check(spec)
    except (ConfigError, DomainError, GridError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SolverError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())

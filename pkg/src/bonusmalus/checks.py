"""The acceptance suite behind the `check` subcommand.

Each criterion is a standalone function over a shared CheckContext so
the test suite and the CLI report run exactly the same computations.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .config import RunSpec
from .figures import figure_series, run_figures
from .grid import GridError, build_grid
from .simulator import PolicySpec, dpp_residual, estimate_value, _terminal_utilities
from .solver import (
    SolveControl,
    iterate,
    sweep_characteristic,
    _init_v0,
    _terminal_field,
)

__all__ = ["CheckResult", "CheckContext", "run_check", "ALL_CRITERIA"]

_GAP_BUDGET = 0.02  # absolute discretization allowance in the MC comparisons


@dataclass(frozen=True)
class CheckResult:
    cid: int
    name: str
    passed: bool
    details: dict

    def summary_line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] criterion {self.cid}: {self.name}"


class CheckContext:
    """Lazily computed shared artifacts (grid, solves, MC runs)."""

    def __init__(self, spec: RunSpec):
        self.spec = spec
        self.params = spec.model

    @cached_property
    def grid(self):
        return build_grid(self.params, self.spec.grid)

    @cached_property
    def optimal(self):
        control = self.spec.control
        if control.mode != "optimize" or control.paper_mode:
            control = SolveControl(mode="optimize", tol=1e-6)
        return iterate(self.params, self.grid, control)

    @cached_property
    def paper(self):
        return iterate(self.params, self.grid, SolveControl(paper_mode=True))

    @cached_property
    def grid_policy(self):
        return PolicySpec.from_field(self.optimal.barrier)

    def fixed_solve(self, b: float):
        if not hasattr(self, "_fixed_cache"):
            self._fixed_cache = {}
        if b not in self._fixed_cache:
            control = SolveControl(mode="fixed", fixed_barrier=b, iterations=20)
            self._fixed_cache[b] = iterate(self.params, self.grid, control)
        return self._fixed_cache[b]

    def lipschitz_budget(self) -> float:
        """Discrete Lipschitz constant of the terminal utility on the window."""
        g = self.grid
        h_vals = self.params.utility(g.x[g.kx_lo: g.kx_hi + 1])
        return float(np.max(np.abs(np.diff(h_vals))) / g.h_x)


def _window_rows(field):
    """Yield (i, kt, ks, in-window row) over every valid node row."""
    g = field.grid
    for i in (1, 2):
        for kt in range(g.n_t + 1):
            for ks in range(g.n_s(i, kt)):
                yield i, kt, ks, field.window(i, kt, ks)


def criterion_1(ctx: CheckContext) -> CheckResult:
    """Terminal layer equals the utility of wealth at every node."""
    g = ctx.grid
    h_row = np.asarray(ctx.params.utility(g.x), dtype=float)
    worst = 0.0
    for i in (1, 2):
        arr = ctx.optimal.value.array(i)
        for ks in range(g.n_s(i, g.n_t)):
            worst = max(worst, float(np.max(np.abs(arr[g.n_t, ks] - h_row))))
    passed = worst <= 1e-12
    return CheckResult(1, "terminal identity", passed,
                       {"max_error": worst, "tolerance": 1e-12})


def criterion_2(ctx: CheckContext) -> CheckResult:
    """Class-2 upgrade row equals the class-1 fresh-clock row exactly."""
    g = ctx.grid
    v = ctx.optimal.value
    worst = 0.0
    for kt in range(g.k_S, g.n_t + 1):
        worst = max(worst, float(np.max(np.abs(v.v2[kt, g.k_S] - v.v1[kt, 0]))))
    return CheckResult(2, "boundary identity", worst == 0.0,
                       {"max_error": worst, "tolerance": 0.0})


def criterion_3(ctx: CheckContext) -> CheckResult:
    """Zero-jump closed forms and the pure-transport sweep."""
    g = ctx.grid
    p = ctx.params
    v0 = iterate(p, g, SolveControl(mode="optimize", iterations=0)).value
    worst0 = 0.0
    for i, kt, ks, _ in _window_rows(v0):
        row = v0.row(i, kt, ks)
        exact = p.v0(i, g.t[kt], g.h_t * ks, g.x)
        worst0 = max(worst0, float(np.max(np.abs(row - exact))))

    # Pure transport: a vanishing claim intensity leaves only the drift.
    p_adv = replace(p, intensity_lambda=1e-12)
    g_adv = build_grid(p_adv, ctx.spec.grid)
    adv = iterate(p_adv, g_adv, SolveControl(mode="fixed", fixed_barrier=math.inf,
                                             iterations=1)).value
    worst_adv = 0.0
    x_win = g_adv.x[g_adv.kx_lo: g_adv.kx_hi + 1]
    S = p_adv.class2_reset_S
    for i, kt, ks, row in _window_rows(adv):
        s = g_adv.h_t * ks
        tau = p_adv.horizon_T - g_adv.t[kt]
        if i == 2 and s + tau > S:
            # the clock hits S before maturity: upgrade, then class-1 drift
            drift = (p_adv.drift_integral(2, s, S - s)
                     + p_adv.drift_integral(1, 0.0, tau - (S - s)))
        else:
            drift = p_adv.drift_integral(i, s, tau)
        exact = np.asarray(p_adv.utility(x_win + drift), dtype=float)
        worst_adv = max(worst_adv, float(np.max(np.abs(row - exact))))
    tol_adv = 2.0 * g.h_x * ctx.lipschitz_budget()
    passed = worst0 <= 1e-10 and worst_adv <= tol_adv
    return CheckResult(3, "base-case oracle", passed,
                       {"v0_max_error": worst0, "v0_tolerance": 1e-10,
                        "transport_sup_error": worst_adv, "transport_tolerance": tol_adv})


def criterion_4(ctx: CheckContext) -> CheckResult:
    """Fixed constant barriers: PIDE solve against the Monte Carlo oracle."""
    cases = []
    passed = True
    mc = ctx.spec.mc
    for b in (0.0, 1.0, math.inf):
        solve = ctx.fixed_solve(b)
        pol = PolicySpec.constant(b)
        for i in (1, 2):
            for x in (0.0, 2.5, 5.0):
                est = estimate_value(ctx.params, pol, (i, 0.0, 0.0, x),
                                     mc.n_paths, mc.seed)
                gv = solve.value.evaluate(i, 0.0, 0.0, x)
                gap = abs(gv - est.mean)
                tol = 3.0 * est.stderr + _GAP_BUDGET
                ok = gap <= tol
                passed = passed and ok
                cases.append({"b": "inf" if math.isinf(b) else b, "i": i, "x": x,
                              "grid": gv, "mc": est.mean, "gap": gap,
                              "tolerance": tol, "passed": ok})
    return CheckResult(4, "solver vs Monte Carlo (fixed barriers)", passed,
                       {"cases": cases})


def criterion_5(ctx: CheckContext) -> CheckResult:
    """Extracted policy at least matches every constant barrier (paired CRN)."""
    mc = ctx.spec.mc
    cases = []
    passed = True
    for i in (1, 2):
        init = (i, 0.0, 0.0, 2.5)
        u_grid = _terminal_utilities(ctx.params, ctx.grid_policy, init,
                                     mc.n_paths, mc.seed)
        for b in (0.0, 0.25, 0.5, 1.0, math.inf):
            u_const = _terminal_utilities(ctx.params, PolicySpec.constant(b), init,
                                          mc.n_paths, mc.seed)
            diff = u_grid - u_const
            margin = float(diff.mean())
            se = float(diff.std(ddof=1) / math.sqrt(mc.n_paths))
            ok = margin >= -3.0 * se
            passed = passed and ok
            cases.append({"i": i, "b": "inf" if math.isinf(b) else b,
                          "margin": margin, "paired_stderr": se, "passed": ok})
    return CheckResult(5, "optimality vs constant barriers", passed, {"cases": cases})


def criterion_6(ctx: CheckContext) -> CheckResult:
    """Dynamic programming residual of the solved field."""
    mc = ctx.spec.mc
    res = dpp_residual(ctx.params, ctx.optimal, (1, 0.0, 0.0, 2.5),
                       mc.n_paths, mc.seed, horizon_h=0.5)
    tol = 3.0 * res.stderr + _GAP_BUDGET
    return CheckResult(6, "DPP residual", res.residual <= tol,
                       {"residual": res.residual, "stderr": res.stderr,
                        "tolerance": tol, "grid_value": res.grid_value,
                        "mc_mean": res.mc_mean})


def criterion_7(ctx: CheckContext) -> CheckResult:
    """Monotonicity: in wealth, across classes, in the clock, across iterates."""
    g = ctx.grid
    v = ctx.optimal.value
    worst_x = 0.0
    worst_s = 0.0
    for i in (1, 2):
        arr = v.array(i)
        for kt in range(g.n_t + 1):
            ns = g.n_s(i, kt)
            block = arr[kt, :ns, :]
            worst_x = max(worst_x, float(np.max(-np.diff(block, axis=1), initial=0.0)))
            if ns > 1:
                worst_s = max(worst_s, float(np.max(-np.diff(block, axis=0), initial=0.0)))
    worst_cls = 0.0
    for kt in range(g.n_t + 1):
        ns2 = g.n_s(2, kt)
        gap = v.v2[kt, :ns2, :] - v.v1[kt, 0, :][None, :]
        worst_cls = max(worst_cls, float(np.max(gap, initial=0.0)))

    # Jump-count iterates decrease pointwise for a nonpositive utility;
    # compared on the reporting window (outside it the padded buffer's
    # flat clamp is only an absorbing approximation).  The first step is
    # measured against the exact closed form, which is not a discrete
    # supersolution of the upwind scheme, so it gets the same O(h_x)
    # truncation allowance as the transport oracle; later steps compare
    # two outputs of the same scheme and must be monotone to round-off.
    control = SolveControl(mode="optimize", iterations=3)
    prev = _init_v0(g)
    sl = slice(g.kx_lo, g.kx_hi + 1)
    first_slack = 2.0 * g.h_x * ctx.lipschitz_budget()
    step_viol = []
    for _ in range(3):
        cur = _terminal_field(g)
        sweep_characteristic(prev, cur, control)
        worst = max(
            float(np.nanmax(cur.array(i)[:, :, sl] - prev.array(i)[:, :, sl]))
            for i in (1, 2)
        )
        step_viol.append(worst)
        prev = cur
    iter_ok = step_viol[0] <= first_slack and all(v <= 1e-12 for v in step_viol[1:])
    passed = (worst_x <= 1e-10 and worst_s <= 1e-10
              and worst_cls <= 1e-9 and iter_ok)
    return CheckResult(7, "monotonicity suite", passed,
                       {"x_violation": worst_x, "x_slack": 1e-10,
                        "s_violation": worst_s, "s_slack": 1e-10,
                        "class_violation": worst_cls, "class_slack": 1e-9,
                        "iterate_violations": step_viol,
                        "iterate_first_slack": first_slack,
                        "iterate_later_slack": 1e-12})


def criterion_8(ctx: CheckContext) -> CheckResult:
    """Discrete wealth-Lipschitz constant of the solution."""
    g = ctx.grid
    measured = 0.0
    for _, _, _, row in _window_rows(ctx.optimal.value):
        measured = max(measured, float(np.max(np.abs(np.diff(row))) / g.h_x))
    budget = ctx.lipschitz_budget() + 0.05
    return CheckResult(8, "Lipschitz bound", measured <= budget,
                       {"measured": measured, "budget": budget})


def criterion_9(ctx: CheckContext) -> CheckResult:
    """Qualitative figure reproduction on the five-sweep solve."""
    g = ctx.grid
    series = figure_series(ctx.paper)
    details: dict = {}
    ok = True

    t4, b4 = series["fig4a.csv"][1].T
    tail = b4[t4 >= 0.75 * ctx.params.horizon_T]
    mono_tail = bool(np.all(np.diff(tail) <= 1e-12))
    b_last = float(b4[-2])  # last interior layer
    near0 = abs(b_last) <= 2.0 * g.h_x
    details["fig4a"] = {"tail_nonincreasing": mono_tail,
                        "last_interior_barrier": b_last,
                        "near_zero_tolerance": 2.0 * g.h_x}
    ok = ok and mono_tail and near0

    t4b, b4b = series["fig4b.csv"][1].T
    idx = int(np.argmin(np.abs(t4b - 1.6)))
    gap_15 = abs(float(b4b[idx]) - 0.15)
    ok_15 = gap_15 <= 2.0 * g.h_x
    details["fig4b"] = {"barrier_at_1.6": float(b4b[idx]), "gap_to_0.15": gap_15,
                        "tolerance": 2.0 * g.h_x}
    ok = ok and ok_15

    for name, cols in (("fig1.csv", (1, 2)), ("fig3.csv", (1, 2))):
        data = series[name][1]
        for c in cols:
            mono = bool(np.all(np.diff(data[:, c]) >= -1e-10))
            details.setdefault(name, {})[f"column_{c}_nondecreasing"] = mono
            ok = ok and mono
    fig2 = series["fig2.csv"][1]
    dom = bool(np.all(fig2[:, 1] >= fig2[:, 2] - 1e-9))
    details["fig2.csv"] = {"class1_dominates": dom}
    ok = ok and dom
    return CheckResult(9, "figure reproduction", ok, details)


def criterion_10(ctx: CheckContext, work_dir: str) -> CheckResult:
    """Byte-identical figure CSVs and exactly repeatable simulation."""
    import filecmp

    dirs = [os.path.join(work_dir, d) for d in ("det_a", "det_b")]
    for d in dirs:
        run_figures(ctx.spec, out_dir=d)
    names = sorted(os.listdir(dirs[0]))
    identical = all(
        filecmp.cmp(os.path.join(dirs[0], n), os.path.join(dirs[1], n), shallow=False)
        for n in names
    )
    mc = ctx.spec.mc
    init = (1, 0.0, 0.0, 2.5)
    r1 = estimate_value(ctx.params, ctx.grid_policy, init, mc.n_paths, mc.seed)
    r2 = estimate_value(ctx.params, ctx.grid_policy, init, mc.n_paths, mc.seed)
    repeatable = r1 == r2
    return CheckResult(10, "determinism", identical and repeatable,
                       {"figures_byte_identical": identical,
                        "simulation_repeatable": repeatable,
                        "files": names})


ALL_CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
                criterion_6, criterion_7, criterion_8, criterion_9, criterion_10)


def run_check(spec: RunSpec, out_dir: str | None = None) -> tuple[int, list[CheckResult]]:
    """Run all criteria, write check_report.json, return (exit_code, results).

    A structural failure while preparing a criterion (for example a CFL
    violation in the grid) is recorded as a failed criterion naming the
    cause rather than aborting the whole report.
    """
    out_dir = spec.output_dir if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    ctx = CheckContext(spec)
    results: list[CheckResult] = []
    for fn in ALL_CRITERIA:
        try:
            if fn is criterion_10:
                res = fn(ctx, out_dir)
            else:
                res = fn(ctx)
        except (GridError, ValueError) as exc:
            cid = int(fn.__name__.rsplit("_", 1)[1])
            res = CheckResult(cid, fn.__doc__.splitlines()[0].rstrip("."), False,
                              {"error": f"{type(exc).__name__}: {exc}"})
        results.append(res)

    report = {
        "all_passed": all(r.passed for r in results),
        "criteria": [
            {"id": r.cid, "name": r.name, "passed": r.passed, "details": r.details}
            for r in results
        ],
    }
    with open(os.path.join(out_dir, "check_report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, default=float)
        fh.write("\n")
    return (0 if report["all_passed"] else 3), results

"""Backward solver for the coupled reporting-control PIDE system.

The value surfaces are built by a jump-count iteration: each pass
transports the new iterate along the exact (t, s)-characteristics with
an explicit upwind step in wealth, while the claim integral is taken on
the previous iterate.  In optimize mode the barrier maximization is
fused into every step (pointwise argmax over the candidate ladder) and
the chosen barriers are recorded on the same grid as the values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernel
from .grid import (
    INFINITE_BARRIER,
    UNSET_BARRIER,
    BarrierField,
    Grid,
    GridError,
    ValueField,
    apply_boundary,
    interp_x,
)
from .model import DomainError, ModelParams

__all__ = [
    "SolverError",
    "NumericsError",
    "ConvergenceError",
    "SolveControl",
    "SolveResult",
    "jump_operator",
    "optimal_jump_operator",
    "sweep_characteristic",
    "iterate",
]


class SolverError(RuntimeError):
    pass


class NumericsError(SolverError):
    """The scheme produced a non-finite value."""


class ConvergenceError(SolverError):
    """The sup-change stop rule never fired within the iteration cap."""

    def __init__(self, message: str, history: list[float]):
        super().__init__(message)
        self.history = history


@dataclass
class SolveControl:
    """What to solve and when to stop.

    mode "optimize" maximizes over the candidate barriers at every step;
    mode "fixed" evaluates a given barrier (a constant or a BarrierField).
    Exactly one stop rule is active: a fixed iteration count or a
    sup-norm change tolerance.  paper_mode forces optimize with 5 sweeps.
    """

    mode: str = "optimize"
    fixed_barrier: float | BarrierField | None = None
    iterations: int | None = None
    tol: float | None = None
    paper_mode: bool = False
    max_iterations: int = 200

    def __post_init__(self):
        if self.paper_mode:
            self.mode = "optimize"
            self.iterations = 5
            self.tol = None
        if self.mode not in ("optimize", "fixed"):
            raise ValueError(f"unknown solve mode {self.mode!r}")
        if self.mode == "fixed" and self.fixed_barrier is None:
            raise ValueError("fixed mode needs a fixed_barrier")
        if self.iterations is None and self.tol is None:
            self.tol = 1e-6
        if self.iterations is not None and self.tol is not None:
            raise ValueError("give either a fixed iteration count or a tolerance, not both")
        if self.iterations is not None and self.iterations < 0:
            raise ValueError("iteration count must be >= 0")
        if self.tol is not None and not self.tol > 0.0:
            raise ValueError("tolerance must be positive")


@dataclass
class SolveResult:
    value: ValueField
    barrier: BarrierField | None
    iterations_used: int
    sup_change_history: list[float]


# ---------------------------------------------------------------------------
# reference jump operator (plain Python, used by tests and single-node calls)

def _cell(va: float, vb: float, Fa: float, Fb: float) -> float:
    return 0.5 * (va + vb) * (Fb - Fa)


def jump_operator(prev: ValueField, i: int, kt: int, ks: int, x: float, b: float) -> float:
    """Claim-arrival term of the generator at one node under barrier ``b``.

    Claims up to b are kept (integral against the class-i surface at the
    same clock), claims above are reported (integral against the class-2
    fresh-clock surface at the retained amount); beyond max(b, m) the
    reported integrand is constant, so that tail is exact.
    """
    if b < 0.0:
        raise DomainError(f"barrier must be nonnegative, got {b}")
    g = prev.grid
    p = g.params
    law = p.claim_law
    lam = p.intensity_lambda
    m = p.deductible(i)
    h = g.h_x

    def vi(y):
        return interp_x(prev, i, kt, ks, x - y)

    def v2(y):
        return interp_x(prev, 2, kt, 0, x - y)

    cdf = law.cdf
    total = 0.0

    # keep branch on [0, min(b, y_max)] plus flat extension if b > y_max
    b_eff = min(b, g.y_max)
    jb = int(math.floor(b_eff / h + 1e-12))
    for j in range(jb):
        total += _cell(vi(j * h), vi((j + 1) * h), cdf(j * h), cdf((j + 1) * h))
    if b_eff > jb * h:
        total += _cell(vi(jb * h), vi(b_eff), cdf(jb * h), cdf(b_eff))
    sf_b = 0.0 if math.isinf(b) else law.sf(b)
    if b > g.y_max:
        total += vi(g.y_max) * (law.sf(g.y_max) - sf_b)

    # report branch on [b, inf)
    if not math.isinf(b):
        if b >= m:
            total += v2(m) * sf_b
        else:
            lo_j = int(math.ceil(b / h - 1e-12))
            hi_j = int(math.floor(m / h + 1e-12))
            if lo_j * h > b:
                total += _cell(v2(b), v2(min(lo_j * h, m)), cdf(b), cdf(min(lo_j * h, m)))
            for j in range(lo_j, hi_j):
                total += _cell(v2(j * h), v2((j + 1) * h), cdf(j * h), cdf((j + 1) * h))
            if m > hi_j * h >= b:
                total += _cell(v2(hi_j * h), v2(m), cdf(hi_j * h), cdf(m))
            total += v2(m) * law.sf(m)
    return lam * total


def optimal_jump_operator(prev: ValueField, i: int, kt: int, ks: int, x: float,
                          candidates=None) -> tuple[float, float]:
    """Maximize the jump operator over the barrier candidates.

    Ties go to the smallest barrier; the never-report candidate comes last.
    """
    g = prev.grid
    if candidates is None:
        candidates = list(g.barrier_candidates()) + [math.inf]
    cands = list(candidates)
    if not cands:
        raise DomainError("empty candidate set")
    cands.sort()
    best_val = -math.inf
    best_b = cands[0]
    for b in cands:
        val = jump_operator(prev, i, kt, ks, x, b)
        if val > best_val:
            best_val = val
            best_b = b
    return best_val, best_b


# ---------------------------------------------------------------------------
# fast path helpers

def _report_setup(g: Grid, i: int, prev_v20: np.ndarray):
    """Per-layer quantities of the report branch of class i."""
    p = g.params
    m = p.deductible(i)
    h = g.h_x
    if m > g.y_max:
        raise GridError(f"deductible m{i}={m} exceeds the claim ladder y_max={g.y_max}")
    jm = int(math.floor(m / h + 1e-12))
    j_ge_m = int(math.ceil(m / h - 1e-12))
    sf_m = p.claim_law.sf(m)
    v2m = prev_v20 if m == 0.0 else np.interp(g.x - m, g.x, prev_v20)
    return m, jm, j_ge_m, sf_m, np.ascontiguousarray(v2m)


def _jump_row_eval(prev: ValueField, i: int, kt: int, ks: int):
    """Optimal jump operator and argmax along one full wealth row."""
    g = prev.grid
    p = g.params
    J = g.n_y
    dF = np.ascontiguousarray(g.sf_y[:-1] - g.sf_y[1:])
    prev_v20 = np.ascontiguousarray(prev.row(2, kt, 0))
    _, jm, j_ge_m, sf_m, v2m = _report_setup(g, i, prev_v20)
    pp = _kernel._pad_row(np.ascontiguousarray(prev.row(i, kt, ks)), J)
    pp2 = _kernel._pad_row(prev_v20, J)
    vals = np.empty(g.n_x)
    args = np.empty(g.n_x, dtype=np.int32)
    dummy = np.zeros(g.n_x, dtype=np.int32)
    _kernel._jump_row(pp, pp2, v2m, dF, g.sf_y, sf_m, j_ge_m, jm,
                      p.intensity_lambda, g.cand_stride, 0, dummy, vals, args)
    return vals, args


def _fixed_index_arrays(grid: Grid, control: SolveControl):
    fb = control.fixed_barrier
    if isinstance(fb, BarrierField):
        if fb.grid is not grid:
            raise GridError("fixed BarrierField was built on a different grid")
        for i in (1, 2):
            arr = fb.array(i)
            for kt in range(grid.n_t + 1):
                if np.any(arr[kt, : grid.n_s(i, kt), :] == UNSET_BARRIER):
                    raise DomainError("fixed BarrierField has unset entries")
        return fb.b1, fb.b2
    const = BarrierField.constant(grid, float(fb))
    return const.b1, const.b2


def sweep_characteristic(prev_iterate: ValueField, current: ValueField,
                         control: SolveControl, barrier_out: BarrierField | None = None,
                         fixed_indices=None) -> ValueField:
    """Fill ``current`` backward in time from its terminal layer.

    ``prev_iterate`` supplies the claim integrands; in optimize mode the
    per-node argmax barriers are written into ``barrier_out`` at the
    departure nodes (every layer except t = 0).
    """
    g = current.grid
    p = g.params
    lam = p.intensity_lambda
    ht, hx = g.h_t, g.h_x
    dF = np.ascontiguousarray(g.sf_y[:-1] - g.sf_y[1:])
    a1 = np.ascontiguousarray(p.income_c - p.premium1.rate(g.s1))
    a2 = np.ascontiguousarray(p.income_c - p.premium2.rate(g.s2))

    mode = 0 if control.mode == "optimize" else 1
    if mode == 1 and fixed_indices is None:
        fixed_indices = _fixed_index_arrays(g, control)
    dummy_b = np.zeros((g.n_t + 2, 1), dtype=np.int32)

    for kt in range(g.n_t - 1, -1, -1):
        prev_v20 = np.ascontiguousarray(prev_iterate.v2[kt + 1, 0])
        for i, (cur_a, prev_a, a_rates) in (
            (1, (current.v1, prev_iterate.v1, a1)),
            (2, (current.v2, prev_iterate.v2, a2)),
        ):
            ns_target = g.n_s(i, kt) if i == 1 else min(kt + 1, g.k_S)
            _, jm, j_ge_m, sf_m, v2m = _report_setup(g, i, prev_v20)
            if mode == 1:
                fixed_next = fixed_indices[i - 1][kt + 1]
                b_next = dummy_b
            else:
                fixed_next = (barrier_out.array(i) if barrier_out is not None
                              else _scratch_barrier(g, i))[kt + 1]
                b_next = fixed_next
            _kernel.sweep_layer(
                cur_a[kt + 1], prev_a[kt + 1], prev_v20, v2m,
                ns_target, a_rates, lam, ht, hx, dF, g.sf_y, sf_m,
                j_ge_m, jm, g.cand_stride, mode, fixed_next,
                cur_a[kt], b_next,
            )
        if kt >= g.k_S:
            current.v2[kt, g.k_S, :] = current.v1[kt, 0, :]
    return current


_scratch = {}


def _scratch_barrier(g: Grid, i: int) -> np.ndarray:
    key = (id(g), i)
    if key not in _scratch:
        shape = (g.n_t + 1, (g.n_t if i == 1 else g.k_S) + 1, g.n_x)
        _scratch[key] = np.full(shape, UNSET_BARRIER, dtype=np.int32)
    return _scratch[key]


def _terminal_field(grid: Grid) -> ValueField:
    f = ValueField.allocate(grid)
    h = np.asarray(grid.params.utility(grid.x), dtype=float)
    f.v1[grid.n_t, :, :] = h
    f.v2[grid.n_t, :, :] = h
    return f


def _init_v0(grid: Grid) -> ValueField:
    """Zero-jump closed forms on every node."""
    p = grid.params
    f = ValueField.allocate(grid)
    for kt in range(grid.n_t + 1):
        t = grid.t[kt]
        for ks in range(grid.n_s(1, kt)):
            f.v1[kt, ks, :] = p.v0(1, t, grid.s1[ks], grid.x)
        for ks in range(grid.n_s(2, kt)):
            f.v2[kt, ks, :] = p.v0(2, t, grid.s2[ks], grid.x)
    return f


def _sup_change(a: ValueField, b: ValueField, grid: Grid) -> float:
    lo, hi = grid.kx_lo, grid.kx_hi + 1
    with np.errstate(invalid="ignore"):
        d1 = np.nanmax(np.abs(a.v1[:, :, lo:hi] - b.v1[:, :, lo:hi]))
        d2 = np.nanmax(np.abs(a.v2[:, :, lo:hi] - b.v2[:, :, lo:hi]))
    return float(max(d1, d2))


def _domain_masks(grid: Grid):
    kt = np.arange(grid.n_t + 1)[:, None]
    m1 = np.arange(grid.n_t + 1)[None, :] <= kt
    m2 = np.arange(grid.k_S + 1)[None, :] <= np.minimum(kt, grid.k_S)
    return m1, m2


def _check_finite(f: ValueField, grid: Grid, sweep: int) -> None:
    m1, m2 = _domain_masks(grid)
    for i, (arr, mask) in ((1, (f.v1, m1)), (2, (f.v2, m2))):
        bad = ~np.isfinite(arr) & mask[:, :, None]
        if np.any(bad):
            kt, ks, kx = (int(v[0]) for v in np.nonzero(bad))
            raise NumericsError(
                f"non-finite value in sweep {sweep} at class {i}, node "
                f"(t={grid.t[kt]:.6g}, s={grid.h_t * ks:.6g}, x={grid.x[kx]:.6g})"
            )


def iterate(params: ModelParams, grid: Grid, control: SolveControl) -> SolveResult:
    """Run the jump-count iteration from the zero-jump closed forms.

    Each pass feeds the previous iterate to a full characteristic sweep;
    iteration stops after a fixed count or once the in-window sup change
    drops below the tolerance.  In optimize mode the barrier field of the
    final sweep is returned, completed on the fresh-clock rows by a
    direct argmax evaluation.
    """
    if grid.params is not params:
        # Allow equal-valued params built separately.
        if grid.params != params:
            raise GridError("grid was built for different model parameters")
    v_prev = _init_v0(grid)
    history: list[float] = []
    optimize = control.mode == "optimize"
    fixed_indices = None if optimize else _fixed_index_arrays(grid, control)

    if control.iterations == 0:
        return SolveResult(v_prev, None, 0, history)

    cap = control.iterations if control.iterations is not None else control.max_iterations
    barrier = None
    v_before_last = v_prev
    n = 0
    while n < cap:
        n += 1
        v_cur = _terminal_field(grid)
        b_out = BarrierField.allocate(grid) if optimize else None
        sweep_characteristic(v_prev, v_cur, control, b_out, fixed_indices)
        _check_finite(v_cur, grid, n)
        history.append(_sup_change(v_prev, v_cur, grid))
        v_before_last = v_prev
        v_prev = v_cur
        barrier = b_out
        if control.tol is not None and history[-1] <= control.tol:
            break
    else:
        if control.tol is not None:
            raise ConvergenceError(
                f"sup change still {history[-1]:.3g} after {cap} sweeps "
                f"(tolerance {control.tol:.3g})",
                history,
            )

    if optimize:
        # The sweep records barriers at departure nodes (ks >= 1); the
        # fresh-clock rows are filled here by a direct argmax.
        for i in (1, 2):
            for kt in range(grid.n_t + 1):
                _, args = _jump_row_eval(v_before_last, i, kt, 0)
                barrier.array(i)[kt, 0, :] = args
    return SolveResult(v_prev, barrier, n, history)

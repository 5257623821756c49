"""CSV export of the value and barrier slices shown in the figures.

All series are written with a header row, fixed column order and 12
significant digits, so identical runs produce byte-identical files.
"""
from __future__ import annotations

import json
import os
import platform

import numpy as np

from .config import RunSpec
from .grid import Grid, build_grid
from .solver import SolveControl, SolveResult, iterate

__all__ = ["run_figures", "figure_series", "FIGURE_FILES"]

FIGURE_FILES = ("fig1.csv", "fig2.csv", "fig3.csv", "fig4a.csv", "fig4b.csv",
                "run_meta.json")

_FIG4B_CLOCK = 1.6  # the published barrier slice fixes s at this clock value


def _fmt(x: float) -> str:
    if not np.isfinite(x):
        raise ValueError(f"refusing to write non-finite value {x!r}")
    return f"{float(x):.12g}"


def _barrier_slice(result: SolveResult, i: int, ks: int, kx: int, kts) -> np.ndarray:
    vals = np.array([result.barrier.value(i, kt, ks, kx) for kt in kts])
    if np.any(np.isinf(vals)):
        raise ValueError("barrier slice contains a never-report node; "
                         "no finite series to export")
    return vals


def figure_series(result: SolveResult) -> dict[str, tuple[list[str], np.ndarray]]:
    """The five figure series as (header, columns-array) pairs."""
    g: Grid = result.value.grid
    kx5 = int(g.nearest_kx(g.spec.x_hi))
    x_win = g.x[g.kx_lo: g.kx_hi + 1]
    kts = np.arange(g.n_t + 1)
    t_ax = g.t

    fig1 = np.column_stack([
        x_win,
        result.value.window(1, 0, 0),
        result.value.window(2, 0, 0),
    ])
    fig2 = np.column_stack([
        t_ax,
        [result.value.value(1, kt, 0, kx5) for kt in kts],
        [result.value.value(2, kt, 0, kx5) for kt in kts],
    ])
    s_ax = g.s2
    fig3 = np.column_stack([
        s_ax,
        [result.value.value(1, g.k_S, ks, kx5) for ks in range(g.k_S + 1)],
        [result.value.value(2, g.k_S, ks, kx5) for ks in range(g.k_S + 1)],
    ])
    fig4a = np.column_stack([
        t_ax,
        _barrier_slice(result, 1, 0, kx5, kts),
    ])
    ks_b = round(_FIG4B_CLOCK / g.h_t)
    if abs(ks_b * g.h_t - _FIG4B_CLOCK) > 1e-9 or ks_b > g.k_S:
        raise ValueError(f"clock s = {_FIG4B_CLOCK} is not a class-2 grid node")
    kts_b = np.arange(ks_b, g.n_t + 1)
    fig4b = np.column_stack([
        g.t[kts_b],
        _barrier_slice(result, 2, ks_b, kx5, kts_b),
    ])
    return {
        "fig1.csv": (["x", "V1(1,0,0,x)", "V2(2,0,0,x)"], fig1),
        "fig2.csv": (["t", "V1(1,t,0,5)", "V2(2,t,0,5)"], fig2),
        "fig3.csv": (["s", "V1(1,S,s,5)", "V2(2,S,s,5)"], fig3),
        "fig4a.csv": (["t", "b(1,t,0,5)"], fig4a),
        "fig4b.csv": (["t", "b(2,t,1.6,5)"], fig4b),
    }


def _run_meta(spec: RunSpec, grid: Grid, result: SolveResult) -> dict:
    from . import __version__

    return {
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "grid": {
            "h_t": grid.h_t, "h_x": grid.h_x,
            "x_lo": grid.spec.x_lo, "x_hi": grid.spec.x_hi,
            "tail_eps": grid.spec.tail_eps,
            "n_t": grid.n_t, "n_x": grid.n_x, "y_max": grid.y_max,
            "barrier_step": grid.cand_stride * grid.h_x,
        },
        "scheme": {
            "transport": "explicit upwind backward step along exact (t,s)-characteristics",
            "claim_integral": "exact cell masses with trapezoidal value weights, "
                              "analytic tail beyond the ladder",
            "policy": "pointwise argmax over the candidate ladder, fused per sweep",
        },
        "control": {
            "mode": "optimize",
            "paper_mode": True,
            "iterations_used": result.iterations_used,
        },
        "mc": {"n_paths": spec.mc.n_paths, "seed": spec.mc.seed},
    }


def run_figures(spec: RunSpec, out_dir: str | None = None) -> list[str]:
    """Solve in paper mode and write the five series plus run_meta.json.

    Returns the written paths; on any failure every partial output is
    removed before the error propagates.
    """
    out_dir = spec.output_dir if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    grid = build_grid(spec.model, spec.grid)
    result = iterate(spec.model, grid, SolveControl(paper_mode=True))
    series = figure_series(result)

    written: list[str] = []
    try:
        for name, (header, cols) in series.items():
            path = os.path.join(out_dir, name)
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(",".join(header) + "\n")
                for row in cols:
                    fh.write(",".join(_fmt(v) for v in row) + "\n")
            written.append(path)
        meta = _run_meta(spec, grid, result)
        meta_path = os.path.join(out_dir, "run_meta.json")
        with open(meta_path, "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(meta_path)
    except BaseException:
        for path in written:
            try:
                os.remove(path)
            except OSError:
                pass
        raise
    return written

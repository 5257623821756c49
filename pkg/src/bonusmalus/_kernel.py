"""Jitted inner loops of the characteristic sweep.

The claim integral uses exact cell masses dF (so total probability is
preserved to round-off) with trapezoidal value weights, and the report
branch beyond max(b, m) is the exact analytic tail.  Barrier candidates
live on the claim ladder, which makes the pointwise maximization a
single cumulative pass per wealth node.
"""
from __future__ import annotations

import numpy as np
from numba import njit

INF_IDX = -1  # matches grid.INFINITE_BARRIER


@njit(cache=True)
def _jump_row(pp, pp2, v2m, dF, sf_y, sf_m, j_ge_m, jm, lam, stride,
              mode, fixed_row, out_val, out_arg):
    """Jump operator along one wealth row.

    pp, pp2: previous-iterate rows (class-i keep row and class-2 fresh-clock
    row), padded below by n_y clamped entries.  v2m: class-2 fresh-clock row
    shifted by the deductible.  mode 0 = maximize over candidates, 1 = fixed
    per-node ladder index from fixed_row.
    """
    J = dF.size
    nx = out_val.size
    s_buf = np.empty(jm + 1)
    for k in range(nx):
        # Suffix report integrals for candidates below the deductible.
        if jm > 0 or j_ge_m > 0:
            s_buf[jm] = 0.5 * (pp2[k - jm + J] + v2m[k]) * (sf_y[jm] - sf_m)
            for j in range(jm - 1, -1, -1):
                s_buf[j] = s_buf[j + 1] + 0.5 * (pp2[k - j + J] + pp2[k - j - 1 + J]) * dF[j]

        if 0 >= j_ge_m:
            rep = v2m[k]
        else:
            rep = s_buf[0] + v2m[k] * sf_m
        best = lam * rep
        bestj = 0
        fixed_j = fixed_row[k] if mode == 1 else -2
        if mode == 1 and fixed_j == 0:
            out_val[k] = best
            out_arg[k] = 0
        acc = 0.0
        vprev = pp[k + J]
        for j in range(1, J + 1):
            vj = pp[k - j + J]
            acc += 0.5 * (vprev + vj) * dF[j - 1]
            vprev = vj
            if mode == 0:
                if j % stride == 0:
                    if j >= j_ge_m:
                        rep = v2m[k] * sf_y[j]
                    else:
                        rep = s_buf[j] + v2m[k] * sf_m
                    val = lam * (acc + rep)
                    if val > best:
                        best = val
                        bestj = j
            elif j == fixed_j:
                if j >= j_ge_m:
                    rep = v2m[k] * sf_y[j]
                else:
                    rep = s_buf[j] + v2m[k] * sf_m
                out_val[k] = lam * (acc + rep)
                out_arg[k] = j
        # Never-report candidate: keep everything, flat tail beyond the ladder.
        val_inf = lam * (acc + pp[k] * sf_y[J])
        if mode == 0:
            if val_inf > best:
                best = val_inf
                bestj = INF_IDX
            out_val[k] = best
            out_arg[k] = bestj
        elif fixed_j == INF_IDX:
            out_val[k] = val_inf
            out_arg[k] = INF_IDX


@njit(cache=True)
def _pad_row(row, J):
    out = np.empty(row.size + J)
    out[:J] = row[0]
    out[J:] = row
    return out


@njit(cache=True)
def sweep_layer(cur_next, prev_next, prev_v20, v2m, ns_target, a_rates,
                lam, ht, hx, dF, sf_y, sf_m, j_ge_m, jm, stride,
                mode, fixed_next, out_cur, out_b):
    """One explicit backward step of every characteristic of one class.

    Target row ks at layer kt is fed by row ks+1 at layer kt+1; the jump
    operator is evaluated at the departure node on the previous iterate,
    and in optimize mode its argmax is recorded there.
    """
    J = dF.size
    nx = out_cur.shape[1]
    pp2 = _pad_row(prev_v20, J)
    jval = np.empty(nx)
    jarg = np.empty(nx, dtype=np.int32)
    for ks in range(ns_target):
        dep = ks + 1
        pp = _pad_row(prev_next[dep], J)
        _jump_row(pp, pp2, v2m, dF, sf_y, sf_m, j_ge_m, jm, lam, stride,
                  mode, fixed_next[dep], jval, jarg)
        a = a_rates[ks]
        w = cur_next[dep]
        for k in range(nx):
            wk = w[k]
            wk1 = w[k + 1] if k + 1 < nx else w[nx - 1]
            out_cur[ks, k] = wk + ht * (a * (wk1 - wk) / hx + jval[k] - lam * wk)
        if mode == 0:
            out_b[dep, :] = jarg

"""Event-driven Monte Carlo oracle for the reporting-control problem.

The flow between events is closed form, so paths are exact: the only
randomness is claim times and sizes.  Randomness comes from a
counter-based generator keyed by the seed, and the claim stream of a
path does not depend on the policy, so estimates under different
policies pair up path-by-path (common random numbers).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import BarrierField, GridError, INFINITE_BARRIER, UNSET_BARRIER, ValueField
from .model import DomainError, ModelParams, retention

__all__ = [
    "PolicySpec",
    "ClaimEvent",
    "UpgradeEvent",
    "PathRecord",
    "MCResult",
    "sample_path",
    "replay_terminal_wealth",
    "estimate_value",
    "DppResult",
    "dpp_residual",
    "PolicyValue",
    "compare_policies",
]


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed))


@dataclass(frozen=True)
class PolicySpec:
    """A reporting rule: a constant barrier or a solved barrier field.

    Grid policies look up the nearest (t, s) node (the barrier is a grid
    artifact; interpolating it in time would invent values the solver
    never chose) and interpolate linearly in wealth before snapping back
    to the candidate ladder.
    """

    kind: str
    barrier: float = math.nan
    fields: tuple | None = None  # (grid, float array class 1, float array class 2)

    @classmethod
    def constant(cls, b: float) -> "PolicySpec":
        if b < 0.0:
            raise DomainError(f"constant barrier must be >= 0, got {b}")
        return cls(kind="constant", barrier=float(b))

    @classmethod
    def from_field(cls, bf: BarrierField) -> "PolicySpec":
        arrays = []
        for i in (1, 2):
            idx = bf.array(i)
            vals = idx.astype(float) * bf.grid.h_x
            vals[idx == INFINITE_BARRIER] = np.inf
            vals[idx == UNSET_BARRIER] = np.nan
            arrays.append(vals)
        return cls(kind="grid", fields=(bf.grid, arrays[0], arrays[1]))

    def barrier_batch(self, i, t, s, x) -> np.ndarray:
        i = np.asarray(i)
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.full(np.broadcast(i, t, s, x).shape, self.barrier)
        g, f1, f2 = self.fields
        kt = np.clip(np.rint(t / g.h_t).astype(np.int64), 0, g.n_t)
        ks_cap = np.where(i == 1, kt, np.minimum(kt, g.k_S))
        ks = np.clip(np.rint(s / g.h_t).astype(np.int64), 0, ks_cap)
        pos = np.clip((x - g.x[0]) / g.h_x, 0.0, g.n_x - 1.0)
        k0 = np.minimum(pos.astype(np.int64), g.n_x - 2)
        w = pos - k0
        out = np.empty(kt.shape, dtype=float)
        for cls_idx, arr in ((1, f1), (2, f2)):
            msk = i == cls_idx
            if not np.any(msk):
                continue
            va = arr[kt[msk], ks[msk], k0[msk]]
            vb = arr[kt[msk], ks[msk], k0[msk] + 1]
            wm = w[msk]
            with np.errstate(invalid="ignore"):  # inf neighbours: nearest wins
                lin = np.where(
                    np.isinf(va) | np.isinf(vb),
                    np.where(wm < 0.5, va, vb),
                    va + wm * (vb - va),
                )
            h_b = g.cand_stride * g.h_x
            snapped = np.where(np.isinf(lin), np.inf, np.rint(lin / h_b) * h_b)
            out[msk] = snapped
        if np.any(np.isnan(out)):
            raise DomainError("grid policy consulted outside its solved region")
        return out

    def barrier_at(self, i: int, t: float, s: float, x: float) -> float:
        return float(self.barrier_batch(np.array([i]), np.array([t]),
                                        np.array([s]), np.array([x]))[0])


@dataclass(frozen=True)
class ClaimEvent:
    time: float
    size: float
    reported: bool


@dataclass(frozen=True)
class UpgradeEvent:
    time: float


@dataclass(frozen=True)
class PathRecord:
    init_state: tuple[int, float, float, float]  # (i, t, s, x)
    events: tuple
    terminal_wealth: float
    terminal_utility: float


def sample_path(params: ModelParams, policy: PolicySpec,
                init: tuple[int, float, float, float], seed: int) -> PathRecord:
    """Simulate one trajectory exactly; deterministic in (seed, inputs).

    Claims of size exactly equal to the barrier are kept (reporting needs
    a strict exceedance); the class-2 upgrade at clock S is scheduled
    exactly, with claims winning ties at the same instant.
    """
    i0, t0, s0, x0 = init
    params.check_state(i0, t0, s0)
    T, S = params.horizon_T, params.class2_reset_S
    lam = params.intensity_lambda
    rng = _rng(seed)
    i, t, s, x = i0, float(t0), float(s0), float(x0)
    events = []
    while True:
        wait = rng.exponential(1.0 / lam)
        y = params.claim_law.ppf(rng.random())
        t_claim = t + wait
        if i == 2:
            t_bd = t + (S - s)
            if t_bd < min(t_claim, T):
                x += params.drift_integral(2, s, S - s)
                t, s, i = t_bd, 0.0, 1
                events.append(UpgradeEvent(time=t))
        if t_claim >= T:
            x += params.drift_integral(i, s, T - t)
            s += T - t
            break
        x += params.drift_integral(i, s, t_claim - t)
        s += t_claim - t
        t = t_claim
        b = policy.barrier_at(i, t, s, x)
        reported = y > b
        if reported:
            x -= retention(y, params.deductible(i))
            i, s = 2, 0.0
        else:
            x -= y
        events.append(ClaimEvent(time=t, size=y, reported=reported))
    return PathRecord(
        init_state=(i0, float(t0), float(s0), float(x0)),
        events=tuple(events),
        terminal_wealth=x,
        terminal_utility=float(params.utility(x)),
    )


def replay_terminal_wealth(params: ModelParams, record: PathRecord) -> float:
    """Rebuild the terminal wealth from the event log alone."""
    i, t, s, x = record.init_state
    for ev in record.events:
        x += params.drift_integral(i, s, ev.time - t)
        s += ev.time - t
        t = ev.time
        if isinstance(ev, UpgradeEvent):
            i, s = 1, 0.0
        else:
            if ev.reported:
                x -= retention(ev.size, params.deductible(i))
                i, s = 2, 0.0
            else:
                x -= ev.size
    x += params.drift_integral(i, s, params.horizon_T - t)
    return x


@dataclass(frozen=True)
class MCResult:
    mean: float
    stderr: float
    n_paths: int
    seed: int


def _flow_to(params: ModelParams, i, s, x, tcur, t_target, mask) -> None:
    """Advance masked paths deterministically to t_target, crossing the
    class-2 upgrade boundary exactly if it falls strictly inside."""
    S = params.class2_reset_S
    c = params.income_c
    p1, p2 = params.premium1, params.premium2
    dt = np.where(mask, t_target - tcur, 0.0)
    two = mask & (i == 2)
    tb = S - s
    cross = two & (tb < dt)
    stay2 = two & ~cross
    one = mask & (i == 1)

    if np.any(cross):
        d1 = tb[cross]
        d2 = dt[cross] - d1
        x[cross] += c * d1 - p2.integral(s[cross], d1)
        x[cross] += c * d2 - p1.integral(0.0, d2)
        s[cross] = d2
        i[cross] = 1
    if np.any(stay2):
        x[stay2] += c * dt[stay2] - p2.integral(s[stay2], dt[stay2])
        s[stay2] += dt[stay2]
    if np.any(one):
        x[one] += c * dt[one] - p1.integral(s[one], dt[one])
        s[one] += dt[one]
    tcur[mask] = t_target[mask] if isinstance(t_target, np.ndarray) else t_target


def _draw_claims(params: ModelParams, t0: float, n_paths: int, rng):
    """Absolute claim times and sizes, enough columns to pass maturity."""
    lam = params.intensity_lambda
    hz = params.horizon_T - t0
    k0 = max(8, int(lam * hz + 10.0 * math.sqrt(max(lam * hz, 1.0)) + 10))
    inter = rng.exponential(1.0 / lam, size=(n_paths, k0))
    sizes = params.claim_law.ppf(rng.random(size=(n_paths, k0)))
    while True:
        total = inter.sum(axis=1)
        if np.all(total > hz):
            break
        inter = np.hstack([inter, rng.exponential(1.0 / lam, size=(n_paths, k0))])
        sizes = np.hstack([sizes, params.claim_law.ppf(rng.random(size=(n_paths, k0)))])
    return t0 + np.cumsum(inter, axis=1), sizes


def _terminal_utilities(params: ModelParams, policy: PolicySpec,
                        init: tuple[int, float, float, float],
                        n_paths: int, seed: int) -> np.ndarray:
    i0, t0, s0, x0 = init
    params.check_state(i0, t0, s0)
    T = params.horizon_T
    times, sizes = _draw_claims(params, t0, n_paths, _rng(seed))
    i = np.full(n_paths, i0, dtype=np.int64)
    s = np.full(n_paths, float(s0))
    x = np.full(n_paths, float(x0))
    t = np.full(n_paths, float(t0))
    alive = np.ones(n_paths, dtype=bool)
    m1, m2 = params.deductible_m1, params.deductible_m2
    for j in range(times.shape[1]):
        if not alive.any():
            break
        tc = times[:, j]
        _flow_to(params, i, s, x, t, np.minimum(tc, T), alive)
        claims = alive & (tc < T)
        if np.any(claims):
            b = policy.barrier_batch(i[claims], tc[claims], s[claims], x[claims])
            y = sizes[claims, j]
            rep = y > b
            m_arr = np.where(i[claims] == 1, m1, m2)
            x[claims] -= np.where(rep, np.minimum(y, m_arr), y)
            hit = np.nonzero(claims)[0][rep]
            i[hit] = 2
            s[hit] = 0.0
        alive = claims
    return np.asarray(params.utility(x), dtype=float)


def estimate_value(params: ModelParams, policy: PolicySpec,
                   init: tuple[int, float, float, float],
                   n_paths: int, seed: int) -> MCResult:
    """Monte Carlo estimate of the expected terminal utility under a policy."""
    if n_paths < 2:
        raise DomainError("need at least 2 paths for a standard error")
    u = _terminal_utilities(params, policy, init, n_paths, seed)
    return MCResult(
        mean=float(u.mean()),
        stderr=float(u.std(ddof=1) / math.sqrt(n_paths)),
        n_paths=n_paths,
        seed=seed,
    )


def _evaluate_batch(fieldv: ValueField, i, t, s, x) -> np.ndarray:
    g = fieldv.grid
    kt = np.clip(np.rint(t / g.h_t).astype(np.int64), 0, g.n_t)
    ks_cap = np.where(i == 1, kt, np.minimum(kt, g.k_S))
    ks = np.clip(np.rint(s / g.h_t).astype(np.int64), 0, ks_cap)
    pos = np.clip((x - g.x[0]) / g.h_x, 0.0, g.n_x - 1.0)
    k0 = np.minimum(pos.astype(np.int64), g.n_x - 2)
    w = pos - k0
    out = np.empty(np.shape(t), dtype=float)
    for cls_idx, arr in ((1, fieldv.v1), (2, fieldv.v2)):
        msk = i == cls_idx
        if np.any(msk):
            va = arr[kt[msk], ks[msk], k0[msk]]
            vb = arr[kt[msk], ks[msk], k0[msk] + 1]
            out[msk] = va + w[msk] * (vb - va)
    return out


@dataclass(frozen=True)
class DppResult:
    residual: float
    stderr: float
    mc_mean: float
    grid_value: float
    n_paths: int


def dpp_residual(params: ModelParams, solve, init: tuple[int, float, float, float],
                 n_paths: int, seed: int, horizon_h: float) -> DppResult:
    """Consistency of the solved field with its own dynamic programming step.

    Paths run under the extracted policy until the first event, the given
    horizon or maturity, whichever comes first; the solved field evaluated
    there should average back to its value at the start state.
    """
    fieldv: ValueField = solve.value
    if solve.barrier is None:
        raise DomainError("dpp_residual needs an optimize-mode result with a barrier field")
    if fieldv.grid.params != params:
        raise GridError("solve result belongs to different model parameters")
    if horizon_h < 0.0:
        raise DomainError("horizon must be >= 0")
    i0, t0, s0, x0 = init
    params.check_state(i0, t0, s0)
    T, S = params.horizon_T, params.class2_reset_S
    policy = PolicySpec.from_field(solve.barrier)
    v_start = fieldv.evaluate(i0, t0, s0, x0)

    rng = _rng(seed)
    wait = rng.exponential(1.0 / params.intensity_lambda, size=n_paths)
    y = params.claim_law.ppf(rng.random(size=n_paths))
    t_claim = t0 + wait
    t_bd = np.full(n_paths, t0 + (S - s0) if i0 == 2 else np.inf)
    t_cap = min(t0 + horizon_h, T)
    tau = np.minimum(np.minimum(t_claim, t_bd), t_cap)

    # deterministic flow to tau (no interior events by construction)
    dt = tau - t0
    prem = params.premium1 if i0 == 1 else params.premium2
    x = x0 + params.income_c * dt - prem.integral(s0, dt)
    s = s0 + dt
    i = np.full(n_paths, i0, dtype=np.int64)

    is_claim = (t_claim <= tau) & (t_claim < T)
    is_bd = (t_bd <= tau) & ~is_claim
    if np.any(is_bd):
        i[is_bd] = 1
        s[is_bd] = 0.0
    if np.any(is_claim):
        b = policy.barrier_batch(i[is_claim], tau[is_claim], s[is_claim], x[is_claim])
        rep = y[is_claim] > b
        m_arr = np.where(i[is_claim] == 1, params.deductible_m1, params.deductible_m2)
        x[is_claim] -= np.where(rep, np.minimum(y[is_claim], m_arr), y[is_claim])
        hit = np.nonzero(is_claim)[0][rep]
        i[hit] = 2
        s[hit] = 0.0

    at_T = tau >= T
    vals = np.empty(n_paths)
    if np.any(~at_T):
        vals[~at_T] = _evaluate_batch(fieldv, i[~at_T], tau[~at_T], s[~at_T], x[~at_T])
    if np.any(at_T):
        vals[at_T] = params.utility(x[at_T])
    mean = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
    return DppResult(
        residual=abs(v_start - mean),
        stderr=stderr,
        mc_mean=mean,
        grid_value=float(v_start),
        n_paths=n_paths,
    )


@dataclass(frozen=True)
class PolicyValue:
    policy: PolicySpec
    mean: float
    stderr: float
    n_paths: int
    utilities: np.ndarray = field(repr=False, compare=False, default=None)


def compare_policies(params: ModelParams, policies, init, n_paths: int, seed: int):
    """Evaluate several policies on the same claim streams, ranked by mean."""
    if not policies:
        raise DomainError("empty policy list")
    rows = []
    for pol in policies:
        u = _terminal_utilities(params, pol, init, n_paths, seed)
        rows.append(PolicyValue(
            policy=pol,
            mean=float(u.mean()),
            stderr=float(u.std(ddof=1) / math.sqrt(n_paths)),
            n_paths=n_paths,
            utilities=u,
        ))
    rows.sort(key=lambda r: r.mean, reverse=True)
    return rows

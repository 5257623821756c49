"""Discretization of the two triangular state domains.

Class 1 lives on {0 <= s <= t <= T}, class 2 on {0 <= s <= min(t, S)}.
Time and clock share one step (the transport operator moves along
t - s = const, so equal steps make that sweep exact), and the wealth
axis is padded below by the claim-integral truncation point so the jump
convolution never reads off the grid, and above by the maximal drift
gain so in-window characteristics never hit the top clamp.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import DomainError, ModelParams

__all__ = [
    "GridError",
    "GridSpec",
    "Grid",
    "ValueField",
    "BarrierField",
    "build_grid",
    "interp_x",
    "apply_boundary",
    "INFINITE_BARRIER",
    "UNSET_BARRIER",
]

# Sentinels for barrier ladder indices.
INFINITE_BARRIER = -1
UNSET_BARRIER = -9

_DIV_TOL = 1e-12


class GridError(ValueError):
    """Grid construction violates a structural constraint (CFL, divisibility...)."""


@dataclass(frozen=True)
class GridSpec:
    """User-facing grid parameters; everything else is derived."""

    h_t: float
    h_x: float
    x_lo: float = 0.0
    x_hi: float = 5.0
    tail_eps: float = 1.0e-8
    barrier_step: float | None = None  # defaults to h_x


def _exact_steps(length: float, step: float, what: str) -> int:
    n = round(length / step)
    if n < 1 or abs(n * step - length) > _DIV_TOL * max(1.0, abs(length)):
        raise GridError(f"step {step} does not divide {what}={length} exactly")
    return n


@dataclass(frozen=True)
class Grid:
    """Node coordinates, claim-quadrature ladder and domain bookkeeping."""

    params: ModelParams
    spec: GridSpec
    t: np.ndarray           # (n_t + 1,)
    s1: np.ndarray          # (n_t + 1,)
    s2: np.ndarray          # (k_S + 1,)
    x: np.ndarray           # padded wealth axis
    k_S: int                # index of S on the clock axis
    kx_lo: int              # index of x_lo on the padded axis
    kx_hi: int              # index of x_hi
    y_max: float
    y: np.ndarray           # quadrature ladder 0, h_x, ..., y_max
    f_y: np.ndarray         # claim density on the ladder
    sf_y: np.ndarray        # exact tail probabilities on the ladder
    cand_stride: int        # barrier candidates are every cand_stride-th ladder point

    @property
    def n_t(self) -> int:
        return self.t.size - 1

    @property
    def n_x(self) -> int:
        return self.x.size

    @property
    def n_y(self) -> int:
        return self.y.size - 1

    @property
    def h_t(self) -> float:
        return self.spec.h_t

    @property
    def h_x(self) -> float:
        return self.spec.h_x

    def n_s(self, i: int, kt: int) -> int:
        """Number of valid clock rows of class ``i`` at time layer ``kt``."""
        if i == 1:
            return kt + 1
        if i == 2:
            return min(kt, self.k_S) + 1
        raise DomainError(f"class index must be 1 or 2, got {i}")

    def check_node(self, i: int, kt: int, ks: int) -> None:
        if not (0 <= kt <= self.n_t):
            raise DomainError(f"time index {kt} out of range")
        if not (0 <= ks < self.n_s(i, kt)):
            raise DomainError(f"clock index {ks} invalid for class {i} at layer {kt}")

    def barrier_candidates(self) -> np.ndarray:
        """Finite candidate barrier values (the +inf candidate is implicit)."""
        return self.y[:: self.cand_stride].copy()

    def candidate_index_of(self, b: float) -> int:
        """Ladder index of a finite on-ladder candidate, or INFINITE_BARRIER."""
        if math.isinf(b):
            return INFINITE_BARRIER
        j = round(b / self.h_x)
        if (
            b < 0.0
            or j > self.n_y
            or abs(j * self.h_x - b) > _DIV_TOL * max(1.0, self.y_max)
            or j % self.cand_stride != 0
        ):
            raise DomainError(f"barrier {b} is not in the candidate set")
        return j

    def nearest_kx(self, x) -> np.ndarray:
        k = np.rint((np.asarray(x) - self.x[0]) / self.h_x).astype(np.int64)
        return np.clip(k, 0, self.n_x - 1)


def build_grid(params: ModelParams, spec: GridSpec) -> Grid:
    """Validate a GridSpec against the model and materialize node arrays."""
    T, S = params.horizon_T, params.class2_reset_S
    n_t = _exact_steps(T, spec.h_t, "T")
    k_S = _exact_steps(S, spec.h_t, "S")
    if spec.x_hi <= spec.x_lo:
        raise GridError("x window is empty")
    n_win = _exact_steps(spec.x_hi - spec.x_lo, spec.h_x, "x_hi - x_lo")

    a_max = params.max_drift_rate()
    if spec.h_t * a_max > spec.h_x * (1.0 + _DIV_TOL):
        raise GridError(
            f"CFL violated: h_t * max drift = {spec.h_t * a_max:.6g} exceeds h_x = {spec.h_x}"
        )

    y_req = params.claim_law.ppf(1.0 - spec.tail_eps)
    n_y = int(math.ceil(y_req / spec.h_x - 1e-9))
    y_max = n_y * spec.h_x
    if params.claim_law.sf(y_max) > spec.tail_eps * (1.0 + 1e-9):
        raise GridError(f"tail mass beyond y_max={y_max} exceeds tail_eps={spec.tail_eps}")

    barrier_step = spec.h_x if spec.barrier_step is None else spec.barrier_step
    cand_stride = round(barrier_step / spec.h_x)
    if cand_stride < 1 or abs(cand_stride * spec.h_x - barrier_step) > _DIV_TOL:
        raise GridError(f"barrier_step {barrier_step} must be a multiple of h_x")

    n_top = int(math.ceil(a_max * T / spec.h_x - 1e-9))
    x0 = spec.x_lo - y_max
    n_x = n_y + n_win + n_top + 1

    t = np.arange(n_t + 1) * spec.h_t
    x = x0 + np.arange(n_x) * spec.h_x
    y = np.arange(n_y + 1) * spec.h_x
    return Grid(
        params=params,
        spec=spec,
        t=t,
        s1=t.copy(),
        s2=np.arange(k_S + 1) * spec.h_t,
        x=x,
        k_S=k_S,
        kx_lo=n_y,
        kx_hi=n_y + n_win,
        y_max=y_max,
        y=y,
        f_y=np.asarray(params.claim_law.pdf(y), dtype=float),
        sf_y=np.asarray(params.claim_law.sf(y), dtype=float),
        cand_stride=cand_stride,
    )


@dataclass
class ValueField:
    """Paired value surfaces on the class-1 and class-2 domains.

    Arrays are rectangular with NaN outside the triangular domains; the
    accessors below enforce domain membership.
    """

    grid: Grid
    v1: np.ndarray  # (n_t+1, n_t+1, n_x)
    v2: np.ndarray  # (n_t+1, k_S+1, n_x)

    @classmethod
    def allocate(cls, grid: Grid) -> "ValueField":
        shape1 = (grid.n_t + 1, grid.n_t + 1, grid.n_x)
        shape2 = (grid.n_t + 1, grid.k_S + 1, grid.n_x)
        return cls(grid, np.full(shape1, np.nan), np.full(shape2, np.nan))

    def array(self, i: int) -> np.ndarray:
        if i == 1:
            return self.v1
        if i == 2:
            return self.v2
        raise DomainError(f"class index must be 1 or 2, got {i}")

    def row(self, i: int, kt: int, ks: int) -> np.ndarray:
        self.grid.check_node(i, kt, ks)
        return self.array(i)[kt, ks]

    def value(self, i: int, kt: int, ks: int, kx: int) -> float:
        row = self.row(i, kt, ks)
        if not (0 <= kx < self.grid.n_x):
            raise DomainError(f"wealth index {kx} out of range")
        return float(row[kx])

    def copy(self) -> "ValueField":
        return ValueField(self.grid, self.v1.copy(), self.v2.copy())

    def window(self, i: int, kt: int, ks: int) -> np.ndarray:
        """Values over the reported wealth window [x_lo, x_hi]."""
        g = self.grid
        return self.row(i, kt, ks)[g.kx_lo : g.kx_hi + 1]

    def evaluate(self, i: int, t: float, s: float, x: float) -> float:
        """Field value at an off-grid state: nearest (t, s) node, linear in x."""
        g = self.grid
        kt = int(np.clip(round(t / g.h_t), 0, g.n_t))
        ks = int(np.clip(round(s / g.h_t), 0, g.n_s(i, kt) - 1))
        return interp_x(self, i, kt, ks, x)


def interp_x(field: ValueField, i: int, kt: int, ks: int, x) -> float | np.ndarray:
    """Linear interpolation in wealth with flat extension beyond both ends."""
    row = field.row(i, kt, ks)
    out = np.interp(x, field.grid.x, row)
    return float(out) if np.isscalar(x) else out


def apply_boundary(field: ValueField) -> ValueField:
    """Copy the class-1 fresh-clock row into the class-2 upgrade row,
    v2(t, S, x) = v1(t, 0, x), at every time layer where both exist."""
    g = field.grid
    for kt in range(g.k_S, g.n_t + 1):
        field.v2[kt, g.k_S, :] = field.v1[kt, 0, :]
    return field


@dataclass
class BarrierField:
    """Barrier choices on the value grid, stored as claim-ladder indices.

    Entry j >= 0 means barrier j * h_x; INFINITE_BARRIER means never report.
    """

    grid: Grid
    b1: np.ndarray  # int32, same node layout as ValueField.v1
    b2: np.ndarray

    @classmethod
    def allocate(cls, grid: Grid) -> "BarrierField":
        shape1 = (grid.n_t + 1, grid.n_t + 1, grid.n_x)
        shape2 = (grid.n_t + 1, grid.k_S + 1, grid.n_x)
        return cls(
            grid,
            np.full(shape1, UNSET_BARRIER, dtype=np.int32),
            np.full(shape2, UNSET_BARRIER, dtype=np.int32),
        )

    @classmethod
    def constant(cls, grid: Grid, b: float) -> "BarrierField":
        idx = grid.candidate_index_of(b)
        out = cls.allocate(grid)
        for i in (1, 2):
            arr = out.array(i)
            for kt in range(grid.n_t + 1):
                arr[kt, : grid.n_s(i, kt), :] = idx
        return out

    def array(self, i: int) -> np.ndarray:
        if i == 1:
            return self.b1
        if i == 2:
            return self.b2
        raise DomainError(f"class index must be 1 or 2, got {i}")

    def index_row(self, i: int, kt: int, ks: int) -> np.ndarray:
        self.grid.check_node(i, kt, ks)
        return self.array(i)[kt, ks]

    def values_row(self, i: int, kt: int, ks: int) -> np.ndarray:
        """Barrier values (with +inf for never-report) along the wealth axis."""
        idx = self.index_row(i, kt, ks)
        out = idx.astype(float) * self.grid.h_x
        out[idx == INFINITE_BARRIER] = np.inf
        if np.any(idx == UNSET_BARRIER):
            raise DomainError(f"barrier row ({i}, {kt}, {ks}) has unset entries")
        return out

    def value(self, i: int, kt: int, ks: int, kx: int) -> float:
        return float(self.values_row(i, kt, ks)[kx])

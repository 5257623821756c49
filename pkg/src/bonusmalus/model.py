"""Contract and market primitives of the two-class bonus-malus model.

Everything in here is closed form: premium rates and their integrals,
the capped exponential utility, the claim-size law, the retention
function and the zero-jump value surfaces used to seed the solver.
All types are frozen dataclasses and all operations are pure.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DomainError",
    "PremiumSpec",
    "ClaimLaw",
    "UtilitySpec",
    "ModelParams",
    "retention",
]


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


def retention(y: float, m: float) -> float:
    """Part of a reported claim of size ``y`` paid by the insured (deductible ``m``)."""
    if y < 0.0 or m < 0.0:
        raise DomainError(f"retention needs y >= 0 and m >= 0, got y={y}, m={m}")
    return min(y, m)


@dataclass(frozen=True)
class PremiumSpec:
    """Premium rate as a function of the class clock ``s``.

    Restricted to affine rates ``intercept + slope * s`` (a constant rate is
    an affine rate with zero slope) so that drift integrals stay closed form.
    """

    intercept: float
    slope: float = 0.0

    @classmethod
    def constant(cls, rate: float) -> "PremiumSpec":
        return cls(intercept=float(rate), slope=0.0)

    @classmethod
    def affine(cls, intercept: float, slope: float) -> "PremiumSpec":
        return cls(intercept=float(intercept), slope=float(slope))

    @property
    def kind(self) -> str:
        return "constant" if self.slope == 0.0 else "affine"

    def rate(self, s):
        """Premium rate at clock ``s``; accepts scalars or arrays."""
        return self.intercept + self.slope * s

    def integral(self, s: float, delta: float) -> float:
        """Exact integral of the rate over ``[s, s + delta]``."""
        return self.intercept * delta + 0.5 * self.slope * ((s + delta) ** 2 - s * s)

    def extremes_on(self, lo: float, hi: float) -> tuple[float, float]:
        """(min, max) of the rate over the clock interval ``[lo, hi]``."""
        a, b = self.intercept + self.slope * lo, self.intercept + self.slope * hi
        return (min(a, b), max(a, b))


@dataclass(frozen=True)
class ClaimLaw:
    """Claim-size distribution.  Only the exponential family is implemented,
    but the surface (cdf/pdf/sf/ppf/moments/retention tail) is what the
    solver and simulator program against, so further laws can slot in.
    """

    mean: float
    kind: str = "exponential"

    def __post_init__(self):
        if self.kind != "exponential":
            raise DomainError(f"unsupported claim law kind: {self.kind!r}")
        if not self.mean > 0.0:
            raise DomainError(f"claim mean must be positive, got {self.mean}")

    def cdf(self, y):
        y_arr = np.asarray(y, dtype=float)
        if np.any(y_arr < 0.0):
            raise DomainError("claim cdf is only defined for y >= 0")
        out = -np.expm1(-y_arr / self.mean)
        return float(out) if np.isscalar(y) or y_arr.ndim == 0 else out

    def sf(self, y):
        """Exact tail probability 1 - F(y)."""
        y_arr = np.asarray(y, dtype=float)
        if np.any(y_arr < 0.0):
            raise DomainError("claim sf is only defined for y >= 0")
        out = np.exp(-y_arr / self.mean)
        return float(out) if np.isscalar(y) or y_arr.ndim == 0 else out

    def pdf(self, y):
        y_arr = np.asarray(y, dtype=float)
        out = np.where(y_arr < 0.0, 0.0, np.exp(-y_arr / self.mean) / self.mean)
        return float(out) if np.isscalar(y) or y_arr.ndim == 0 else out

    def ppf(self, u):
        """Inverse cdf, used for inverse-transform sampling."""
        u_arr = np.asarray(u, dtype=float)
        if np.any((u_arr < 0.0) | (u_arr >= 1.0)):
            raise DomainError("ppf argument must lie in [0, 1)")
        out = -self.mean * np.log1p(-u_arr)
        return float(out) if np.isscalar(u) or u_arr.ndim == 0 else out

    @property
    def second_moment(self) -> float:
        return 2.0 * self.mean * self.mean

    def retention_tail(self, b: float, m: float) -> float:
        """Exact value of the tail integral of the retention,
        ``int_b^inf min(y, m) dF(y)``."""
        if b < 0.0 or m < 0.0:
            raise DomainError("retention_tail needs b >= 0 and m >= 0")
        mu = self.mean
        if b >= m:
            return m * math.exp(-b / mu)
        # int_b^m y f(y) dy + m * (1 - F(m)) for the exponential law
        body = (b + mu) * math.exp(-b / mu) - (m + mu) * math.exp(-m / mu)
        return body + m * math.exp(-m / mu)


@dataclass(frozen=True)
class UtilitySpec:
    """Capped exponential utility ``h(x) = max(floor, -exp(-gamma * x))``."""

    gamma: float
    floor: float = -1.0e10

    def __post_init__(self):
        if not self.gamma > 0.0:
            raise DomainError(f"risk aversion must be positive, got {self.gamma}")
        if not self.floor < 0.0:
            raise DomainError(f"utility floor must be negative, got {self.floor}")

    def __call__(self, x):
        # Cap compared in log space first so no finite x can overflow.
        log_cap = math.log(-self.floor)
        x_arr = np.asarray(x, dtype=float)
        expo = -self.gamma * x_arr
        out = np.where(expo >= log_cap, self.floor, -np.exp(np.minimum(expo, log_cap)))
        return float(out) if np.isscalar(x) or x_arr.ndim == 0 else out

    def lipschitz_above(self, x_min: float) -> float:
        """Lipschitz constant of h on [x_min, inf) where the floor is inactive."""
        return self.gamma * math.exp(-self.gamma * x_min)


@dataclass(frozen=True)
class ModelParams:
    """All contract and market constants, validated on construction."""

    horizon_T: float
    class2_reset_S: float
    intensity_lambda: float
    claim_law: ClaimLaw
    deductible_m1: float
    deductible_m2: float
    premium1: PremiumSpec
    premium2: PremiumSpec
    income_c: float
    utility: UtilitySpec

    def __post_init__(self):
        if not self.horizon_T > 0.0:
            raise DomainError(f"horizon must be positive, got {self.horizon_T}")
        if not (0.0 < self.class2_reset_S <= self.horizon_T):
            raise DomainError(
                f"class-2 reset time must satisfy 0 < S <= T, got S={self.class2_reset_S}, T={self.horizon_T}"
            )
        if not self.intensity_lambda > 0.0:
            raise DomainError(f"claim intensity must be positive, got {self.intensity_lambda}")
        if self.deductible_m1 < 0.0 or self.deductible_m2 < 0.0:
            raise DomainError("deductibles must be nonnegative")
        sup1 = self.premium1.extremes_on(0.0, self.horizon_T)[1]
        sup2 = self.premium2.extremes_on(0.0, self.class2_reset_S)[1]
        if not self.income_c > max(sup1, sup2):
            raise DomainError(
                f"income rate c={self.income_c} must exceed every premium rate "
                f"(sup pi1={sup1}, sup pi2={sup2})"
            )
        # The model assumes class 2 is the expensive one; a violation is
        # suspicious but not structurally fatal, so warn instead of raising.
        min2 = self.premium2.extremes_on(0.0, self.class2_reset_S)[0]
        max1 = self.premium1.extremes_on(0.0, self.horizon_T)[1]
        if min2 <= max1:
            warnings.warn(
                "premium2 is not above premium1 everywhere; class 2 is supposed "
                "to be the penalty class",
                stacklevel=2,
            )

    # -- closed-form operations ------------------------------------------

    def _premium_spec(self, i: int) -> PremiumSpec:
        if i == 1:
            return self.premium1
        if i == 2:
            return self.premium2
        raise DomainError(f"class index must be 1 or 2, got {i}")

    def deductible(self, i: int) -> float:
        self._premium_spec(i)
        return self.deductible_m1 if i == 1 else self.deductible_m2

    def clock_cap(self, i: int) -> float:
        """Largest clock value reachable in class i."""
        return self.horizon_T if i == 1 else self.class2_reset_S

    def premium(self, i: int, s: float) -> float:
        """Class-i premium rate at clock ``s``."""
        if not (0.0 <= s <= self.horizon_T):
            raise DomainError(f"clock s={s} outside [0, T={self.horizon_T}]")
        return self._premium_spec(i).rate(s)

    def drift_rate(self, i: int, s: float) -> float:
        return self.income_c - self.premium(i, s)

    def max_drift_rate(self) -> float:
        lo1 = self.premium1.extremes_on(0.0, self.horizon_T)[0]
        lo2 = self.premium2.extremes_on(0.0, self.class2_reset_S)[0]
        return self.income_c - min(lo1, lo2)

    def drift_integral(self, i: int, s: float, delta: float) -> float:
        """Exact wealth gain ``int_s^{s+delta} (c - pi_i(u)) du`` along the flow."""
        if delta < 0.0 or s < 0.0:
            raise DomainError(f"need s >= 0 and delta >= 0, got s={s}, delta={delta}")
        cap = self.clock_cap(i)
        if s + delta > cap * (1.0 + 1e-12) + 1e-12:
            raise DomainError(
                f"clock would leave class-{i} domain: s + delta = {s + delta} > {cap}"
            )
        return self.income_c * delta - self._premium_spec(i).integral(s, delta)

    def check_state(self, i: int, t: float, s: float) -> None:
        """Validate that (t, s) lies in the class-i domain."""
        if not (0.0 <= s <= t <= self.horizon_T):
            raise DomainError(f"(t={t}, s={s}) violates 0 <= s <= t <= T")
        if i == 2 and s > self.class2_reset_S:
            raise DomainError(f"class-2 clock s={s} exceeds S={self.class2_reset_S}")
        self._premium_spec(i)

    def v0(self, i: int, t: float, s: float, x):
        """Zero-jump value: terminal utility along the claim-free flow, discounted
        by the probability of seeing no claim at all.

        For class 2 the deterministic upgrade at clock S counts as a jump of
        the extended event sequence, so the value is zero whenever the flow
        would reach that boundary before maturity.
        """
        self.check_state(i, t, s)
        dt = self.horizon_T - t
        if i == 2 and not (s + dt < self.class2_reset_S):
            return 0.0 * np.asarray(x) if isinstance(x, np.ndarray) else 0.0
        gain = self.drift_integral(i, s, dt)
        disc = math.exp(-self.intensity_lambda * dt)
        return self.utility(np.asarray(x) + gain) * disc if isinstance(x, np.ndarray) \
            else self.utility(x + gain) * disc

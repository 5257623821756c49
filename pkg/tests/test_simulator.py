import dataclasses
import math

import numpy as np
import pytest

import bonusmalus as bm
from bonusmalus.grid import GridError
from bonusmalus.simulator import (
    ClaimEvent,
    PolicySpec,
    UpgradeEvent,
    compare_policies,
    dpp_residual,
    estimate_value,
    replay_terminal_wealth,
    sample_path,
)

from conftest import table1_params


def quiet_params() -> bm.ModelParams:
    """Table 1 with a vanishing claim intensity: deterministic paths."""
    return dataclasses.replace(table1_params(), intensity_lambda=1e-12)


class TestSamplePath:
    def test_deterministic_given_seed(self, params):
        pol = PolicySpec.constant(0.5)
        a = sample_path(params, pol, (1, 0.0, 0.0, 2.5), seed=123)
        b = sample_path(params, pol, (1, 0.0, 0.0, 2.5), seed=123)
        assert a == b

    def test_quiet_class1_path_is_pure_drift(self):
        p = quiet_params()
        rec = sample_path(p, PolicySpec.constant(0.0), (1, 0.0, 0.0, 0.0), seed=1)
        assert rec.events == ()
        assert rec.terminal_wealth == pytest.approx(2.75, abs=1e-9)

    def test_quiet_class2_path_upgrades_once(self):
        p = quiet_params()
        rec = sample_path(p, PolicySpec.constant(0.0), (2, 0.0, 0.0, 1.0), seed=1)
        assert len(rec.events) == 1
        ev = rec.events[0]
        assert isinstance(ev, UpgradeEvent)
        assert ev.time == pytest.approx(2.0, abs=1e-12)
        expected = 1.0 + p.drift_integral(2, 0.0, 2.0) + p.drift_integral(1, 0.0, 3.0)
        assert rec.terminal_wealth == pytest.approx(expected, abs=1e-9)

    def test_replay_reproduces_terminal_wealth(self, params):
        pol = PolicySpec.constant(0.5)
        for seed in range(20):
            rec = sample_path(params, pol, (1, 0.0, 0.0, 2.5), seed=seed)
            assert replay_terminal_wealth(params, rec) == pytest.approx(
                rec.terminal_wealth, abs=1e-12)

    def test_bookkeeping_invariants(self, params):
        pol = PolicySpec.constant(0.25)
        for seed in range(30):
            rec = sample_path(params, pol, (1, 0.0, 0.0, 2.5), seed=seed)
            times = [ev.time for ev in rec.events]
            assert times == sorted(times)
            assert all(0.0 < t <= params.horizon_T for t in times)
            # replay the class/clock dynamics from the log
            i, t, s = 1, 0.0, 0.0
            reported = upgrades = transitions = 0
            for ev in rec.events:
                s += ev.time - t
                t = ev.time
                if i == 2:
                    assert s <= params.class2_reset_S + 1e-12
                if isinstance(ev, UpgradeEvent):
                    assert i == 2 and s == pytest.approx(params.class2_reset_S)
                    upgrades += 1
                    i, s = 1, 0.0
                elif ev.reported:
                    if i == 1:
                        transitions += 1
                    reported += 1
                    i, s = 2, 0.0
            assert transitions <= reported

    def test_full_insurance_reported_claim_keeps_wealth(self):
        # m = 0: the reported claim itself must not change wealth
        p = table1_params()
        pol = PolicySpec.constant(0.0)  # report everything
        rec = sample_path(p, pol, (1, 0.0, 0.0, 2.5), seed=5)
        claims = [ev for ev in rec.events if isinstance(ev, ClaimEvent)]
        assert claims and all(ev.reported for ev in claims)
        # wealth at T = x + premium drift only (claims all retained at 0)
        i, t, s, x = 1, 0.0, 0.0, 2.5
        for ev in rec.events:
            x += p.drift_integral(i, s, ev.time - t)
            t = ev.time
            if isinstance(ev, UpgradeEvent):
                i, s = 1, 0.0
            else:
                i, s = 2, 0.0
        x += p.drift_integral(i, s, p.horizon_T - t)
        assert rec.terminal_wealth == pytest.approx(x, abs=1e-12)

    def test_invalid_init_rejected(self, params):
        with pytest.raises(bm.DomainError):
            sample_path(params, PolicySpec.constant(0.0), (2, 1.0, 2.5, 0.0), seed=0)


class TestEstimateValue:
    def test_quiet_model_zero_variance(self):
        p = quiet_params()
        res = estimate_value(p, PolicySpec.constant(0.0), (1, 0.0, 0.0, 0.0),
                             n_paths=500, seed=9)
        assert res.stderr == pytest.approx(0.0, abs=1e-12)
        assert res.mean == pytest.approx(float(p.utility(2.75)), abs=1e-9)

    def test_repeatable(self, params):
        pol = PolicySpec.constant(1.0)
        a = estimate_value(params, pol, (1, 0.0, 0.0, 2.5), 2000, 7)
        b = estimate_value(params, pol, (1, 0.0, 0.0, 2.5), 2000, 7)
        assert a == b

    def test_clt_stderr_scaling(self, params):
        pol = PolicySpec.constant(0.5)
        small = estimate_value(params, pol, (1, 0.0, 0.0, 2.5), 10_000, 11)
        large = estimate_value(params, pol, (1, 0.0, 0.0, 2.5), 40_000, 11)
        ratio = small.stderr / large.stderr
        assert 2.0 * 0.85 <= ratio <= 2.0 * 1.15

    def test_disjoint_seeds_agree(self, params):
        pol = PolicySpec.constant(math.inf)
        a = estimate_value(params, pol, (1, 0.0, 0.0, 2.5), 100_000, 1)
        b = estimate_value(params, pol, (1, 0.0, 0.0, 2.5), 100_000, 2)
        assert abs(a.mean - b.mean) <= 3.0 * (a.stderr + b.stderr)

    def test_too_few_paths_rejected(self, params):
        with pytest.raises(bm.DomainError):
            estimate_value(params, PolicySpec.constant(0.0), (1, 0, 0, 0), 1, 0)


class TestPolicySpec:
    def test_constant_batch(self):
        pol = PolicySpec.constant(0.75)
        out = pol.barrier_batch(np.array([1, 2]), np.array([0.0, 1.0]),
                                np.array([0.0, 0.5]), np.array([2.0, 3.0]))
        assert np.all(out == 0.75)

    def test_negative_constant_rejected(self):
        with pytest.raises(bm.DomainError):
            PolicySpec.constant(-0.1)

    def test_grid_policy_constant_field(self, coarse_grid):
        bf = bm.BarrierField.constant(coarse_grid, 0.5)
        pol = PolicySpec.from_field(bf)
        t = np.array([0.0, 2.37, 4.99])
        out = pol.barrier_batch(np.array([1, 1, 2]), t, np.array([0.0, 1.2, 0.3]),
                                np.array([-3.0, 2.51, 7.2]))
        assert np.all(out == 0.5)

    def test_grid_policy_infinite_field(self, coarse_grid):
        bf = bm.BarrierField.constant(coarse_grid, math.inf)
        pol = PolicySpec.from_field(bf)
        out = pol.barrier_batch(np.array([1]), np.array([1.0]), np.array([0.5]),
                                np.array([2.5]))
        assert np.isinf(out[0])

    def test_snaps_to_candidate_ladder(self, coarse_solve):
        pol = PolicySpec.from_field(coarse_solve.barrier)
        g = coarse_solve.value.grid
        rng = np.random.default_rng(3)
        t = rng.uniform(0, 5, 200)
        s = np.minimum(rng.uniform(0, 5, 200), t)
        out = pol.barrier_batch(np.full(200, 1), t, s, rng.uniform(-1, 6, 200))
        finite = out[np.isfinite(out)]
        assert np.allclose(np.round(finite / g.h_x) * g.h_x, finite, atol=1e-12)


class TestDppResidual:
    def test_zero_horizon_is_exact(self, params, coarse_solve):
        # every path evaluates the same field value; only the rounding of
        # the 1000-term mean remains
        res = dpp_residual(params, coarse_solve, (1, 0.0, 0.0, 2.5),
                           n_paths=1000, seed=4, horizon_h=0.0)
        assert res.residual == pytest.approx(0.0, abs=1e-15)

    def test_zero_horizon_on_the_upgrade_boundary(self, params, coarse_solve):
        S = params.class2_reset_S
        res = dpp_residual(params, coarse_solve, (2, 3.0, S, 2.5),
                           n_paths=1000, seed=4, horizon_h=0.0)
        assert res.residual == pytest.approx(0.0, abs=1e-15)

    def test_terminal_init(self, params, coarse_solve):
        res = dpp_residual(params, coarse_solve, (1, 5.0, 0.0, 2.5),
                           n_paths=1000, seed=4, horizon_h=0.5)
        assert res.residual == pytest.approx(0.0, abs=1e-12)

    def test_incompatible_params_rejected(self, coarse_solve):
        other = dataclasses.replace(table1_params(), income_c=1.3)
        with pytest.raises(GridError):
            dpp_residual(other, coarse_solve, (1, 0.0, 0.0, 2.5), 100, 0, 0.5)

    def test_fixed_mode_result_rejected(self, params, coarse_grid):
        fixed = bm.iterate(params, coarse_grid,
                           bm.SolveControl(mode="fixed", fixed_barrier=0.5, iterations=2))
        with pytest.raises(bm.DomainError):
            dpp_residual(params, fixed, (1, 0.0, 0.0, 2.5), 100, 0, 0.5)


class TestComparePolicies:
    def test_single_policy_matches_estimate(self, params):
        pol = PolicySpec.constant(0.5)
        rows = compare_policies(params, [pol], (1, 0.0, 0.0, 2.5), 5000, 21)
        direct = estimate_value(params, pol, (1, 0.0, 0.0, 2.5), 5000, 21)
        assert rows[0].mean == direct.mean
        assert rows[0].stderr == direct.stderr

    def test_duplicates_are_identical(self, params):
        pols = [PolicySpec.constant(0.5), PolicySpec.constant(0.5)]
        rows = compare_policies(params, pols, (1, 0.0, 0.0, 2.5), 5000, 21)
        assert rows[0].mean == rows[1].mean
        assert np.array_equal(rows[0].utilities, rows[1].utilities)

    def test_ranked_by_mean(self, params):
        pols = [PolicySpec.constant(b) for b in (0.0, 1.0, math.inf)]
        rows = compare_policies(params, pols, (1, 0.0, 0.0, 2.5), 20_000, 21)
        means = [r.mean for r in rows]
        assert means == sorted(means, reverse=True)

    def test_empty_list_rejected(self, params):
        with pytest.raises(bm.DomainError):
            compare_policies(params, [], (1, 0.0, 0.0, 2.5), 100, 0)

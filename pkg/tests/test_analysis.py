import numpy as np
import pytest

from adamdp import (
    DegenerateReturnError,
    InvalidSpecError,
    MdpInstance,
    deterioration_curve,
    solve_adamdp,
    suboptimality_bound,
    theta_sweep,
    toy_counterexample,
    value_similar_check,
    worst_case_family,
)
from adamdp.analysis import canonical_recommendation, reachable_states
from oracles import TOY_ALG, TOY_BASE, TOY_STAR, brute_adamdp, mix, rand_det, rand_mdp, rand_stoch, ret


class TestReachable:
    def test_toy_baseline(self, toy):
        mask = reachable_states(toy.instance, TOY_BASE)
        np.testing.assert_array_equal(mask, [True, False, True, True, False])


class TestCanonicalRecommendation:
    def test_below_threshold_is_baseline(self, toy):
        rec, r = canonical_recommendation(toy.instance, TOY_BASE, 0.5)
        np.testing.assert_array_equal(rec.probs, TOY_BASE)
        assert r == pytest.approx(0.5, abs=1e-10)

    def test_above_threshold_is_star(self, toy):
        rec, r = canonical_recommendation(toy.instance, TOY_BASE, 0.95)
        np.testing.assert_array_equal(rec.probs, TOY_STAR)
        assert r == pytest.approx(0.52375, abs=1e-10)

    def test_return_unaffected(self, rng):
        inst = rand_mdp(rng, 4, 3)
        base = rand_det(rng, 4, 3)
        for theta in (0.1, 0.6):
            _, r = canonical_recommendation(inst, base, theta)
            assert r == pytest.approx(solve_adamdp(inst, base, theta, 1e-10).expected_return, abs=1e-10)


class TestThetaSweep:
    def test_toy_structure(self, toy):
        sweep = theta_sweep(toy.instance, TOY_BASE, 101, 1e-6)
        assert all(sweep.checks.values()), sweep.checks
        assert sweep.baseline_return == pytest.approx(0.5)
        assert sweep.nominal_return == pytest.approx(0.55)
        np.testing.assert_array_equal(sweep.naive_policy.probs, TOY_STAR)
        ids = sweep.segment_ids
        np.testing.assert_array_equal(ids[sweep.grid < 0.9], 0)
        np.testing.assert_array_equal(ids[sweep.grid > 0.9], 1)

    def test_optimum_baseline_has_no_breakpoints(self, toy):
        sweep = theta_sweep(toy.instance, TOY_STAR, 11)
        assert len(sweep.breakpoints) == 0
        assert len(sweep.segments) == 1
        np.testing.assert_allclose(sweep.returns_opt, 0.55, atol=1e-10)

    def test_grid_of_two(self, toy):
        sweep = theta_sweep(toy.instance, TOY_BASE, 2)
        assert abs(sweep.breakpoints[0] - 0.9) <= 1e-5

    def test_grid_too_small(self, toy):
        with pytest.raises(InvalidSpecError):
            theta_sweep(toy.instance, TOY_BASE, 1)

    def test_random_against_brute_force(self):
        rng = np.random.default_rng(55)
        for _ in range(3):
            inst = rand_mdp(rng, 4, 2)
            base = rand_det(rng, 4, 2)
            sweep = theta_sweep(inst, base, 11, 1e-6)
            assert sweep.checks["monotone"] and sweep.checks["above_baseline"] and sweep.checks["top_is_nominal"]
            for theta, r in zip(sweep.grid, sweep.returns_opt):
                assert r == pytest.approx(brute_adamdp(inst, base, theta)[0], abs=1e-8)
            for b in sweep.breakpoints:
                left, _ = canonical_recommendation(inst, base, max(b - 1e-6, 0.0))
                right, _ = canonical_recommendation(inst, base, min(b + 1e-6, 1.0))
                assert left != right

    def test_workers_give_identical_results(self, toy):
        a = theta_sweep(toy.instance, TOY_BASE, 21)
        b = theta_sweep(toy.instance, TOY_BASE, 21, workers=4)
        np.testing.assert_array_equal(a.returns_opt, b.returns_opt)
        np.testing.assert_array_equal(a.breakpoints, b.breakpoints)


class TestDeterioration:
    def test_default_naive_is_full_adherence_optimum(self, toy):
        # star at 0.5 returns 0.1 lam theta + R_b (theta^2 + 1 - theta) = 0.4 against the optimum 0.5
        np.testing.assert_allclose(deterioration_curve(toy.instance, TOY_BASE, [0.5]), [0.2], atol=1e-10)

    def test_alg_as_naive(self, toy):
        # alg at 0.5 returns 0.5 + 0.5 (0.5 - 0.95) = 0.275
        np.testing.assert_allclose(deterioration_curve(toy.instance, TOY_BASE, [0.5], naive=TOY_ALG),
                                   [0.45], atol=1e-10)

    def test_zero_above_threshold(self, toy):
        np.testing.assert_allclose(deterioration_curve(toy.instance, TOY_BASE, [0.95, 1.0]), 0.0, atol=1e-10)

    def test_matches_sweep(self, toy):
        sweep = theta_sweep(toy.instance, TOY_BASE, 11)
        np.testing.assert_allclose(deterioration_curve(toy.instance, TOY_BASE, sweep.grid),
                                   sweep.deterioration, atol=1e-10)

    def test_zero_return_raises(self):
        inst = MdpInstance(np.ones((1, 2, 1)), np.zeros((1, 2, 1)), [1.0], 0.5)
        with pytest.raises(DegenerateReturnError):
            deterioration_curve(inst, [[1.0, 0.0]], [0.5])
        with pytest.raises(ZeroDivisionError):
            deterioration_curve(inst, [[1.0, 0.0]], [0.5])


class TestWorstCaseFamily:
    @pytest.mark.parametrize("M, theta", [(1.0, 0.5), (10.0, 0.5), (5.0, 0.2)])
    def test_gap_reached(self, M, theta):
        inst, gap = worst_case_family(M, theta)
        assert gap >= M
        assert ret(inst, TOY_BASE) - ret(inst, mix(theta, TOY_ALG, TOY_BASE)) == pytest.approx(gap, rel=1e-9)

    def test_minimal_discount(self):
        inst, _ = worst_case_family(10.0, 0.5)
        smaller = toy_counterexample(inst.discount - 1e-6, -1).instance
        assert ret(smaller, TOY_BASE) - ret(smaller, mix(0.5, TOY_ALG, TOY_BASE)) < 10.0

    @pytest.mark.parametrize("theta", [0.0, 1.0])
    def test_theta_open_interval(self, theta):
        with pytest.raises(InvalidSpecError):
            worst_case_family(1.0, theta)


class TestValueSimilar:
    def test_absorbing_state_holds(self, toy):
        rep = value_similar_check(toy.instance, TOY_BASE, 3, np.linspace(0, 1, 5))
        assert rep.precondition and rep.ok
        assert rep.message == "holds"
        np.testing.assert_allclose(rep.values, 2.0, atol=1e-8)

    def test_precondition_not_met(self, toy):
        rep = value_similar_check(toy.instance, TOY_BASE, 1, [0.5])
        assert not rep.precondition
        assert rep.message == "precondition not met"


class TestSuboptimalityBound:
    def test_zero_at_optimum_and_at_theta_zero(self, rng):
        inst = rand_mdp(rng, 4, 2)
        base = rand_stoch(rng, 4, 2)
        best = solve_adamdp(inst, base, 0.6, 1e-10).recommendation
        assert suboptimality_bound(inst, base, best, 0.6).bound == 0.0
        assert suboptimality_bound(inst, base, rand_det(rng, 4, 2), 0.0).bound == 0.0

    def test_counterexample_reported(self):
        # one state, reward 1 for the first action and 0 for the baseline's;
        # with pi_alg = baseline the loss is theta/(1-lam) but the bound is 2 theta^2/(1-lam)^2
        inst = MdpInstance(np.ones((1, 2, 1)), np.array([[[1.0], [0.0]]]), [1.0], 0.5)
        rep = suboptimality_bound(inst, [[0.0, 1.0]], [[0.0, 1.0]], 0.1)
        assert rep.actual == pytest.approx(0.2)
        assert rep.bound == pytest.approx(2 * 0.01 / 0.25)
        assert not rep.holds

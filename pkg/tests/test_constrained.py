import io
import math

import numpy as np
import pytest

from adamdp import CardinalityBudget, GuardExceededError, InvalidSpecError, evaluate_constrained, export_mip
from adamdp.constrained import adherence_patterns, count_subsets
from lpreader import parse_lp, solve_lp_model
from oracles import TOY_ALG, TOY_BASE, rand_mdp, rand_stoch, ret


class TestBudget:
    @pytest.mark.parametrize("k", [-1, 1.5])
    def test_invalid(self, k):
        with pytest.raises(InvalidSpecError):
            CardinalityBudget(k)

    def test_exceeds_states(self, toy):
        with pytest.raises(InvalidSpecError):
            evaluate_constrained(toy.instance, TOY_ALG, TOY_BASE, CardinalityBudget(6))


class TestPatterns:
    def test_lexicographic_order(self):
        pats = adherence_patterns(3, 1)
        np.testing.assert_array_equal(pats, [[0, 0, 0], [0, 0, 1], [0, 1, 0], [1, 0, 0]])

    @pytest.mark.parametrize("S, k", [(4, 0), (4, 2), (5, 5)])
    def test_count(self, S, k):
        assert count_subsets(S, k) == sum(math.comb(S, j) for j in range(k + 1))
        assert len(adherence_patterns(S, k)) == count_subsets(S, k)

    def test_guard(self):
        with pytest.raises(GuardExceededError):
            adherence_patterns(25, 25)


class TestEvaluateConstrained:
    def test_zero_budget_is_baseline(self, rng):
        inst = rand_mdp(rng, 4, 2)
        alg, base = rand_stoch(rng, 4, 2), rand_stoch(rng, 4, 2)
        u, r = evaluate_constrained(inst, alg, base, CardinalityBudget(0))
        np.testing.assert_array_equal(u, np.zeros(4))
        assert r == pytest.approx(ret(inst, base), abs=1e-12)

    def test_alg_equals_base(self, rng):
        inst = rand_mdp(rng, 4, 2)
        base = rand_stoch(rng, 4, 2)
        for k in range(5):
            u, r = evaluate_constrained(inst, base, base, CardinalityBudget(k))
            np.testing.assert_array_equal(u, np.zeros(4))
            assert r == pytest.approx(ret(inst, base), abs=1e-12)

    def test_toy_single_state(self, toy):
        u, r = evaluate_constrained(toy.instance, TOY_ALG, TOY_BASE, CardinalityBudget(5))
        # adhering only at the third state diverts the chain into the zero-reward state
        np.testing.assert_array_equal(u, [0, 0, 1, 0, 0])
        assert r == pytest.approx(0.0, abs=1e-12)

    def test_permutation_invariance(self, rng):
        inst = rand_mdp(rng, 4, 2)
        alg, base = rand_stoch(rng, 4, 2), rand_stoch(rng, 4, 2)
        perm = rng.permutation(4)
        from adamdp import MdpInstance
        permuted = MdpInstance(inst.transitions[perm][:, :, perm], inst.rewards[perm][:, :, perm],
                               inst.initial_dist[perm], inst.discount)
        for k in range(5):
            _, r1 = evaluate_constrained(inst, alg, base, CardinalityBudget(k))
            _, r2 = evaluate_constrained(permuted, alg[perm], base[perm], CardinalityBudget(k))
            assert r1 == pytest.approx(r2, abs=1e-10)


class TestExportMip:
    def test_structure(self, toy):
        buf = io.StringIO()
        export_mip(toy.instance, TOY_ALG, TOY_BASE, CardinalityBudget(2), buf)
        model = parse_lp(buf.getvalue())
        assert len(model.rows) == 5 * 5 + 1
        assert model.free == {f"{p}_{s}" for p in "vz" for s in range(5)}
        assert model.rows[-1][0] == "budget" and model.rows[-1][3] == 2.0

    @pytest.mark.parametrize("k", [0, 1, 2, 4])
    def test_external_optimum_matches_enumeration(self, k):
        rng = np.random.default_rng(100 + k)
        for _ in range(3):
            inst = rand_mdp(rng, 4, 2)
            alg, base = rand_stoch(rng, 4, 2), rand_stoch(rng, 4, 2)
            buf = io.StringIO()
            export_mip(inst, alg, base, CardinalityBudget(k), buf)
            opt, _ = solve_lp_model(parse_lp(buf.getvalue()))
            assert opt == pytest.approx(evaluate_constrained(inst, alg, base, CardinalityBudget(k))[1], abs=1e-6)

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ambrl.environments import (ResampleBudgetExceeded, SjInstanceSpec, TreeInstanceSpec, kl_bernoulli,
                                kl_half_vs_shifted, random_layered_mdp, sj_hard_instance,
                                tree_lower_bound_base, tree_lower_bound_perturbed)
from ambrl.mdp import backward_induction, validate


def inverse_gap_sum(sol):
    g = sol.gap[np.isfinite(sol.gap)]
    return float(np.sum(1 / g[g > 1e-9]))


class TestSjInstance:
    def test_gaps_n4(self):
        mdp = sj_hard_instance(SjInstanceSpec(4, 0.1))
        sol = backward_induction(mdp)
        idx = mdp.index
        assert sol.gap[idx["s1"], 1] == pytest.approx(0.1, abs=1e-12)
        assert sol.gap[idx["s2"], 1] == pytest.approx(0.6, abs=1e-12)
        assert sol.gap[idx["s3"], 1] == pytest.approx(0.5, abs=1e-12)
        assert sol.gap[idx["s4"], 1] == pytest.approx(0.5, abs=1e-12)
        assert sol.gap_min_global == pytest.approx(0.1, abs=1e-12)

    @pytest.mark.parametrize("n,d", [(3, 0.01), (8, 0.1), (40, 0.05)])
    def test_values(self, n, d):
        mdp = sj_hard_instance(SjInstanceSpec(n, d))
        assert validate(mdp).ok
        assert mdp.num_states == n and mdp.horizon == 2
        sol = backward_induction(mdp)
        assert sol.v0_star == pytest.approx(0.5 + d, abs=1e-12)
        assert sol.q_star[mdp.index["s1"], 1] == pytest.approx(0.5, abs=1e-12)
        assert not sol.z_mul

    @pytest.mark.parametrize("n,d", [(2, 0.1), (8, 0.0), (8, 0.125), (3.5, 0.1)])
    def test_rejects(self, n, d):
        with pytest.raises(ValueError):
            SjInstanceSpec(n, d)


class TestTree:
    def test_n4(self):
        spec = TreeInstanceSpec(4, 2, 0.1)
        mdp = tree_lower_bound_base(spec)
        assert validate(mdp).ok
        assert mdp.num_states == 7 == spec.num_states
        assert mdp.horizon == 3 == spec.horizon
        sol = backward_induction(mdp)
        assert sol.gap_min_global == pytest.approx(0.1, abs=1e-12)
        # root, the left level-2 node and (x1, a2) each carry gap gamma
        assert inverse_gap_sum(sol) == pytest.approx(30.0, rel=1e-9)

    @pytest.mark.parametrize("n,A", [(2, 2), (8, 2), (16, 3), (32, 2)])
    def test_inverse_gap_formula(self, n, A):
        g = 0.1
        sol = backward_induction(tree_lower_bound_base(TreeInstanceSpec(n, A, g)))
        assert inverse_gap_sum(sol) == pytest.approx((math.log2(n) + A - 1) / g, rel=1e-9)

    def test_perturbed(self):
        base = tree_lower_bound_base(TreeInstanceSpec(4, 2, 0.1))
        p = tree_lower_bound_perturbed(base, 3, 2, 0.1)
        x3 = p.index["x3"]
        assert p.reward_mean[x3, 1] == pytest.approx(0.7)
        leaf_means = {float(round(v, 12)) for s in range(3, 7) for v in p.reward_mean[s]}
        assert leaf_means == {0.5, 0.6, 0.7}
        sol = backward_induction(p)
        assert sol.v0_star == pytest.approx(0.7)
        assert sol.greedy_policy()[x3] == 1
        np.testing.assert_array_equal(base.reward_mean[x3], [0.5, 0.5])

    @pytest.mark.parametrize("i,j", [(1, 1), (5, 1), (2, 3), (2, 0)])
    def test_perturbed_rejects(self, i, j):
        base = tree_lower_bound_base(TreeInstanceSpec(4, 2, 0.1))
        with pytest.raises(ValueError):
            tree_lower_bound_perturbed(base, i, j, 0.1)

    def test_leaf_action_override(self):
        mdp = tree_lower_bound_base(TreeInstanceSpec(4, 3, 0.1, leaf_actions=(3, 1, 2, 3)))
        assert mdp.num_actions[-4:].tolist() == [3, 1, 2, 3]
        assert validate(mdp).ok

    @pytest.mark.parametrize("kw", [dict(num_leaves=6), dict(num_leaves=1), dict(num_leaves=4, gamma=0.2),
                                    dict(num_leaves=4, last_level_actions=1)])
    def test_spec_rejects(self, kw):
        with pytest.raises(ValueError):
            TreeInstanceSpec(**kw)


class TestRandom:
    def test_deterministic(self):
        a = random_layered_mdp([3, 4, 2], 3, 17)
        b = random_layered_mdp([3, 4, 2], 3, 17)
        np.testing.assert_array_equal(a.transition, b.transition)
        np.testing.assert_array_equal(a.reward_mean, b.reward_mean)
        assert not np.array_equal(a.reward_mean, random_layered_mdp([3, 4, 2], 3, 18).reward_mean)

    @given(st.lists(st.integers(1, 4), min_size=1, max_size=3), st.integers(2, 4), st.integers(0, 10**6))
    def test_valid(self, sizes, A, seed):
        mdp = random_layered_mdp(sizes, A, seed)
        assert validate(mdp).ok
        assert mdp.horizon == len(sizes)

    def test_min_gap(self):
        mdp = random_layered_mdp([10, 10, 10], 3, 0, min_gap=0.15)
        sol = backward_induction(mdp)
        assert sol.gap_min_global >= 0.15
        assert not sol.z_mul

    def test_budget(self):
        with pytest.raises(ResampleBudgetExceeded):
            random_layered_mdp([2], 2, 0, min_gap=0.999, max_resamples=5)


class TestKl:
    @pytest.mark.parametrize("x", np.linspace(0.01, 0.25, 25))
    def test_closed_form_and_bound(self, x):
        kl = kl_bernoulli(0.5, 0.5 + x)
        assert abs(kl - kl_half_vs_shifted(x)) <= 1e-12
        assert kl <= 8 * x * x / 3

    @given(st.floats(0.001, 0.999), st.floats(0.001, 0.999))
    def test_nonnegative(self, p, q):
        assert kl_bernoulli(p, q) >= 0

    @pytest.mark.parametrize("p,q", [(0, 0.5), (0.5, 1.0), (-0.1, 0.5)])
    def test_rejects_boundary(self, p, q):
        with pytest.raises(ValueError):
            kl_bernoulli(p, q)

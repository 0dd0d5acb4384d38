import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairloop.catalog import Catalog, build_catalog
from fairloop.oracle import (ENUMERATION_BUDGET, EnumerationBudgetError, OfflineInstance, brute_force_optimum,
                             budget_feasible, objective, realized_objective, regret, required_budget,
                             solve_offline_flow, solve_offline_milp, solve_offline_optimum)


def tiny_instance(seed, T=3, n_items=5, K=2, n_providers=3, lam=1.0, richness=1.5):
    rng = np.random.default_rng(seed)
    provider_of = np.concatenate([np.arange(n_providers), rng.integers(0, n_providers, n_items - n_providers)])
    cat = build_catalog(provider_of, K, T, richness)
    return OfflineInstance(rng.random((T, n_items)), cat, lam)


class TestExamples:
    def test_single_step(self):
        inst = OfflineInstance([[0.9, 0.1]], Catalog(np.array([0, 1]), np.array([1.0, 1.0]), 1, 1), 0.0)
        res = solve_offline_optimum(inst)
        assert res.value == pytest.approx(0.9)
        assert res.decisions[0].tolist() == [0]

    def test_two_step_alternation(self):
        inst = OfflineInstance([[0.9, 0.1], [0.9, 0.1]], Catalog(np.array([0, 1]), np.array([1.0, 1.0]), 1, 2), 1.0)
        res = solve_offline_optimum(inst)
        assert res.value == pytest.approx(1.5)
        assert sorted(int(d[0]) for d in res.decisions) == [0, 1]
        assert not budget_feasible(inst, [[0], [0]])
        assert realized_objective(inst, [[0], [0]]) == -math.inf
        assert objective(inst, [[0], [0]]) == pytest.approx(0.9)

    def test_large_lambda_equalizes(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            cat = Catalog(np.array([0, 0, 1, 1, 2, 2]), np.array([2.0, 2.0, 2.0]), 1, 6)
            inst = OfflineInstance(rng.random((6, 6)), cat, 100.0)
            res = solve_offline_optimum(inst)
            counts = np.bincount(cat.provider_of[np.concatenate(res.decisions)], minlength=3)
            np.testing.assert_array_equal(counts, [2, 2, 2])

    def test_infeasible_budget(self):
        cat = Catalog(np.array([0, 1]), np.array([0.5, 0.5]), 1, 1)
        res = solve_offline_optimum(OfflineInstance([[0.3, 0.4]], cat, 1.0))
        assert not res.feasible

    def test_budget_guard(self):
        cat = build_catalog(np.arange(60) % 3, K=5, T=3)
        inst = OfflineInstance(np.zeros((3, 60)), cat, 1.0)
        assert required_budget(inst) > ENUMERATION_BUDGET
        with pytest.raises(EnumerationBudgetError, match=str(required_budget(inst))):
            solve_offline_optimum(inst)


class TestRegret:
    def test_zero(self):
        assert regret(1.25, 1.25) == 0.0

    def test_greedy_zero_regret_at_zero_lambda(self):
        rng = np.random.default_rng(3)
        cat = build_catalog([0, 1, 2, 0, 1, 2], K=2, T=4, richness=10.0)
        inst = OfflineInstance(rng.random((4, 6)), cat, 0.0)
        greedy = [np.argsort(-row, kind="stable")[:2] for row in inst.true_scores]
        assert regret(realized_objective(inst, greedy), solve_offline_optimum(inst).value) == pytest.approx(0.0)

    def test_slack_budget_is_mean_top_k(self):
        rng = np.random.default_rng(4)
        cat = build_catalog([0, 1, 1, 0, 2], K=2, T=3, richness=10.0)
        inst = OfflineInstance(rng.random((3, 5)), cat, 0.0)
        expected = np.mean([np.sort(row)[-2:].sum() for row in inst.true_scores])
        assert solve_offline_optimum(inst).value == pytest.approx(expected)

    @given(st.integers(0, 10_000))
    @settings(max_examples=30)
    def test_random_sequences_dominated(self, seed):
        inst = tiny_instance(seed)
        rng = np.random.default_rng(seed)
        opt = solve_offline_optimum(inst).value
        seq = [rng.choice(inst.catalog.n_items, inst.catalog.K, replace=False) for _ in range(inst.horizon)]
        assert regret(realized_objective(inst, seq), opt) >= -1e-9


class TestSolversAgree:
    @pytest.mark.parametrize("seed", range(12))
    def test_enumeration_routes(self, seed):
        inst = tiny_instance(seed, T=3, n_items=5, K=2, lam=[0.0, 0.5, 3.0][seed % 3])
        dp = solve_offline_optimum(inst)
        bf = brute_force_optimum(inst)
        assert dp.feasible == bf.feasible
        if dp.feasible:
            assert dp.value == pytest.approx(bf.value, abs=1e-12)
            assert realized_objective(inst, dp.decisions) == pytest.approx(dp.value)

    @pytest.mark.parametrize("seed", range(6))
    def test_program_routes(self, seed):
        inst = tiny_instance(seed, T=5, n_items=7, K=2, n_providers=3, lam=[0.2, 1.0, 4.0][seed % 3])
        dp = solve_offline_optimum(inst).value
        assert solve_offline_milp(inst).value == pytest.approx(dp, abs=1e-9)
        assert solve_offline_flow(inst).value == pytest.approx(dp, abs=1e-9)

    def test_flow_matches_milp_medium(self):
        rng = np.random.default_rng(0)
        cat = build_catalog(np.arange(20) % 4, K=3, T=12)
        inst = OfflineInstance(rng.random((12, 20)), cat, 0.5)
        flow = solve_offline_flow(inst)
        assert flow.value == pytest.approx(solve_offline_milp(inst).value, abs=1e-9)
        assert budget_feasible(inst, flow.decisions)


class TestProperties:
    @given(st.integers(0, 10_000))
    @settings(max_examples=20)
    def test_permutation_invariance(self, seed):
        inst = tiny_instance(seed)
        perm = np.random.default_rng(seed).permutation(inst.catalog.n_items)
        cat = inst.catalog
        permuted = OfflineInstance(inst.true_scores[:, perm], Catalog(cat.provider_of[perm], cat.gamma, cat.K, cat.T),
                                   inst.lam)
        assert solve_offline_optimum(permuted).value == pytest.approx(solve_offline_optimum(inst).value)

    @given(st.integers(0, 10_000), st.floats(0, 1))
    @settings(max_examples=20)
    def test_monotone_in_scores(self, seed, bump):
        inst = tiny_instance(seed)
        base = solve_offline_optimum(inst).value
        rng = np.random.default_rng(seed)
        scores = inst.true_scores.copy()
        scores[rng.integers(inst.horizon), rng.integers(inst.catalog.n_items)] += bump
        assert solve_offline_optimum(OfflineInstance(scores, inst.catalog, inst.lam)).value >= base - 1e-12

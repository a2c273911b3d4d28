#!/usr/bin/env python3
"""
Test suite for the tabular empirical-MDP machinery and the tabular CRR updates
"""

import os
import sys

import numpy as np
import pytest

# Add the repository root to path for imports
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from errors import ConfigurationError, InputError, ParseError, ValidationError
from tabular import (
    TabularMdp,
    TabularPolicy,
    TabularValues,
    build_empirical_mdp,
    check_coherent,
    check_policy_improvement,
    check_support_containment,
    crr_binary_update,
    crr_exp_fixed_temperature_update,
    crr_exp_update,
    epsilon_mdp_gap,
    evaluate_policy,
    optimal_values,
    random_coherent_dataset,
    random_mdp,
    read_tabular_records,
    sample_dataset,
    tabular_crr,
    write_tabular_records,
)

MU_BANDIT = np.array([2.0 / 3.0, 1.0 / 3.0])


def bandit_mdp(discount=0.9):
    transition = np.zeros((2, 2, 2))
    transition[:, :, 1] = 1.0
    reward = np.array([[0.5, 0.9], [0.0, 0.0]])
    return TabularMdp(transition, reward, discount, {1})


def bandit_empirical():
    records = [(0, 0, 0.5, 1, True)] * 2 + [(0, 1, 0.9, 1, True)]
    return build_empirical_mdp(records, 2, 2, 0.9, {1})


def kl(p, q):
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


class TestCoherence:
    """Coherence of (s, a, s') datasets"""

    def test_chain_ending_in_terminal(self):
        """Test a chain that ends in a terminal state"""
        assert check_coherent([(0, 0, 1), (1, 0, 2)], terminal_states={2})

    def test_dangling_successor(self):
        """Test a successor never seen as a source"""
        assert not check_coherent([(0, 0, 1)], terminal_states=set())

    def test_self_loop(self):
        """Test self-loops are coherent"""
        assert check_coherent([(0, 0, 0)])

    def test_out_of_range_index(self):
        """Test indices beyond the state count"""
        with pytest.raises(InputError):
            check_coherent([(0, 0, 5)], n_states=3)


class TestEmpiricalMdp:
    """Construction of the empirical MDP"""

    def test_behavior_policy_from_counts(self):
        """Test behavior policy from action counts"""
        records = [(0, 0, 1.0, 1, False)] * 3 + [(0, 1, 0.0, 1, False)]
        empirical = build_empirical_mdp(records, 2, 2, 0.9, terminal_states={1})
        np.testing.assert_allclose(empirical.mu_b[0], [0.75, 0.25])
        assert empirical.n_transitions == 4

    def test_unseen_pair_goes_to_sink(self):
        """Test unseen pairs lead to the sink with zero reward"""
        records = [(0, 0, 1.0, 1, False), (1, 0, 0.0, 0, False)]
        empirical = build_empirical_mdp(records, 2, 2, 0.9)
        sink = empirical.terminal_sink
        assert empirical.transition[1, 1, sink] == 1.0
        assert empirical.reward[1, 1] == 0.0

    def test_empty_dataset_uniform_behavior(self):
        """Test empty dataset gives a uniform behavior"""
        empirical = build_empirical_mdp([], 1, 3, 0.9)
        np.testing.assert_allclose(empirical.mu_b[0], np.full(3, 1.0 / 3.0))
        assert empirical.n_transitions == 0

    def test_state_weights_sum_to_one(self):
        """Test empirical distributions are normalised"""
        rng = np.random.default_rng(3)
        mdp = random_mdp(rng, 6, 3)
        empirical = build_empirical_mdp(random_coherent_dataset(rng, mdp), 6, 3, mdp.discount, mdp.terminal_states)
        assert empirical.d_b.sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(empirical.mu_b.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(empirical.transition.sum(axis=2), 1.0, atol=1e-12)

    def test_incoherent_dataset_rejected(self):
        """Test incoherent datasets"""
        with pytest.raises(ValidationError):
            build_empirical_mdp([(0, 0, 1.0, 1, False)], 2, 1, 0.9)

    def test_conflicting_rewards_rejected(self):
        """Test conflicting rewards in strict mode"""
        records = [(0, 0, 1.0, 0, False), (0, 0, 0.0, 0, False)]
        with pytest.raises(ValidationError):
            build_empirical_mdp(records, 1, 1, 0.9)

    def test_mean_reward_mode_averages(self):
        """Test mean reward mode"""
        records = [(0, 0, 1.0, 0, False), (0, 0, 0.0, 0, False)]
        empirical = build_empirical_mdp(records, 1, 1, 0.9, reward_mode="mean")
        assert empirical.reward[0, 0] == pytest.approx(0.5)

    def test_terminal_flag_routes_to_sink(self):
        """Test terminal transitions go to the sink"""
        empirical = bandit_empirical()
        assert empirical.transition[0, 0, empirical.terminal_sink] == 1.0
        assert empirical.transition[0, 1, empirical.terminal_sink] == 1.0


class TestEvaluatePolicy:
    """Exact policy evaluation"""

    def test_absorbing_state_geometric_series(self):
        """Test a rewarding absorbing state"""
        mdp = TabularMdp(np.ones((1, 1, 1)), np.ones((1, 1)), 0.9)
        values = evaluate_policy(mdp, np.ones((1, 1)))
        assert values.v[0] == pytest.approx(10.0, abs=1e-10)

    def test_bandit_behavior_value(self):
        """Test bandit behavior value"""
        values = evaluate_policy(bandit_mdp(), np.array([MU_BANDIT, [0.5, 0.5]]))
        assert values.v[0] == pytest.approx(2.0 / 3.0 * 0.5 + 1.0 / 3.0 * 0.9, abs=1e-12)

    def test_iterate_and_solve_agree(self):
        """Test linear solve and iteration agree"""
        rng = np.random.default_rng(11)
        mdp = random_mdp(rng, 5, 3, discount=0.9)
        policy = rng.dirichlet(np.ones(3), size=5)
        solved = evaluate_policy(mdp, policy, method="solve")
        iterated = evaluate_policy(mdp, policy, method="iterate")
        assert np.max(np.abs(solved.q - iterated.q)) < 1e-8

    def test_linear_solve_oracle(self):
        """Test evaluation against a direct solve"""
        rng = np.random.default_rng(5)
        mdp = random_mdp(rng, 5, 2, discount=0.8)
        policy = rng.dirichlet(np.ones(2), size=5)
        p_pi = np.einsum("sa,sat->st", policy, mdp.transition)
        r_pi = (policy * mdp.reward).sum(axis=1)
        v = np.linalg.solve(np.eye(5) - 0.8 * p_pi, r_pi)
        np.testing.assert_allclose(evaluate_policy(mdp, policy).v, v, atol=1e-8)

    def test_discount_one_rejected(self):
        """Test discount of one"""
        mdp = TabularMdp(np.ones((1, 1, 1)), np.ones((1, 1)), 1.0)
        with pytest.raises(ConfigurationError):
            evaluate_policy(mdp, np.ones((1, 1)))

    def test_optimal_values_bandit(self):
        """Test optimal bandit value"""
        values = optimal_values(bandit_mdp())
        assert values.v[0] == pytest.approx(0.9, abs=1e-10)


class TestUpdates:
    """Closed-form tabular CRR updates"""

    def test_binary_bandit(self):
        """Test binary update on the bandit"""
        values = TabularValues(q=np.array([[0.5, 0.9]]), v=np.array([MU_BANDIT @ [0.5, 0.9]]))
        policy = crr_binary_update(values, MU_BANDIT[None])
        np.testing.assert_allclose(policy.probs[0], [0.0, 1.0])

    def test_binary_constant_q_returns_behavior(self):
        """Test constant Q leaves the behavior unchanged"""
        mu = np.array([[0.2, 0.3, 0.5]])
        values = TabularValues(q=np.full((1, 3), 2.0), v=np.array([2.0]))
        np.testing.assert_allclose(crr_binary_update(values, mu).probs, mu)

    def test_binary_deterministic_behavior(self):
        """Test deterministic behavior cannot be changed"""
        mu = np.array([[0.0, 1.0, 0.0]])
        values = TabularValues(q=np.array([[5.0, 1.0, 3.0]]), v=np.array([1.0]))
        np.testing.assert_allclose(crr_binary_update(values, mu).probs, mu)

    def test_exp_large_budget_is_greedy(self):
        """Test a loose KL budget gives the greedy policy"""
        values = TabularValues(q=np.array([[0.5, 0.9]]), v=np.array([0.6333]))
        policy = crr_exp_update(values, MU_BANDIT[None], epsilon=1e6)
        np.testing.assert_allclose(policy.probs[0], [0.0, 1.0], atol=1e-12)

    def test_exp_tiny_budget_is_behavior(self):
        """Test a tiny KL budget keeps the behavior"""
        values = TabularValues(q=np.array([[0.5, 0.9]]), v=np.array([0.6333]))
        policy = crr_exp_update(values, MU_BANDIT[None], epsilon=1e-9)
        assert 0.5 * np.abs(policy.probs[0] - MU_BANDIT).sum() < 1e-4

    def test_exp_budget_binds(self):
        """Test the KL budget is met exactly"""
        values = TabularValues(q=np.array([[0.5, 0.9]]), v=np.array([0.6333]))
        policy, betas = crr_exp_update(values, MU_BANDIT[None], epsilon=0.2, return_temperatures=True)
        assert kl(policy.probs[0], MU_BANDIT) == pytest.approx(0.2, abs=1e-8)
        assert policy.probs[0, 1] > MU_BANDIT[1]
        assert betas[0] > 0

    def test_exp_fixed_temperature(self):
        """Test fixed-temperature exponential update"""
        values = TabularValues(q=np.array([[0.5, 0.9]]), v=np.array([0.6333]))
        policy = crr_exp_fixed_temperature_update(values, MU_BANDIT[None], beta=1.0)
        expected = MU_BANDIT * np.exp([0.5, 0.9])
        np.testing.assert_allclose(policy.probs[0], expected / expected.sum())


class TestTabularCrr:
    """Policy iteration and the proposition checkers"""

    def test_bandit_binary_two_iterations(self):
        """Test binary CRR on the bandit after two iterations"""
        trajectory = tabular_crr(bandit_empirical(), "binary", iterations=2)
        policy, values = trajectory[-1]
        np.testing.assert_allclose(policy.probs[0], [0.0, 1.0])
        assert values.v[0] == pytest.approx(0.9)
        assert len(trajectory) == 3

    def test_bandit_binary_fixed_point(self):
        """Test binary CRR reaches a fixed point"""
        trajectory = tabular_crr(bandit_empirical(), "binary", iterations=4)
        for policy, _ in trajectory[1:]:
            np.testing.assert_array_equal(policy.probs, trajectory[1][0].probs)

    def test_starts_at_behavior(self):
        """Test the trajectory starts at the behavior"""
        empirical = bandit_empirical()
        np.testing.assert_array_equal(tabular_crr(empirical, "exp", 1)[0][0].probs, empirical.mu_b)

    def test_iterations_must_be_positive(self):
        """Test iteration count must be positive"""
        with pytest.raises(ConfigurationError):
            tabular_crr(bandit_empirical(), "binary", iterations=0)

    @staticmethod
    def _random_empirical(seed):
        rng = np.random.default_rng(seed)
        mdp = random_mdp(rng, 5, 3)
        return build_empirical_mdp(random_coherent_dataset(rng, mdp), 5, 3, mdp.discount, mdp.terminal_states)

    @pytest.mark.parametrize("variant", ["binary", "exp"])
    def test_support_and_improvement_random(self, variant):
        """Test support containment and improvement on random MDPs"""
        for seed in range(10):
            empirical = self._random_empirical(seed)
            trajectory = tabular_crr(empirical, variant, iterations=10)
            for (old, _), (new, _) in zip(trajectory, trajectory[1:]):
                assert check_support_containment(new, empirical.mu_b)
                assert check_policy_improvement(empirical, old, new, tol=1e-9)

    def test_fixed_temperature_stays_in_support(self):
        """Test fixed-temperature updates stay in the behavior support"""
        for seed in range(10):
            empirical = self._random_empirical(seed)
            for policy, _ in tabular_crr(empirical, "exp_beta", iterations=5):
                assert check_support_containment(policy, empirical.mu_b)

    def test_support_containment_detects_leak(self):
        """Test support leaks are detected"""
        mu = np.array([[1.0, 0.0]])
        assert not check_support_containment(TabularPolicy(np.array([[0.5, 0.5]])), mu)
        assert check_support_containment(TabularPolicy(mu), mu)

    def test_policy_improvement_identity(self):
        """Test a policy improves on itself"""
        empirical = bandit_empirical()
        assert check_policy_improvement(empirical, empirical.behavior, empirical.behavior)

    def test_bandit_improvement(self):
        """Test binary CRR improves on the bandit behavior"""
        empirical = bandit_empirical()
        improved = tabular_crr(empirical, "binary", iterations=1)[1][0]
        assert check_policy_improvement(empirical, empirical.behavior, improved)


class TestEmpiricalGap:
    """True-vs-empirical Q gap"""

    def test_deterministic_mdp_has_no_gap(self):
        """Test deterministic MDPs have no Q gap"""
        rng = np.random.default_rng(2)
        mdp = random_mdp(rng, 5, 2, branching=1)
        behavior = np.full((5, 2), 0.5)
        records = sample_dataset(rng, mdp, behavior, 500)
        empirical = build_empirical_mdp(records, 5, 2, mdp.discount, mdp.terminal_states)
        assert epsilon_mdp_gap(mdp, empirical, behavior) < 1e-9

    def test_gap_shrinks_with_data(self):
        """Test Q gap shrinks with more data"""
        mdp = random_mdp(np.random.default_rng(6), 6, 2, n_terminal=1)
        behavior = np.full((6, 2), 0.5)
        gaps = []
        for n in (100, 10000):
            records = sample_dataset(np.random.default_rng(n), mdp, behavior, n)
            empirical = build_empirical_mdp(records, 6, 2, mdp.discount, mdp.terminal_states)
            gaps.append(epsilon_mdp_gap(mdp, empirical, behavior))
        assert gaps[1] < gaps[0]


class TestTabularFiles:
    """Line-oriented tabular dataset files"""

    def test_write_then_read(self, tmp_path):
        """Test tabular file write and read"""
        episodes = [[(0, 1, 0.5, 1, False), (1, 0, 1.0, 2, True)], [(0, 0, 0.25, 2, True)]]
        path = tmp_path / "tabular.csv"
        write_tabular_records(path, episodes)
        assert read_tabular_records(path) == [r for ep in episodes for r in ep]
        assert path.read_text().splitlines()[0] == "episode,step,s,a,r,s_next,terminal"

    def test_bad_line_reports_line_number(self, tmp_path):
        """Test parse errors carry the line number"""
        path = tmp_path / "bad.csv"
        path.write_text("episode,step,s,a,r,s_next,terminal\n0,0,0,0,1.0,1,0\n0,1,x,0,1.0,1,0\n")
        with pytest.raises(ParseError) as info:
            read_tabular_records(path)
        assert info.value.line_number == 3


if __name__ == "__main__":
    pytest.main([__file__])

"""Two-armed bandit: arm 0 pays 0 or 1 with equal odds, arm 1 pays 0.9."""

import numpy as np

from tabular import TabularMdp

ARM_PAYOFFS = (0.5, 0.9)


class TwoArmedBandit:
    """One-step episodic MDP with a single constant observation."""

    name = "bandit"
    obs_dim = 1
    act_dim = 1
    discrete = True
    n_actions = 2
    n_states = 1

    def __init__(self, p_arm0: float = 0.5, payoff_arm1: float = 0.9):
        self.p_arm0 = p_arm0
        self.payoff_arm1 = payoff_arm1

    @property
    def expected_payoffs(self):
        return np.array([self.p_arm0, self.payoff_arm1])

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        return np.ones(1)

    def step(self, action, rng: np.random.Generator):
        arm = int(np.asarray(action).ravel()[0])
        if arm == 0:
            reward = float(rng.random() < self.p_arm0)
        else:
            reward = self.payoff_arm1
        return np.ones(1), reward, True, False

    def state_index(self, observation) -> int:
        return 0

    def tabular_mdp(self, discount: float = 0.9) -> TabularMdp:
        """State 0 pulls an arm; state 1 is the absorbing end of the episode."""
        transition = np.zeros((2, 2, 2))
        transition[:, :, 1] = 1.0
        reward = np.zeros((2, 2))
        reward[0] = self.expected_payoffs
        return TabularMdp(transition, reward, discount, frozenset({1}))

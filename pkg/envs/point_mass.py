"""1-D point mass pushed towards the origin."""

import numpy as np

DT = 0.05


class PointMass1D:
    """
    State (x, v); action a in [-1, 1] (clipped). x' = x + 0.05 v,
    v' = v + 0.05 a, reward exp(-x'^2). Episodes last 100 steps and are
    never terminal.
    """

    name = "point_mass"
    obs_dim = 2
    act_dim = 1
    discrete = False

    def __init__(self, episode_length: int = 100, start_range: float = 2.0):
        self.episode_length = int(episode_length)
        self.start_range = float(start_range)
        self._state = np.zeros(2)
        self._steps = 0

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self._state = np.array([rng.uniform(-self.start_range, self.start_range), 0.0])
        self._steps = 0
        return self._state.copy()

    def step(self, action, rng: np.random.Generator):
        a = float(np.clip(np.asarray(action, dtype=np.float64).ravel()[0], -1.0, 1.0))
        x, v = self._state
        self._state = np.array([x + DT * v, v + DT * a])
        self._steps += 1
        reward = float(np.exp(-self._state[0] ** 2))
        return self._state.copy(), reward, False, self._steps >= self.episode_length


def expert_action(observation) -> np.ndarray:
    """Proportional-derivative controller clip(-1.2 x - 0.8 v)."""
    x, v = observation[0], observation[1]
    return np.array([np.clip(-1.2 * x - 0.8 * v, -1.0, 1.0)])

"""Deterministic grid world: walk from the start cell to the goal cell."""

import numpy as np

from errors import ConfigurationError
from tabular import TabularMdp

# (d_col, d_row) for N, E, S, W
MOVES = ((0, -1), (1, 0), (0, 1), (-1, 0))
ACTION_NAMES = ("N", "E", "S", "W")


class GridWorld:
    """
    Reward 1 on entering the goal, which is terminal. Moves into a wall leave
    the agent in place. Observations are one-hot cell encodings.
    """

    name = "gridworld"
    act_dim = 1
    discrete = True
    n_actions = 4

    def __init__(self, width: int = 5, height: int = 5, start=(0, 0), goal=(4, 4), step_limit: int = 50):
        self.width = int(width)
        self.height = int(height)
        self.start = tuple(int(c) for c in start)
        self.goal = tuple(int(c) for c in goal)
        self.step_limit = int(step_limit)
        for cell in (self.start, self.goal):
            if not self._inside(cell):
                raise ConfigurationError(f"cell {cell} outside a {self.width}x{self.height} grid")
        if self.start == self.goal or self.step_limit < 1:
            raise ConfigurationError("start must differ from goal and step_limit must be positive")
        self._cell = self.start
        self._steps = 0

    @property
    def n_states(self) -> int:
        return self.width * self.height

    @property
    def obs_dim(self) -> int:
        return self.n_states

    def _inside(self, cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def cell_index(self, cell) -> int:
        return cell[1] * self.width + cell[0]

    def index_cell(self, index: int):
        return index % self.width, index // self.width

    def encode(self, cell) -> np.ndarray:
        obs = np.zeros(self.n_states)
        obs[self.cell_index(cell)] = 1.0
        return obs

    def state_index(self, observation) -> int:
        return int(np.argmax(observation))

    def move(self, cell, action: int):
        d_col, d_row = MOVES[action]
        nxt = (cell[0] + d_col, cell[1] + d_row)
        return nxt if self._inside(nxt) else cell

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self._cell = self.start
        self._steps = 0
        return self.encode(self._cell)

    def step(self, action, rng: np.random.Generator):
        self._cell = self.move(self._cell, int(np.asarray(action).ravel()[0]))
        self._steps += 1
        reached = self._cell == self.goal
        truncated = not reached and self._steps >= self.step_limit
        return self.encode(self._cell), (1.0 if reached else 0.0), reached, truncated

    def optimal_action(self, cell) -> int:
        """Move east until the goal column, then south/north; west if the goal lies west."""
        if cell[0] < self.goal[0]:
            return 1
        if cell[0] > self.goal[0]:
            return 3
        return 2 if cell[1] < self.goal[1] else 0

    def manhattan(self) -> int:
        return abs(self.goal[0] - self.start[0]) + abs(self.goal[1] - self.start[1])

    def tabular_mdp(self, discount: float = 0.99) -> TabularMdp:
        n = self.n_states
        transition = np.zeros((n, self.n_actions, n))
        reward = np.zeros((n, self.n_actions))
        goal = self.cell_index(self.goal)
        for s in range(n):
            for a in range(self.n_actions):
                if s == goal:
                    transition[s, a, s] = 1.0
                    continue
                nxt = self.cell_index(self.move(self.index_cell(s), a))
                transition[s, a, nxt] = 1.0
                reward[s, a] = 1.0 if nxt == goal else 0.0
        return TabularMdp(transition, reward, discount, frozenset({goal}))

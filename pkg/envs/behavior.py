"""
Behavior policies that generate offline datasets, plus simple reference policies.

Every policy implements `act(observation, rng, deterministic=False)` and may
implement `begin_episode(rng)`, which rollouts call before each episode.
"""

from dataclasses import dataclass, field
from typing import Dict, Sequence

import numpy as np

from envs.point_mass import expert_action
from errors import ConfigurationError


class FixedMixturePolicy:
    """State-independent categorical policy (the bandit's logged behavior)."""

    def __init__(self, probs: Sequence[float]):
        self.probs = np.asarray(probs, dtype=np.float64)
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1.0) > 1e-12:
            raise ConfigurationError(f"mixture probabilities must form a distribution: {probs}")

    def act(self, observation, rng, deterministic=False):
        if deterministic:
            return np.array([float(np.argmax(self.probs))])
        return np.array([float(rng.choice(len(self.probs), p=self.probs))])


class ConstantPolicy:
    def __init__(self, action):
        self.action = np.atleast_1d(np.asarray(action, dtype=np.float64))

    def act(self, observation, rng, deterministic=False):
        return self.action.copy()


class TabularPolicyAgent:
    """Acts with a tabular policy table over env.state_index(observation)."""

    def __init__(self, probs: np.ndarray, state_index):
        self.probs = np.asarray(probs, dtype=np.float64)
        self.state_index = state_index

    def act(self, observation, rng, deterministic=False):
        row = self.probs[self.state_index(observation)]
        if deterministic:
            return np.array([float(np.argmax(row))])
        return np.array([float(rng.choice(len(row), p=row))])


class EpsilonGreedyGridPolicy:
    """
    Optimal grid-world action with probability 1 - eps, uniform otherwise.

    With several epsilons, episode i of a rollout uses epsilons[i % len].
    """

    def __init__(self, env, epsilons: Sequence[float]):
        self.env = env
        self.epsilons = [float(e) for e in epsilons]
        if not self.epsilons or any(not 0.0 <= e <= 1.0 for e in self.epsilons):
            raise ConfigurationError(f"epsilon values must lie in [0, 1]: {epsilons}")
        self._episode = -1

    @property
    def epsilon(self) -> float:
        return self.epsilons[max(self._episode, 0) % len(self.epsilons)]

    def begin_episode(self, rng):
        self._episode += 1

    def act(self, observation, rng, deterministic=False):
        cell = self.env.index_cell(self.env.state_index(observation))
        optimal = self.env.optimal_action(cell)
        if deterministic:
            return np.array([float(optimal)])
        if rng.random() < self.epsilon:
            return np.array([float(rng.integers(self.env.n_actions))])
        return np.array([float(optimal)])


class UniformPolicy:
    def __init__(self, env):
        self.env = env

    def act(self, observation, rng, deterministic=False):
        if self.env.discrete:
            return np.array([float(rng.integers(self.env.n_actions))])
        return rng.uniform(-1.0, 1.0, size=self.env.act_dim)


class PointMassMixturePolicy:
    """Each episode is driven either by the PD expert or by uniform random actions."""

    def __init__(self, expert_fraction: float = 0.5):
        if not 0.0 <= expert_fraction <= 1.0:
            raise ConfigurationError("expert_fraction must lie in [0, 1]")
        self.expert_fraction = expert_fraction
        self._expert = True

    def begin_episode(self, rng):
        self._expert = bool(rng.random() < self.expert_fraction)

    def act(self, observation, rng, deterministic=False):
        if self._expert or deterministic:
            return expert_action(observation)
        return rng.uniform(-1.0, 1.0, size=1)


@dataclass
class BehaviorSpec:
    """Named behavior policy plus parameters, as read from an experiment config."""

    name: str
    params: Dict = field(default_factory=dict)


BEHAVIORS = ("bandit_mixture", "epsilon_greedy", "point_mass_mixture", "uniform", "expert")


def default_behavior(env_name: str) -> BehaviorSpec:
    return {
        "bandit": BehaviorSpec("bandit_mixture", {"probs": [2.0 / 3.0, 1.0 / 3.0]}),
        "gridworld": BehaviorSpec("epsilon_greedy", {"epsilons": [0.3]}),
        "point_mass": BehaviorSpec("point_mass_mixture", {"expert_fraction": 0.5}),
    }[env_name]


def make_behavior(env, spec: BehaviorSpec):
    p = spec.params
    if spec.name == "bandit_mixture":
        return FixedMixturePolicy(p.get("probs", [2.0 / 3.0, 1.0 / 3.0]))
    if spec.name == "epsilon_greedy":
        epsilons = p.get("epsilons") or [p.get("eps", 0.3)]
        return EpsilonGreedyGridPolicy(env, epsilons)
    if spec.name == "point_mass_mixture":
        return PointMassMixturePolicy(p.get("expert_fraction", 0.5))
    if spec.name == "uniform":
        return UniformPolicy(env)
    if spec.name == "expert":
        if env.name == "gridworld":
            return EpsilonGreedyGridPolicy(env, [0.0])
        if env.name == "point_mass":
            return PointMassMixturePolicy(1.0)
        return FixedMixturePolicy([0.0, 1.0])
    raise ConfigurationError(f"unknown behavior {spec.name!r}; expected one of {BEHAVIORS}")

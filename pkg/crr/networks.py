"""Actor and critic networks: a residual MLP torso plus a head."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from distributional import AtomGrid
from errors import ValidationError
from nn import layers
from nn.heads import CategoricalValueHead, MixtureGaussianHead, SoftmaxPolicyHead
from nn.params import Params


class Actor:
    """pi_phi(a|s): residual MLP over observations feeding a policy head."""

    def __init__(self, obs_dim: int, head, hidden_width: int = 64, n_blocks: int = 4):
        self.head = head
        self.spec = layers.ResidualMlpSpec(obs_dim, head.output_dim, hidden_width, n_blocks)

    @property
    def obs_dim(self) -> int:
        return self.spec.input_dim

    @property
    def discrete(self) -> bool:
        return self.head.discrete

    def init(self, rng: np.random.Generator) -> Params:
        return layers.init_params(self.spec, rng, output_scale=0.1)

    def distribution(self, params: Params, observations: np.ndarray):
        out, tape = layers.forward(self.spec, params, np.atleast_2d(observations))
        return self.head.build(out), tape

    def log_prob(self, params: Params, observations: np.ndarray, actions: np.ndarray) -> np.ndarray:
        dist, _ = self.distribution(params, observations)
        return self.head.log_prob(dist, actions)

    def weighted_log_prob_grad(self, params: Params, observations: np.ndarray, actions: np.ndarray, coefficients: np.ndarray):
        """
        Returns (log_probs, gradient of sum_i coefficients[i] * log pi(a_i|s_i) wrt phi).
        """
        dist, tape = self.distribution(params, observations)
        log_probs = self.head.log_prob(dist, actions)
        grad_out = self.head.log_prob_grad(dist, actions) * np.asarray(coefficients)[:, None]
        return log_probs, layers.backward(self.spec, params, tape, grad_out)

    def sample(self, params: Params, observations: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        dist, _ = self.distribution(params, observations)
        return self.head.sample(dist, rng)

    def deterministic(self, params: Params, observations: np.ndarray, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        dist, _ = self.distribution(params, observations)
        return self.head.deterministic(dist, rng)

    def candidate_means(self, params: Params, observations: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        dist, _ = self.distribution(params, observations)
        return self.head.candidate_means(dist, rng)


class Critic:
    """Distributional Q_theta(s, a): residual MLP over [s, encode(a)] producing atom logits."""

    def __init__(self, obs_dim: int, act_dim: int, grid: AtomGrid = AtomGrid(), hidden_width: int = 64, n_blocks: int = 4, n_actions: Optional[int] = None):
        self.grid = grid
        self.value_head = CategoricalValueHead(grid)
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.n_actions = n_actions
        action_width = n_actions if n_actions is not None else act_dim
        self.spec = layers.ResidualMlpSpec(obs_dim + action_width, grid.n_atoms, hidden_width, n_blocks)

    def init(self, rng: np.random.Generator) -> Params:
        return layers.init_params(self.spec, rng, output_scale=0.1)

    def encode(self, observations: np.ndarray, actions: np.ndarray) -> np.ndarray:
        observations = np.atleast_2d(observations)
        actions = np.asarray(actions, dtype=np.float64).reshape(len(observations), -1)
        if self.n_actions is not None:
            idx = actions[:, 0].astype(np.int64)
            if np.any(idx < 0) or np.any(idx >= self.n_actions):
                raise ValidationError(f"discrete action out of range [0, {self.n_actions})")
            encoded = np.zeros((len(idx), self.n_actions))
            encoded[np.arange(len(idx)), idx] = 1.0
            actions = encoded
        return np.concatenate([observations, actions], axis=1)

    def logits(self, params: Params, observations: np.ndarray, actions: np.ndarray):
        return layers.forward(self.spec, params, self.encode(observations, actions))

    def probabilities(self, params: Params, observations: np.ndarray, actions: np.ndarray) -> np.ndarray:
        out, _ = self.logits(params, observations, actions)
        return self.value_head.probabilities(out)

    def q_value(self, params: Params, observations: np.ndarray, actions: np.ndarray) -> np.ndarray:
        out, _ = self.logits(params, observations, actions)
        return self.value_head.mean(out)

    def backward(self, params: Params, tape, grad_logits: np.ndarray) -> np.ndarray:
        return layers.backward(self.spec, params, tape, grad_logits)


@dataclass
class Networks:
    actor: Actor
    critic: Critic


def make_networks(env, grid: AtomGrid = AtomGrid(), hidden_width: int = 64, n_blocks: int = 4, n_components: int = 5, deterministic_mode: str = "max_weight") -> Networks:
    """Softmax policy for discrete environments, mixture of Gaussians otherwise."""
    if env.discrete:
        head = SoftmaxPolicyHead(env.n_actions)
        n_actions = env.n_actions
    else:
        head = MixtureGaussianHead(env.act_dim, n_components, deterministic_mode)
        n_actions = None
    actor = Actor(env.obs_dim, head, hidden_width, n_blocks)
    critic = Critic(env.obs_dim, env.act_dim, grid, hidden_width, n_blocks, n_actions)
    return Networks(actor, critic)

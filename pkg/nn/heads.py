"""
Output heads that turn raw network outputs into distributions.

MixtureGaussianHead   continuous actions, K diagonal Gaussians
SoftmaxPolicyHead     discrete actions
CategoricalValueHead  return distribution over a fixed atom grid

Each policy head exposes the same methods: `build`, `log_prob`,
`log_prob_grad`, `sample`, `deterministic` and `candidate_means`.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import log_softmax, logsumexp, softmax

from distributional import AtomGrid, mean_value
from errors import ConfigurationError, NumericError, ValidationError

LOG_STD_MIN = -10.0
LOG_STD_MAX = 4.0
HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)
DETERMINISTIC_MODES = ("max_weight", "sampled_component")


@dataclass(frozen=True)
class MoGPolicy:
    """Batch of Gaussian mixtures: logits (B, K), means and log_stds (B, K, d)."""

    logits: np.ndarray
    means: np.ndarray
    log_stds: np.ndarray
    # True where the raw log-std was inside the clamp range (gradient passes).
    log_std_active: Optional[np.ndarray] = None

    @property
    def weights(self) -> np.ndarray:
        return softmax(self.logits, axis=-1)

    @property
    def n_components(self) -> int:
        return self.logits.shape[-1]

    @property
    def action_dim(self) -> int:
        return self.means.shape[-1]


@dataclass(frozen=True)
class CategoricalPolicy:
    """Batch of categorical action distributions: logits (B, n_actions)."""

    logits: np.ndarray

    @property
    def probs(self) -> np.ndarray:
        return softmax(self.logits, axis=-1)


def _batched(policy: MoGPolicy) -> MoGPolicy:
    if policy.logits.ndim == 1:
        active = None if policy.log_std_active is None else policy.log_std_active[None]
        return MoGPolicy(policy.logits[None], policy.means[None], policy.log_stds[None], active)
    return policy


def _component_log_probs(policy: MoGPolicy, actions: np.ndarray) -> np.ndarray:
    """log w_k + log N(a; mu_k, sigma_k^2), shape (B, K)."""
    z = (actions[:, None, :] - policy.means) * np.exp(-policy.log_stds)
    gauss = -0.5 * z ** 2 - policy.log_stds - HALF_LOG_2PI
    return log_softmax(policy.logits, axis=-1) + gauss.sum(axis=-1)


def mog_log_prob(policy_out: MoGPolicy, action: np.ndarray):
    """
    log sum_k w_k N(action; mu_k, diag sigma_k^2), stabilised by log-sum-exp.

    Args:
        policy_out: a single mixture or a batch
        action: (d,) or (B, d)

    Returns:
        float for a single mixture, (B,) array for a batch
    """
    single = policy_out.logits.ndim == 1
    policy = _batched(policy_out)
    actions = np.atleast_2d(np.asarray(action, dtype=np.float64))
    if not np.all(np.isfinite(actions)):
        raise NumericError("action contains non-finite values")
    if actions.shape[-1] != policy.action_dim:
        raise ValidationError(f"action dimension {actions.shape[-1]} does not match policy {policy.action_dim}")
    result = logsumexp(_component_log_probs(policy, actions), axis=-1)
    return float(result[0]) if single else result


def mog_sample(policy_out: MoGPolicy, rng: np.random.Generator, noise: bool = True) -> np.ndarray:
    """Draw a component from the mixture weights, then a diagonal Gaussian sample (or its mean if noise is off)."""
    single = policy_out.logits.ndim == 1
    policy = _batched(policy_out)
    weights = policy.weights
    batch = weights.shape[0]
    cumulative = np.cumsum(weights, axis=-1)
    u = rng.random(batch)
    components = np.minimum((u[:, None] > cumulative).sum(axis=-1), policy.n_components - 1)
    rows = np.arange(batch)
    means = policy.means[rows, components]
    if noise:
        stds = np.exp(policy.log_stds[rows, components])
        actions = means + stds * rng.standard_normal(means.shape)
    else:
        actions = means
    return actions[0] if single else actions


def mog_deterministic(policy_out: MoGPolicy, mode: str = "max_weight", rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Noise-free action.

    "max_weight" returns the mean of the highest-weight component (ties go to
    the lowest index); "sampled_component" draws the component and returns its mean.
    """
    if mode == "max_weight":
        single = policy_out.logits.ndim == 1
        policy = _batched(policy_out)
        components = np.argmax(policy.logits, axis=-1)
        actions = policy.means[np.arange(len(components)), components]
        return actions[0] if single else actions
    if mode == "sampled_component":
        if rng is None:
            raise ConfigurationError("sampled_component mode needs an rng")
        return mog_sample(policy_out, rng, noise=False)
    raise ConfigurationError(f"unknown deterministic mode {mode!r}; expected one of {DETERMINISTIC_MODES}")


class MixtureGaussianHead:
    """Splits a network output into K mixture logits, K*d means and K*d log-stds."""

    discrete = False

    def __init__(self, action_dim: int, n_components: int = 5, deterministic_mode: str = "max_weight"):
        if action_dim < 1 or n_components < 1:
            raise ConfigurationError("action_dim and n_components must be positive")
        if deterministic_mode not in DETERMINISTIC_MODES:
            raise ConfigurationError(f"unknown deterministic mode {deterministic_mode!r}")
        self.action_dim = action_dim
        self.n_components = n_components
        self.deterministic_mode = deterministic_mode

    @property
    def output_dim(self) -> int:
        return self.n_components * (1 + 2 * self.action_dim)

    def build(self, out: np.ndarray) -> MoGPolicy:
        out = np.atleast_2d(out)
        k, d = self.n_components, self.action_dim
        logits = out[:, :k]
        means = out[:, k:k + k * d].reshape(-1, k, d)
        raw = out[:, k + k * d:].reshape(-1, k, d)
        active = (raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)
        return MoGPolicy(logits, means, np.clip(raw, LOG_STD_MIN, LOG_STD_MAX), active)

    def log_prob(self, policy: MoGPolicy, actions: np.ndarray) -> np.ndarray:
        return mog_log_prob(_batched(policy), actions)

    def log_prob_grad(self, policy: MoGPolicy, actions: np.ndarray) -> np.ndarray:
        """d log pi(a|s) / d raw output, shape (B, output_dim)."""
        policy = _batched(policy)
        actions = np.atleast_2d(actions)
        comp = _component_log_probs(policy, actions)
        resp = softmax(comp, axis=-1)
        inv_var = np.exp(-2.0 * policy.log_stds)
        diff = actions[:, None, :] - policy.means
        d_logits = resp - policy.weights
        d_means = resp[:, :, None] * diff * inv_var
        d_log_stds = resp[:, :, None] * (diff ** 2 * inv_var - 1.0)
        if policy.log_std_active is not None:
            d_log_stds = d_log_stds * policy.log_std_active
        batch = actions.shape[0]
        return np.concatenate([d_logits, d_means.reshape(batch, -1), d_log_stds.reshape(batch, -1)], axis=1)

    def sample(self, policy: MoGPolicy, rng: np.random.Generator) -> np.ndarray:
        return mog_sample(_batched(policy), rng)

    def deterministic(self, policy: MoGPolicy, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        return mog_deterministic(_batched(policy), self.deterministic_mode, rng)

    def candidate_means(self, policy: MoGPolicy, rng: np.random.Generator) -> np.ndarray:
        """A component mean drawn by mixture weight (sampling with the Gaussian noise turned off)."""
        return mog_sample(_batched(policy), rng, noise=False)


class SoftmaxPolicyHead:
    """Categorical policy over n_actions; actions are (B, 1) arrays holding indices."""

    discrete = True

    def __init__(self, n_actions: int):
        if n_actions < 2:
            raise ConfigurationError("a discrete policy needs at least two actions")
        self.n_actions = n_actions
        self.action_dim = 1

    @property
    def output_dim(self) -> int:
        return self.n_actions

    def build(self, out: np.ndarray) -> CategoricalPolicy:
        return CategoricalPolicy(np.atleast_2d(out))

    def _indices(self, actions: np.ndarray) -> np.ndarray:
        actions = np.asarray(actions)
        if not np.all(np.isfinite(actions)):
            raise NumericError("action contains non-finite values")
        idx = actions.reshape(len(actions), -1)[:, 0].astype(np.int64)
        if np.any(idx < 0) or np.any(idx >= self.n_actions):
            raise ValidationError(f"discrete action out of range [0, {self.n_actions})")
        return idx

    def log_prob(self, policy: CategoricalPolicy, actions: np.ndarray) -> np.ndarray:
        idx = self._indices(actions)
        return log_softmax(policy.logits, axis=-1)[np.arange(len(idx)), idx]

    def log_prob_grad(self, policy: CategoricalPolicy, actions: np.ndarray) -> np.ndarray:
        idx = self._indices(actions)
        grad = -policy.probs
        grad[np.arange(len(idx)), idx] += 1.0
        return grad

    def sample(self, policy: CategoricalPolicy, rng: np.random.Generator) -> np.ndarray:
        cumulative = np.cumsum(policy.probs, axis=-1)
        u = rng.random(cumulative.shape[0])
        idx = np.minimum((u[:, None] > cumulative).sum(axis=-1), self.n_actions - 1)
        return idx[:, None].astype(np.float64)

    def deterministic(self, policy: CategoricalPolicy, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        return np.argmax(policy.logits, axis=-1)[:, None].astype(np.float64)

    def candidate_means(self, policy: CategoricalPolicy, rng: np.random.Generator) -> np.ndarray:
        return self.sample(policy, rng)

    def one_hot(self, actions: np.ndarray) -> np.ndarray:
        idx = self._indices(actions)
        encoded = np.zeros((len(idx), self.n_actions))
        encoded[np.arange(len(idx)), idx] = 1.0
        return encoded


class CategoricalValueHead:
    """Softmax over the atoms of a return grid."""

    def __init__(self, grid: AtomGrid = AtomGrid()):
        self.grid = grid

    @property
    def output_dim(self) -> int:
        return self.grid.n_atoms

    def probabilities(self, logits: np.ndarray) -> np.ndarray:
        return softmax(logits, axis=-1)

    def mean(self, logits: np.ndarray) -> np.ndarray:
        return mean_value(self.probabilities(logits), self.grid)

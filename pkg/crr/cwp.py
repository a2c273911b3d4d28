"""
Critic-weighted action selection at evaluation time.

Draw n candidate actions from the policy, weight them by exp(Q(s, a_i) / beta)
normalised over the candidates, and resample one.
"""

import numpy as np

from errors import ConfigurationError

EVAL_MODES = ("stochastic", "deterministic", "cwp")


def cwp_weights(q_values: np.ndarray, beta: float = 1.0) -> np.ndarray:
    """Self-normalised weights over the last axis, shift invariant in q_values."""
    if not beta > 0:
        raise ConfigurationError("CWP beta must be positive")
    logw = np.asarray(q_values, dtype=np.float64) / beta
    logw = logw - np.max(logw, axis=-1, keepdims=True)
    w = np.exp(logw)
    return w / w.sum(axis=-1, keepdims=True)


def cwp_select(actor, actor_params, critic, critic_params, observation: np.ndarray, n: int, beta: float,
               rng: np.random.Generator, component_means: bool = False) -> np.ndarray:
    """
    Args:
        actor, actor_params: proposal policy
        critic, critic_params: Q used for the weights
        observation: a single observation
        n: number of candidates
        beta: temperature
        rng: generator for candidate draws and the resampling draw
        component_means: candidates are mixture component means (noise off)

    Returns:
        the selected action, shape (act_dim,)
    """
    if n < 1:
        raise ConfigurationError("CWP needs at least one candidate")
    obs = np.repeat(np.atleast_2d(observation), n, axis=0)
    if component_means:
        candidates = actor.candidate_means(actor_params, obs, rng)
    else:
        candidates = actor.sample(actor_params, obs, rng)
    if n == 1:
        return candidates[0]
    weights = cwp_weights(critic.q_value(critic_params, obs, candidates), beta)
    return candidates[rng.choice(n, p=weights)]


class ActorPolicy:
    """
    Adapts trained actor/critic parameters to the rollout `act` interface.

    mode "stochastic" samples the policy, "deterministic" uses its noise-free
    action, "cwp" resamples among cwp_samples candidates by critic weight.
    """

    def __init__(self, networks, actor_params, critic_params=None, mode: str = "stochastic",
                 cwp_samples: int = 16, cwp_beta: float = 1.0, component_means: bool = False):
        if mode not in EVAL_MODES:
            raise ConfigurationError(f"unknown evaluation mode {mode!r}; expected one of {EVAL_MODES}")
        if mode == "cwp" and critic_params is None:
            raise ConfigurationError("CWP evaluation needs critic parameters")
        self.networks = networks
        self.actor_params = actor_params
        self.critic_params = critic_params
        self.mode = mode
        self.cwp_samples = cwp_samples
        self.cwp_beta = cwp_beta
        self.component_means = component_means

    def act(self, observation, rng: np.random.Generator, deterministic: bool = False) -> np.ndarray:
        actor = self.networks.actor
        if self.mode == "cwp":
            return cwp_select(actor, self.actor_params, self.networks.critic, self.critic_params, observation,
                              self.cwp_samples, self.cwp_beta, rng, self.component_means)
        if deterministic or self.mode == "deterministic":
            return actor.deterministic(self.actor_params, observation, rng)[0]
        return actor.sample(self.actor_params, observation, rng)[0]

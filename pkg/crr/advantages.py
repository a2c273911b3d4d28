"""
Advantage estimators for the filtered regression objective.

mean   Q(s, a) - 1/m sum_j Q(s, a_j)
max    Q(s, a) - max_j Q(s, a_j)
kstep  sum_{i<K} gamma^i r_{t+i} + gamma^K V(s_{t+K}) - V(s_t)
mc     R_t - V(s_t), with R_t the observed discounted return to episode end

Sampled actions a_j ~ pi(.|s) and V(s) = 1/m sum_j Q(s, a_j) use the online
actor and critic.
"""

from dataclasses import dataclass

import numpy as np

from data import Batch, SequenceBatch
from errors import ConfigurationError

ADVANTAGES = ("mean", "max", "kstep", "mc")


@dataclass(frozen=True)
class AdvantageSpec:
    variant: str = "mean"
    m: int = 4
    k: int = 5

    def __post_init__(self):
        if self.variant not in ADVANTAGES:
            raise ConfigurationError(f"unknown advantage {self.variant!r}; expected one of {ADVANTAGES}")
        if self.m < 1 or self.k < 1:
            raise ConfigurationError("advantage m and k must be >= 1")

    @property
    def sequential(self) -> bool:
        return self.variant in ("kstep", "mc")


def sampled_q(actor, actor_params, critic, critic_params, observations: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """Q(s, a_j) for m fresh policy samples per state, shape (B, m)."""
    observations = np.atleast_2d(observations)
    batch = len(observations)
    repeated = np.repeat(observations, m, axis=0)
    actions = actor.sample(actor_params, repeated, rng)
    return critic.q_value(critic_params, repeated, actions).reshape(batch, m)


def state_value(actor, actor_params, critic, critic_params, observations, m, rng) -> np.ndarray:
    return sampled_q(actor, actor_params, critic, critic_params, observations, m, rng).mean(axis=1)


def advantage(critic, critic_params, actor, actor_params, batch, spec: AdvantageSpec, rng: np.random.Generator, discount: float = 0.99) -> np.ndarray:
    """
    Per-element advantage estimates for a batch.

    Args:
        critic, critic_params: Q network used for every value estimate
        actor, actor_params: policy the baseline actions are drawn from
        batch: Batch for mean/max, SequenceBatch for kstep/mc
        spec: estimator variant
        rng: stream for the baseline action samples
        discount: gamma for the sequence estimators

    Returns:
        (B,) advantages
    """
    if spec.sequential and not isinstance(batch, SequenceBatch):
        raise ConfigurationError(f"the {spec.variant} advantage needs K-step sequences from an episodic dataset")
    first: Batch = batch.first if isinstance(batch, SequenceBatch) else batch

    if spec.variant in ("mean", "max"):
        q = critic.q_value(critic_params, first.observations, first.actions)
        baseline = sampled_q(actor, actor_params, critic, critic_params, first.observations, spec.m, rng)
        return q - (baseline.mean(axis=1) if spec.variant == "mean" else baseline.max(axis=1))

    v_start = state_value(actor, actor_params, critic, critic_params, first.observations, spec.m, rng)
    if spec.variant == "mc":
        return batch.mc_returns - v_start
    v_end = state_value(actor, actor_params, critic, critic_params, batch.bootstrap_observations(), spec.m, rng)
    return batch.discounted_rewards(discount) + batch.bootstrap_discounts(discount) * v_end - v_start

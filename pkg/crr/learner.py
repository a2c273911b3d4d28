"""
The offline actor-critic update loop.

Each step samples one batch, takes an actor step on the filtered regression
loss (weights from the online critic) and a critic step on the distributional
loss (targets from the target networks), then copies the online parameters
into the targets every `target_update_period` steps.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from crr.advantages import AdvantageSpec
from crr.filters import FilterSpec
from crr.losses import actor_loss, critic_loss
from crr.networks import Networks
from crr.optimizer import Adam, AdamMoments
from data import Dataset, sample_batch, sample_sequences
from errors import ConfigurationError, PreconditionError
from nn.params import Params
from seeding import RandomStreams

log = logging.getLogger(__name__)

METRIC_FIELDS = ["step", "actor_loss", "critic_loss", "mean_weight", "accept_frac"]


@dataclass
class LearnerConfig:
    batch_size: int = 64
    target_update_period: int = 100
    learning_rate: float = 1e-4
    n_updates: int = 20000
    discount: float = 0.99
    seed: int = 0
    filter: FilterSpec = field(default_factory=FilterSpec)
    advantage: AdvantageSpec = field(default_factory=AdvantageSpec)
    cwp_samples: int = 16
    cwp_beta: float = 1.0
    critic_samples: int = 4

    def validate(self) -> "LearnerConfig":
        if self.batch_size < 1 or self.target_update_period < 1 or self.n_updates < 0:
            raise ConfigurationError("batch_size and target_update_period must be positive, n_updates non-negative")
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be positive")
        if not 0.0 < self.discount < 1.0:
            raise ConfigurationError(f"discount must lie in (0, 1), got {self.discount}")
        if self.cwp_samples < 1 or not self.cwp_beta > 0 or self.critic_samples < 1:
            raise ConfigurationError("cwp_samples, cwp_beta and critic_samples must be positive")
        return self


@dataclass
class LearnerState:
    actor: Params
    critic: Params
    target_actor: Params
    target_critic: Params
    step: int
    actor_moments: AdamMoments
    critic_moments: AdamMoments

    def copy(self) -> "LearnerState":
        return LearnerState(
            self.actor.copy(), self.critic.copy(), self.target_actor.copy(), self.target_critic.copy(),
            self.step, self.actor_moments.copy(), self.critic_moments.copy(),
        )


def init_learner(networks: Networks, rng: np.random.Generator) -> LearnerState:
    """Fresh online parameters; targets start as exact copies."""
    actor = networks.actor.init(rng)
    critic = networks.critic.init(rng)
    return LearnerState(
        actor=actor,
        critic=critic,
        target_actor=actor.copy(),
        target_critic=critic.copy(),
        step=0,
        actor_moments=AdamMoments.zeros(len(actor)),
        critic_moments=AdamMoments.zeros(len(critic)),
    )


def _streams(rng):
    """(data, advantage, target) generators from RandomStreams or a single Generator."""
    if isinstance(rng, RandomStreams):
        return rng["data"], rng["advantage"], rng["target"]
    return rng, rng, rng


def sample_training_batch(dataset: Dataset, config: LearnerConfig, rng: np.random.Generator):
    spec = config.advantage
    needs_sequences = spec.sequential and config.filter.variant != "bc"
    if not needs_sequences:
        return sample_batch(dataset, config.batch_size, rng)
    if not dataset.sequential:
        raise ConfigurationError(f"the {spec.variant} advantage needs a dataset that stores full episodes")
    if config.batch_size > len(dataset):
        raise PreconditionError(f"batch size {config.batch_size} exceeds dataset size {len(dataset)}")
    k = spec.k if spec.variant == "kstep" else 1
    return sample_sequences(dataset, k, config.batch_size, rng, config.discount)


def learner_step(networks: Networks, state: LearnerState, dataset: Dataset, config: LearnerConfig, rng):
    """
    One actor update and one critic update.

    Args:
        networks: actor and critic architectures
        state: current parameters and optimizer moments (not modified)
        dataset: offline data
        config: learner settings
        rng: RandomStreams (uses the data/advantage/target streams) or one Generator

    Returns:
        (new LearnerState, metrics dict)
    """
    data_rng, advantage_rng, target_rng = _streams(rng)
    batch = sample_training_batch(dataset, config, data_rng)
    first = getattr(batch, "first", batch)

    a_loss, a_grad, a_info = actor_loss(
        networks.actor, state.actor, networks.critic, state.critic, batch,
        config.filter, config.advantage, advantage_rng, config.discount,
    )
    c_loss, c_grad, _ = critic_loss(
        networks.critic, state.critic, networks.actor, state.target_actor, state.target_critic,
        first, config.critic_samples, target_rng, config.discount,
    )

    actor_opt = Adam(config.learning_rate)
    critic_opt = Adam(config.learning_rate)
    actor_values, actor_moments = actor_opt.step(state.actor.values, a_grad, state.actor_moments)
    critic_values, critic_moments = critic_opt.step(state.critic.values, c_grad, state.critic_moments)

    step = state.step + 1
    actor = state.actor.with_values(actor_values)
    critic = state.critic.with_values(critic_values)
    if step % config.target_update_period == 0:
        target_actor, target_critic = actor.copy(), critic.copy()
    else:
        target_actor, target_critic = state.target_actor, state.target_critic

    weights = a_info["weights"]
    metrics = {
        "step": step,
        "actor_loss": a_loss,
        "critic_loss": c_loss,
        "mean_weight": float(np.mean(weights)),
        "accept_frac": float(np.mean(weights > 0)),
    }
    new_state = LearnerState(actor, critic, target_actor, target_critic, step, actor_moments, critic_moments)
    return new_state, metrics


def train(networks: Networks, state: LearnerState, dataset: Dataset, config: LearnerConfig, rng,
          n_updates: Optional[int] = None, callback: Optional[Callable[[LearnerState, Dict], None]] = None,
          log_every: int = 1000):
    """
    Run n_updates learner steps (config.n_updates by default).

    Returns (final state, per-step metrics); `callback(state, metrics)` runs after every step.
    """
    n_updates = config.n_updates if n_updates is None else n_updates
    history = []
    for _ in range(n_updates):
        state, metrics = learner_step(networks, state, dataset, config, rng)
        history.append(metrics)
        if callback is not None:
            callback(state, metrics)
        if log_every and metrics["step"] % log_every == 0:
            log.info(
                "step %d actor_loss %.4f critic_loss %.4f mean_weight %.3f accept_frac %.3f",
                metrics["step"], metrics["actor_loss"], metrics["critic_loss"], metrics["mean_weight"], metrics["accept_frac"],
            )
    return state, history

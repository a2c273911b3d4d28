"""Actor and critic losses with their analytic parameter gradients."""

from typing import Dict, Optional, Tuple

import numpy as np

from crr.advantages import AdvantageSpec, advantage
from crr.filters import FilterSpec, filter_weight
from data import SequenceBatch
from distributional import divergence, mixture_target, project_target
from errors import PreconditionError


def actor_loss(actor, actor_params, critic, critic_params, batch, filter_spec: FilterSpec, advantage_spec: AdvantageSpec,
               rng: np.random.Generator, discount: float = 0.99, weights: Optional[np.ndarray] = None) -> Tuple[float, np.ndarray, Dict]:
    """
    -1/B sum_i w_i log pi(a_i|s_i) with w_i = f(A(s_i, a_i)).

    The weights are constants of the gradient. Only dataset actions enter
    log pi. Passing `weights` skips the advantage computation.

    Returns:
        (loss, gradient wrt the actor parameters, info with "weights" and "advantages")
    """
    first = batch.first if isinstance(batch, SequenceBatch) else batch
    if len(first) == 0:
        raise PreconditionError("actor loss needs a nonempty batch")
    advantages = None
    if weights is None:
        if filter_spec.variant == "bc":
            weights = np.ones(len(first))
        else:
            advantages = advantage(critic, critic_params, actor, actor_params, batch, advantage_spec, rng, discount)
            weights = filter_weight(filter_spec, advantages)
    weights = np.asarray(weights, dtype=np.float64)
    n = len(first)
    log_probs, grad = actor.weighted_log_prob_grad(actor_params, first.observations, first.actions, -weights / n)
    loss = float(-np.mean(weights * log_probs))
    return loss, grad, {"weights": weights, "advantages": advantages}


def critic_targets(critic, target_actor, target_actor_params, target_critic_params, batch, m: int, rng: np.random.Generator, discount: float) -> np.ndarray:
    """Projected r + gamma * mixture over m next actions of the target critic's distributions, (B, n_atoms)."""
    size = len(batch)
    next_obs = np.repeat(batch.next_observations, m, axis=0)
    next_actions = target_actor.sample(target_actor_params, next_obs, rng)
    next_dists = critic.probabilities(target_critic_params, next_obs, next_actions).reshape(size, m, -1)
    discounts = discount * (1.0 - batch.terminals.astype(np.float64))
    return project_target(critic.grid, batch.rewards, discounts, mixture_target(next_dists))


def critic_loss(critic, critic_params, target_actor, target_actor_params, target_critic_params, batch, m: int,
                rng: np.random.Generator, discount: float = 0.99, targets: Optional[np.ndarray] = None) -> Tuple[float, np.ndarray, Dict]:
    """
    Mean cross-entropy between projected targets and the critic's distributions.

    Returns:
        (loss, gradient wrt the critic parameters, info with "targets" and "q_mean")
    """
    if len(batch) == 0:
        raise PreconditionError("critic loss needs a nonempty batch")
    if targets is None:
        targets = critic_targets(critic, target_actor, target_actor_params, target_critic_params, batch, m, rng, discount)
    logits, tape = critic.logits(critic_params, batch.observations, batch.actions)
    losses, grad_logits = divergence(logits, targets)
    n = len(batch)
    grad = critic.backward(critic_params, tape, grad_logits / n)
    q_mean = float(np.mean(critic.value_head.mean(logits)))
    return float(np.mean(losses)), grad, {"targets": targets, "q_mean": q_mean}

"""Episode rollouts and dataset generation."""

import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from data import Dataset, EpisodeRecord
from errors import ConfigurationError

log = logging.getLogger(__name__)

MODES = ("stochastic", "deterministic")


def run_episode(env, policy, rng: np.random.Generator, deterministic: bool = False) -> EpisodeRecord:
    if hasattr(policy, "begin_episode"):
        policy.begin_episode(rng)
    obs = env.reset(rng)
    observations, actions, rewards = [obs], [], []
    while True:
        action = np.atleast_1d(np.asarray(policy.act(obs, rng, deterministic=deterministic), dtype=np.float64))
        obs, reward, terminal, truncated = env.step(action, rng)
        observations.append(obs)
        actions.append(action)
        rewards.append(reward)
        if terminal or truncated:
            break
    return EpisodeRecord(
        observations=np.array(observations, dtype=np.float64),
        actions=np.array(actions, dtype=np.float64),
        rewards=np.array(rewards, dtype=np.float64),
        terminal=bool(terminal),
    )


def episode_seeds(rng: np.random.Generator, n_episodes: int) -> np.ndarray:
    """One independent seed per episode, so episode i is reproducible on its own."""
    return rng.integers(0, 2 ** 63 - 1, size=n_episodes)


def return_statistics(records: List[EpisodeRecord], discount: Optional[float] = None) -> Dict[str, float]:
    """Undiscounted return statistics, plus the mean discounted return when a discount is given."""
    returns = np.array([r.total_return for r in records])
    if len(returns) == 0:
        return {"mean": float("nan"), "std": float("nan"), "stderr": float("nan"), "n": 0}
    std = float(returns.std())
    stats = {
        "mean": float(returns.mean()),
        "std": std,
        "stderr": std / np.sqrt(len(returns)),
        "n": len(returns),
        "mean_length": float(np.mean([r.length for r in records])),
    }
    if discount is not None:
        stats["discounted_mean"] = float(np.mean([r.discounted_return(discount) for r in records]))
    return stats


def rollout(env, policy, n_episodes: int, rng: np.random.Generator, mode: str = "stochastic",
            discount: Optional[float] = None) -> Tuple[List[EpisodeRecord], Dict[str, float]]:
    """
    Run n_episodes full episodes.

    Args:
        env: environment instance
        policy: object with act(obs, rng, deterministic)
        n_episodes: number of episodes
        rng: parent generator; each episode gets its own child stream
        mode: "stochastic" or "deterministic" (noise-free action selection)
        discount: also report the mean discounted return

    Returns:
        (episode records, return statistics)
    """
    if mode not in MODES:
        raise ConfigurationError(f"unknown rollout mode {mode!r}")
    records = []
    for seed in episode_seeds(rng, n_episodes):
        records.append(run_episode(env, policy, np.random.default_rng(seed), deterministic=(mode == "deterministic")))
    stats = return_statistics(records, discount)
    log.debug("rollout %s: %d episodes, mean return %.4f", mode, n_episodes, stats["mean"])
    return records, stats


def generate_dataset(env, behavior, n_episodes: int, rng: np.random.Generator) -> Dataset:
    """Roll out a behavior policy and store the episodes as an offline dataset."""
    records, stats = rollout(env, behavior, n_episodes, rng, mode="stochastic")
    log.info("generated %d %s episodes, mean behavior return %.4f", n_episodes, env.name, stats["mean"])
    return Dataset.from_records(records, discrete=env.discrete)

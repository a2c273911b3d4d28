"""
Categorical value distributions on a fixed atom grid.

Provides the atom grid, the projected distributional Bellman target, the
cross-entropy divergence between a predicted softmax and a target, and the
mixture of next-action distributions used in the critic target.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, softmax

from errors import NumericError, ValidationError

N_ATOMS = 21
V_MIN = 0.0
V_MAX = 100.0


@dataclass(frozen=True)
class AtomGrid:
    """Uniformly spaced return atoms z_0 = v_min, ..., z_{n-1} = v_max."""

    n_atoms: int = N_ATOMS
    v_min: float = V_MIN
    v_max: float = V_MAX

    def __post_init__(self):
        if self.n_atoms < 2 or not self.v_max > self.v_min:
            raise ValidationError(f"invalid atom grid ({self.n_atoms}, {self.v_min}, {self.v_max})")

    @property
    def atoms(self) -> np.ndarray:
        return np.linspace(self.v_min, self.v_max, self.n_atoms)

    @property
    def spacing(self) -> float:
        return (self.v_max - self.v_min) / (self.n_atoms - 1)


def mean_value(dist: np.ndarray, grid: AtomGrid = AtomGrid()) -> np.ndarray:
    """Expected return sum_i p_i z_i; works on any leading batch shape."""
    return np.asarray(dist) @ grid.atoms


def project_target(grid: AtomGrid, rewards, discount, next_dist: np.ndarray) -> np.ndarray:
    """
    Project r + gamma * z onto the grid.

    Each shifted atom is clipped into [v_min, v_max] and its mass is split
    linearly between the two neighbouring grid atoms (triangular kernel).

    Args:
        grid: the atom grid
        rewards: scalar or (B,) rewards
        discount: scalar or (B,) discounts (0 on terminal transitions)
        next_dist: (n_atoms,) or (B, n_atoms) distributions

    Returns:
        Projected distribution(s), same shape as next_dist
    """
    next_dist = np.asarray(next_dist, dtype=float)
    single = next_dist.ndim == 1
    probs = np.atleast_2d(next_dist)
    rewards = np.broadcast_to(np.asarray(rewards, dtype=float), probs.shape[:1])
    discount = np.broadcast_to(np.asarray(discount, dtype=float), probs.shape[:1])
    if not (np.all(np.isfinite(rewards)) and np.all(np.isfinite(discount))):
        raise NumericError("rewards and discounts must be finite")

    z = grid.atoms
    shifted = np.clip(rewards[:, None] + discount[:, None] * z[None, :], grid.v_min, grid.v_max)
    # kernel[b, j, i]: share of shifted atom j landing on grid atom i
    kernel = np.clip(1.0 - np.abs(shifted[:, :, None] - z[None, None, :]) / grid.spacing, 0.0, 1.0)
    projected = np.einsum("bj,bji->bi", probs, kernel)
    return projected[0] if single else projected


def divergence(pred_logits: np.ndarray, target_dist: np.ndarray):
    """
    Cross-entropy -sum_i q_i log p_i with p = softmax(pred_logits).

    Returns:
        (loss, gradient) with loss per row (scalar for 1-D input) and
        gradient p - q wrt the logits
    """
    logp = log_softmax(pred_logits, axis=-1)
    loss = -np.sum(target_dist * logp, axis=-1)
    grad = softmax(pred_logits, axis=-1) - target_dist
    return loss, grad


def mixture_target(next_dists: np.ndarray) -> np.ndarray:
    """Average of m distributions along the second-to-last axis: (..., m, n_atoms) -> (..., n_atoms)."""
    next_dists = np.asarray(next_dists, dtype=float)
    if next_dists.ndim < 2 or next_dists.shape[-2] < 1:
        raise ValidationError("mixture_target needs at least one distribution")
    return next_dists.mean(axis=-2)


def entropy(dist: np.ndarray) -> np.ndarray:
    dist = np.asarray(dist, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(dist > 0, dist * np.log(dist), 0.0)
    return -terms.sum(axis=-1)

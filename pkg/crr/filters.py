"""Filter functions f applied to advantages in the filtered regression objective."""

from dataclasses import dataclass

import numpy as np

from errors import ConfigurationError

FILTERS = ("bc", "binary", "binary_max", "exp")


@dataclass(frozen=True)
class FilterSpec:
    """
    bc         f = 1 (plain behavior cloning)
    binary     f = 1[A > 0]
    binary_max f = 1[A > 0], paired with the max-based advantage
    exp        f = min(exp(A / beta), clip)
    """

    variant: str = "exp"
    beta: float = 1.0
    clip: float = 20.0

    def __post_init__(self):
        if self.variant not in FILTERS:
            raise ConfigurationError(f"unknown filter {self.variant!r}; expected one of {FILTERS}")
        if not self.beta > 0 or not self.clip > 0:
            raise ConfigurationError("filter beta and clip must be positive")

    @property
    def default_advantage(self) -> str:
        return "max" if self.variant == "binary_max" else "mean"


def filter_weight(spec: FilterSpec, advantage_value):
    """Non-negative weight, monotone non-decreasing in the advantage."""
    adv = np.asarray(advantage_value, dtype=np.float64)
    if spec.variant == "bc":
        weight = np.ones_like(adv)
    elif spec.variant in ("binary", "binary_max"):
        weight = (adv > 0).astype(np.float64)
    else:
        # Clamp the exponent first so large advantages cannot overflow.
        exponent = np.minimum(adv / spec.beta, np.log(spec.clip) + 1.0)
        weight = np.minimum(np.exp(exponent), spec.clip)
    return float(weight) if weight.ndim == 0 else weight

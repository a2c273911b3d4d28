"""Desk-scale environments, selected by name."""

from envs.bandit import TwoArmedBandit
from envs.gridworld import GridWorld
from envs.point_mass import PointMass1D
from errors import ConfigurationError

ENVIRONMENTS = {
    "bandit": TwoArmedBandit,
    "gridworld": GridWorld,
    "point_mass": PointMass1D,
}


def make_env(name: str, **params):
    if name not in ENVIRONMENTS:
        raise ConfigurationError(f"unknown environment {name!r}; expected one of {sorted(ENVIRONMENTS)}")
    return ENVIRONMENTS[name](**params)

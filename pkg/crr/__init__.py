"""Critic-regularized regression: filters, advantages, losses, learner and CWP."""

from crr.advantages import AdvantageSpec, advantage
from crr.cwp import ActorPolicy, cwp_select, cwp_weights
from crr.filters import FilterSpec, filter_weight
from crr.learner import LearnerConfig, LearnerState, init_learner, learner_step, train
from crr.losses import actor_loss, critic_loss
from crr.networks import Actor, Critic, Networks, make_networks

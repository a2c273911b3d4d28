"""Minimal differentiable network stack used by the CRR learner."""

"""Persistence for training runs: parameter checkpoints and metrics traces."""

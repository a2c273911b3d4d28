"""Adam over a flat parameter vector."""

from dataclasses import dataclass

import numpy as np

from errors import ConfigurationError, NumericError


@dataclass
class AdamMoments:
    """First/second moment estimates and the step count used for bias correction."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamMoments":
        return cls(np.zeros(size), np.zeros(size), 0)

    def copy(self) -> "AdamMoments":
        return AdamMoments(self.m.copy(), self.v.copy(), self.t)


class Adam:
    """
    Args:
        lr: learning rate
        beta1: exponential decay for the first moment
        beta2: exponential decay for the second moment
        eps: numerical stability term
    """

    def __init__(self, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if not lr > 0 or not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0 or not eps > 0:
            raise ConfigurationError("invalid Adam settings")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def step(self, values: np.ndarray, grad: np.ndarray, moments: AdamMoments):
        """
        One descent step. Returns (new values, new moments); inputs are not modified.
        """
        if not np.all(np.isfinite(grad)):
            raise NumericError("gradient contains non-finite values")
        t = moments.t + 1
        m = self.beta1 * moments.m + (1.0 - self.beta1) * grad
        v = self.beta2 * moments.v + (1.0 - self.beta2) * grad ** 2
        m_hat = m / (1.0 - self.beta1 ** t)
        v_hat = v / (1.0 - self.beta2 ** t)
        new_values = values - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return new_values, AdamMoments(m, v, t)

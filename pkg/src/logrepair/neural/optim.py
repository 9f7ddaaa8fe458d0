"""Nesterov-accelerated adaptive-moment optimizer."""

from __future__ import annotations

import numpy as np


class Nadam:
    """Adam with Nesterov momentum and the 0.96-power momentum schedule.

    This is the formulation mainstream deep-learning toolkits ship: the
    momentum coefficient mu_t = beta_1 * (1 - 0.5 * 0.96^t) grows over time
    and bias correction uses the running product of the mu_t.  Updates are
    applied in place and are deterministic for a given call sequence.
    """

    def __init__(self, learning_rate=0.002, beta_1=0.9, beta_2=0.999, epsilon=1e-7):
        self.learning_rate = learning_rate
        self.beta_1 = beta_1
        self.beta_2 = beta_2
        self.epsilon = epsilon
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._step = 0
        self._mu_product = 1.0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self._step += 1
        t = self._step
        mu_t = self.beta_1 * (1.0 - 0.5 * 0.96**t)
        mu_next = self.beta_1 * (1.0 - 0.5 * 0.96 ** (t + 1))
        self._mu_product *= mu_t
        mu_product_next = self._mu_product * mu_next
        for name, value in params.items():
            grad = grads[name]
            m = self._m.setdefault(name, np.zeros_like(value))
            v = self._v.setdefault(name, np.zeros_like(value))
            m += (1.0 - self.beta_1) * (grad - m)
            v += (1.0 - self.beta_2) * (grad * grad - v)
            m_hat = mu_next * m / (1.0 - mu_product_next) + (1.0 - mu_t) * grad / (
                1.0 - self._mu_product
            )
            v_hat = v / (1.0 - self.beta_2**t)
            value -= (self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)).astype(
                value.dtype
            )

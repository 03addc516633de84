"""Minimal optimizers over lists of weight arrays.

Both add the L2 penalty directly to the gradient (classic weight decay,
not the decoupled variant) and update weights in place. The learning
rate is a mutable attribute so schedules can adjust it between epochs
without resetting momentum or moment estimates.
"""

from __future__ import annotations

import numpy as np


class SGDMomentum:
    def __init__(self, shapes_like: list[np.ndarray], lr: float,
                 momentum: float = 0.9, weight_decay: float = 0.0):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 <= momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.weight_decay = float(weight_decay)
        self.velocity = [np.zeros_like(w) for w in shapes_like]

    def step(self, weights: list[np.ndarray], grads: list[np.ndarray]) -> None:
        for w, g, v in zip(weights, grads, self.velocity):
            g_eff = g + self.weight_decay * w
            v *= self.momentum
            v += g_eff
            w -= self.lr * v


class Adam:
    def __init__(self, shapes_like: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 weight_decay: float = 0.0):
        if lr < 0:
            raise ValueError("learning rate must be non-negative")
        self.lr = float(lr)
        self.beta1, self.beta2, self.eps = float(beta1), float(beta2), float(eps)
        self.weight_decay = float(weight_decay)
        self.t = 0
        self.m = [np.zeros_like(w) for w in shapes_like]
        self.v = [np.zeros_like(w) for w in shapes_like]

    def step(self, weights: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for w, g, m, v in zip(weights, grads, self.m, self.v):
            g_eff = g + self.weight_decay * w
            m *= self.beta1
            m += (1 - self.beta1) * g_eff
            v *= self.beta2
            v += (1 - self.beta2) * g_eff * g_eff
            w -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)

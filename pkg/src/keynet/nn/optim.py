"""Stochastic gradient descent with optional momentum."""

from __future__ import annotations

import numpy as np


class NonFiniteGradient(ValueError):
    """A NaN/Inf gradient; the update is refused before touching params."""


def sgd_update(params, grads, lr, momentum=0.0, velocities=None):
    """One SGD step, in place: v <- mu*v + g; p <- p - lr*v.

    Returns the velocity buffers so the caller can thread them through
    successive steps. A NaN anywhere in the gradients refuses the whole
    step (a poisoned update would corrupt the parameters silently).
    """
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if len(params) != len(grads):
        raise ValueError("params and grads length mismatch")
    for g in grads:
        if not np.isfinite(g).all():
            raise NonFiniteGradient("non-finite gradient; update refused")
    if velocities is None:
        velocities = [np.zeros_like(p) for p in params]
    for p, g, v in zip(params, grads, velocities):
        if p.shape != g.shape:
            raise ValueError(f"grad shape {g.shape} != param shape {p.shape}")
        if momentum:
            v *= momentum
            v += g
            p -= lr * v
        else:
            p -= lr * g
    return velocities


class SGD:
    """Stateful wrapper that owns the momentum buffers."""

    def __init__(self, lr, momentum=0.0):
        self.lr = float(lr)
        self.momentum = float(momentum)
        self._velocities = None

    def step(self, params, grads):
        self._velocities = sgd_update(params, grads, self.lr, self.momentum,
                                      self._velocities)
        return params

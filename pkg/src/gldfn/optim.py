"""Bias-corrected Adam over a WeightStore."""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError


class AdamState:
    """First/second moment buffers per parameter plus the step counter."""

    def __init__(self, store, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m = {name: np.zeros_like(t.data) for name, t in store.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in store.items()}


def adam_step(store, state, lr):
    """One update in place; parameters with grad=None are treated as zero-grad."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for name, t in store.items():
        g = t.grad
        if g is None:
            g = np.zeros_like(t.data)
        elif g.shape != t.data.shape:
            raise ShapeError(f"grad shape {g.shape} vs parameter '{name}' shape {t.data.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (lr / bc1) * m / (np.sqrt(v / bc2) + state.eps)
        t.data -= update.astype(t.data.dtype)


def scheduled_lr(lr0, iteration, halve_every):
    """lr0 * 0.5^(iteration // halve_every)."""
    return lr0 * 0.5 ** (iteration // halve_every)

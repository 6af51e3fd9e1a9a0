"""Adaptive-moment optimizer with a warm-up-then-cosine learning-rate schedule.

The schedule ramps linearly from zero to the peak rate over ``warmup_steps``
(so the rate at step W/2 is half the peak) and then follows a half-cosine
down to zero at ``total_steps``.  The rectified variant of the moment
estimator is not used; plain bias-corrected moments are sufficient at this
scale.
"""

from __future__ import annotations

import numpy as np


class OptimizerError(RuntimeError):
    pass


def learning_rate_at(step, peak_lr, warmup_steps, total_steps):
    """Learning rate for 0-indexed ``step``."""
    if warmup_steps > 0 and step < warmup_steps:
        return peak_lr * step / warmup_steps
    if total_steps <= warmup_steps:
        return peak_lr
    progress = (step - warmup_steps) / (total_steps - warmup_steps)
    progress = min(max(progress, 0.0), 1.0)
    return peak_lr * 0.5 * (1.0 + np.cos(np.pi * progress))


class Adam:
    def __init__(self, params, peak_lr=1e-3, warmup_steps=0, total_steps=1,
                 beta1=0.9, beta2=0.999, eps=1e-8, clip_value=None):
        self.params = list(params)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise OptimizerError("duplicate parameter names passed to optimizer")
        self.peak_lr = peak_lr
        self.warmup_steps = warmup_steps
        self.total_steps = total_steps
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_value = clip_value  # elementwise gradient clamp, off by default
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    @property
    def current_lr(self):
        return learning_rate_at(self.step_count, self.peak_lr, self.warmup_steps,
                                self.total_steps)

    def step(self):
        """Apply one update from the accumulated gradients, then clear them."""
        for p in self.params:
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise OptimizerError(f"non-finite gradient for parameter {p.name!r}")
        lr = self.current_lr
        self.step_count += 1
        t = self.step_count
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            elif self.clip_value is not None:
                g = np.clip(g, -self.clip_value, self.clip_value)
            self._m[i] = self.beta1 * self._m[i] + (1.0 - self.beta1) * g
            self._v[i] = self.beta2 * self._v[i] + (1.0 - self.beta2) * (g * g)
            m_hat = self._m[i] / (1.0 - self.beta1**t)
            v_hat = self._v[i] / (1.0 - self.beta2**t)
            p.data -= (lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.data.dtype)
            p.grad = None

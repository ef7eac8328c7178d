"""Adam, global-norm gradient clipping, and the linear warmup/decay
learning-rate schedule."""

import numpy as np


def clip_grads(grads: dict, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm.
    Returns the pre-clip norm."""
    total = 0.0
    for g in grads.values():
        total += float((g * g).sum())
    norm = np.sqrt(total)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params: dict, grads: dict, lr_scale: float = 1.0) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            params[name] -= (self.lr * lr_scale) * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def linear_schedule(total_steps: int, warmup_ratio: float = 0.045):
    """Linear warmup over warmup_ratio of the steps, then linear decay.

    Returns a function step -> multiplier (step is 0-indexed; the multiplier
    stays strictly positive through the final step).
    """
    warm = max(1, int(round(total_steps * warmup_ratio)))
    def scale(step: int) -> float:
        if step < warm:
            return (step + 1) / warm
        if total_steps <= warm:
            return 1.0
        return max(0.0, (total_steps - step) / (total_steps - warm))
    return scale

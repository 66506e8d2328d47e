"""ADAM optimizer on Parameter objects."""

from __future__ import annotations

import numpy as np


def adam_step(params, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected ADAM update per parameter. Gradients are left
    untouched; the caller clears them."""
    for p in params:
        p.step += 1
        g = p.grad
        p.m1 *= beta1
        p.m1 += (1.0 - beta1) * g
        p.m2 *= beta2
        p.m2 += (1.0 - beta2) * (g * g)
        mhat = p.m1 / (1.0 - beta1**p.step)
        vhat = p.m2 / (1.0 - beta2**p.step)
        p.value -= lr * mhat / (np.sqrt(vhat) + eps)


def zero_grads(params) -> None:
    for p in params:
        p.grad[...] = 0


def clip_grad_norm(params, max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = 0.0
    for p in params:
        total += float((p.grad * p.grad).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for p in params:
            p.grad *= scale
    return norm

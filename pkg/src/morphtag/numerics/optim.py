"""Adam with decoupled weight decay and global-norm gradient clipping."""

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import NonFiniteGradient


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def global_norm(grads):
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads))


def clip_by_global_norm(grads, clip_norm):
    """Rescale ``grads`` so their joint L2 norm is at most ``clip_norm``.

    Returns the (possibly new) gradient list and the pre-clipping norm.
    """
    norm = global_norm(grads)
    if math.isinf(clip_norm) or norm <= clip_norm:
        return list(grads), norm
    scale = clip_norm / norm
    return [g * scale for g in grads], norm


def adam_step(params, grads, lr, weight_decay=0.0, clip_norm=math.inf, state=None):
    """Update ``params`` (name -> array) in place and return the state.

    Order of operations: finite check, global-norm clipping, decoupled decay
    ``p -= lr * wd * p``, then the bias-corrected Adam delta.
    """
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if not (clip_norm > 0):
        raise ValueError(f"clip_norm must be positive or inf, got {clip_norm}")
    if state is None:
        state = AdamState()
    names = list(params)
    for name in names:
        if not np.all(np.isfinite(grads[name])):
            raise NonFiniteGradient(name)
    clipped, _ = clip_by_global_norm([grads[n] for n in names], clip_norm)

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, g in zip(names, clipped):
        p = params[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if weight_decay:
            p -= lr * weight_decay * p
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state

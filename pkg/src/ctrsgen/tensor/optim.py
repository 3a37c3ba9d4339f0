"""Gradient clipping and the Adam update."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .core import Tensor


def global_norm(grads) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads)))


def clip_global_norm(params: Mapping[str, Tensor] | list[Tensor], max_norm: float = 5.0) -> float:
    """Scale every gradient in place by ``max_norm / norm`` when the joint L2
    norm exceeds ``max_norm``.  Returns the norm before clipping."""
    tensors = list(params.values()) if isinstance(params, Mapping) else list(params)
    norm = global_norm(t.grad for t in tensors)
    if norm > max_norm:
        factor = max_norm / norm
        for t in tensors:
            t.grad = (t.grad * factor).astype(t.dtype, copy=False)
    return norm


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, Tensor],
    state: AdamState,
    lr: float = 5e-4,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """One bias-corrected Adam update applied in place to ``params``."""
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in params.items():
        g = p.grad
        if g is None or g.shape != p.shape:
            raise ValueError(f"adam_step: gradient of {name} has shape {None if g is None else g.shape}, expected {p.shape}")
        dt = p.dtype.type
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= dt(beta1)
        m += dt(1.0 - beta1) * g
        v *= dt(beta2)
        v += dt(1.0 - beta2) * (g * g)
        p.data -= dt(lr) * (m / dt(c1)) / (np.sqrt(v / dt(c2)) + dt(eps))
    return state

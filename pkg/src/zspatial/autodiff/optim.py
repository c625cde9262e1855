from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AdamState:
    m: tuple
    v: tuple
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, **kw) -> "AdamState":
        return cls(tuple(np.zeros_like(p) for p in params), tuple(np.zeros_like(p) for p in params), **kw)


def adam_step(params, grads, state: AdamState, lr: float | None = None):
    """One bias-corrected Adam update.  Returns ``(new_params, new_state)``;
    inputs are left untouched.  ``None`` gradients count as zero."""
    if len(params) != len(state.m):
        raise ValueError("parameter list does not match optimizer state")
    lr = state.lr if lr is None else lr
    t = state.step + 1
    new_p, new_m, new_v = [], [], []
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != m.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {m.shape}")
        g = np.zeros_like(p) if g is None else np.asarray(g).real
        m = state.beta1 * m + (1 - state.beta1) * g
        v = state.beta2 * v + (1 - state.beta2) * g * g
        new_p.append(p - lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
        new_m.append(m)
        new_v.append(v)
    st = AdamState(tuple(new_m), tuple(new_v), t, state.lr, state.beta1, state.beta2, state.eps)
    return new_p, st

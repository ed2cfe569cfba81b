"""AdamW with decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class AdamWState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adamw_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamWState) -> AdamWState:
    """Update ``params`` in place and advance ``state`` by one step.

    The weight-decay shrink ``w <- w - lr*wd*w`` is applied to the weights
    before, and independently of, the bias-corrected Adam update.  A
    non-finite gradient rejects the whole step without touching anything.
    """
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    for p, g in zip(params, grads):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {p.name or '?'}; step rejected")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    shrink = 1.0 - state.lr * state.weight_decay
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        if state.weight_decay:
            p.data *= p.dtype.type(shrink)
        step = (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data -= (state.lr * step).astype(p.dtype)
    return state


class AdamW:
    """Thin stateful wrapper binding a parameter list to an :class:`AdamWState`."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = list(params)
        self.state = AdamWState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps, weight_decay=weight_decay)

    def step(self, grads: Sequence[np.ndarray]) -> None:
        adamw_step(self.params, grads, self.state)

"""Gradient-based optimizers and gradient clipping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch
from .autograd import Tensor


def clip_grad_norm(params, max_norm: float) -> float:
    """Rescale gradients in place so their global L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    grads = [p.grad for p in params if p.grad is not None]
    with np.errstate(over="ignore", invalid="ignore"):
        total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if np.isfinite(total) and total > max_norm:
        scale = max_norm / total
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return total


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState) -> dict[str, np.ndarray]:
    """One Adam update; returns new parameter arrays and advances ``state``."""
    if set(params) != set(grads):
        raise ShapeMismatch(f"parameter/gradient names differ: {sorted(set(params) ^ set(grads))}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    out = {}
    for k, p in params.items():
        g = np.asarray(grads[k], dtype=np.float64)
        if g.shape != np.shape(p):
            raise ShapeMismatch(f"{k}: gradient shape {g.shape} != parameter shape {np.shape(p)}")
        m = state.m.get(k)
        v = state.v.get(k)
        if m is None:
            m = np.zeros_like(g)
            v = np.zeros_like(g)
        elif m.shape != g.shape:
            raise ShapeMismatch(f"{k}: moment shape {m.shape} != {g.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[k], state.v[k] = m, v
        out[k] = p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return out


def sgd_step(params, grads, lr: float):
    if set(params) != set(grads):
        raise ShapeMismatch("parameter/gradient names differ")
    out = {}
    for k, p in params.items():
        g = np.asarray(grads[k], dtype=np.float64)
        if g.shape != np.shape(p):
            raise ShapeMismatch(f"{k}: gradient shape {g.shape} != parameter shape {np.shape(p)}")
        out[k] = p - lr * g
    return out


class Adam:
    """Adam over a dict of named :class:`Tensor` parameters."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3, **kw):
        self.params = params
        self.state = AdamState(lr=lr, **kw)

    def step(self) -> None:
        names = [k for k, p in self.params.items() if p.grad is not None]
        new = adam_step(
            {k: self.params[k].data for k in names}, {k: self.params[k].grad for k in names}, self.state
        )
        for k, v in new.items():
            self.params[k].data = v

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


class SGD:
    def __init__(self, params: dict[str, Tensor], lr: float = 1e-2):
        if not lr > 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params, self.lr = params, lr

    def step(self) -> None:
        names = [k for k, p in self.params.items() if p.grad is not None]
        new = sgd_step({k: self.params[k].data for k in names}, {k: self.params[k].grad for k in names}, self.lr)
        for k, v in new.items():
            self.params[k].data = v

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

"""Parameter store, Adam with decoupled weight decay, LR schedule."""

from __future__ import annotations

import math

import numpy as np

from .autodiff import Tensor


class ParamStore:
    """Named trainable tensors plus per-parameter Adam moments."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, data) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name!r}")
        t = Tensor(data, requires_grad=True)
        self.params[name] = t
        self.m[name] = np.zeros_like(t.data)
        self.v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def items(self):
        return self.params.items()

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def num_params(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]):
        for k, t in self.params.items():
            if k not in arrays:
                raise KeyError(f"checkpoint missing parameter {k!r}")
            if arrays[k].shape != t.data.shape:
                raise ValueError(
                    f"parameter {k!r} shape {arrays[k].shape} != {t.data.shape}"
                )
            t.data = arrays[k].astype(t.data.dtype)


def adam_step(store: ParamStore, lr: float, beta1=0.9, beta2=0.999, eps=1e-8,
              weight_decay=0.0):
    """One bias-corrected Adam update; weight decay applied decoupled
    (shrink before the Adam delta), missing grads treated as zero."""
    store.step += 1
    t = store.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, p in store.params.items():
        if weight_decay:
            p.data -= lr * weight_decay * p.data
        g = p.grad
        if g is None:
            continue
        g = g.astype(np.float64) if p.data.dtype == np.float64 else g
        m = store.m[name]
        v = store.v[name]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * (g * g)
        p.data -= (lr * (m / bc1) / (np.sqrt(v / bc2) + eps)).astype(p.data.dtype)


def lr_at(step: int, peak: float, warmup_steps: int, total_steps: int) -> float:
    """Linear warmup to `peak`, then cosine decay to zero."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    if warmup_steps >= total_steps:
        raise ValueError("warmup_steps must be < total_steps")
    if step < warmup_steps:
        return peak * step / warmup_steps
    frac = (step - warmup_steps) / (total_steps - warmup_steps)
    return peak * 0.5 * (1.0 + math.cos(math.pi * frac))

"""Adam with elementwise gradient clipping and inverse-time learning-rate decay."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr: float = 0.001
    decay: float = 0.0
    clip_value: float | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    # largest |g| seen by the last update, after clipping
    last_max_abs_grad: float = 0.0

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        if self.clip_value is not None and self.clip_value <= 0:
            raise ValueError("clip_value must be positive")

    def effective_lr(self, step=None):
        """Learning rate applied by the update that follows ``step`` completed updates."""
        s = self.step if step is None else step
        return self.lr / (1.0 + self.decay * s)


def clip_gradients(grads, clip_value):
    if clip_value is None:
        return list(grads)
    return [np.clip(g, -clip_value, clip_value) for g in grads]


def adam_step(params, grads, state):
    """Apply one Adam update to ``params`` in place and advance ``state``.

    ``params`` are Tensors (or arrays), ``grads`` matching arrays.
    """
    if len(params) != len(grads):
        raise ValueError("one gradient per parameter")
    arrays = [getattr(p, "data", p) for p in params]
    if not state.m:
        state.m = [np.zeros_like(a) for a in arrays]
        state.v = [np.zeros_like(a) for a in arrays]
    for a, g, m in zip(arrays, grads, state.m):
        if a.shape != g.shape or a.shape != m.shape:
            raise ValueError(f"shape mismatch: param {a.shape}, grad {g.shape}, moment {m.shape}")

    grads = clip_gradients(grads, state.clip_value)
    lr_t = state.effective_lr()
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    peak = 0.0
    for a, g, m, v in zip(arrays, grads, state.m, state.v):
        g = g.astype(a.dtype, copy=False)
        if g.size:
            peak = max(peak, float(np.abs(g).max()))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        a -= (lr_t * (m / c1) / (np.sqrt(v / c2) + state.epsilon)).astype(a.dtype, copy=False)
    state.step = t
    state.last_max_abs_grad = peak
    return state

"""Central finite-difference gradient checking."""

import numpy as np

from .tensor import Tape


def relative_error(analytic, numeric, floor=1e-3):
    """Elementwise |a - n| / max(|a|, |n|, floor), maximised."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def numeric_gradient(fn, param, eps=1e-3):
    """d fn() / d param by central differences; ``fn`` returns a scalar Tensor."""
    data = param.data
    grad = np.zeros_like(data, dtype=np.float64)
    flat = data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        up = float(fn().item())
        flat[i] = old - eps
        down = float(fn().item())
        flat[i] = old
        gflat[i] = (up - down) / (2 * eps)
    return grad


def grad_check(fn, params, eps=1e-3, floor=1e-3):
    """Max relative error between backward() and finite differences over ``params``.

    ``fn`` builds the scalar loss from ``params`` each time it is called; it
    must be deterministic. Parameters should be float64 for a meaningful
    comparison at eps=1e-3.
    """
    for p in params:
        p.requires_grad = True
    with Tape() as tape:
        loss = fn()
    tape.backward(loss)
    analytic = [np.array(p.grad, dtype=np.float64) for p in params]
    worst = 0.0
    for p, a in zip(params, analytic):
        worst = max(worst, relative_error(a, numeric_gradient(fn, p, eps), floor))
    return worst

"""Central finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .params import NetworkParams
from .tensor import Tensor, no_grad


def numerical_gradients(loss_fn: Callable[[], Tensor], params: NetworkParams,
                        step: float = 1e-4) -> dict[str, np.ndarray]:
    """Central differences of ``loss_fn()`` w.r.t. every parameter element."""
    grads = {}
    with no_grad():
        for name, p in params.items():
            g = np.zeros_like(p.data)
            flat = p.data.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                up = loss_fn().item()
                flat[i] = orig - step
                down = loss_fn().item()
                flat[i] = orig
                gflat[i] = (up - down) / (2.0 * step)
            grads[name] = g
    return grads


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``, maximised."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def check_gradients(loss_fn: Callable[[], Tensor], params: NetworkParams,
                    step: float = 1e-4, floor: float = 1e-6) -> float:
    """Backprop once, compare with central differences, return the worst relative error."""
    params.zero_grad()
    loss_fn().backward()
    analytic = {name: p.grad.copy() for name, p in params.items()}
    numeric = numerical_gradients(loss_fn, params, step)
    return max(max_relative_error(analytic[n], numeric[n], floor) for n in analytic)

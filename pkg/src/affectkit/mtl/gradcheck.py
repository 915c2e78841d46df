from __future__ import annotations

from typing import Callable

import numpy as np

Arrays = dict[str, np.ndarray]


def numerical_gradient(loss_fn: Callable[[Arrays], float], params: Arrays, eps: float = 1e-5) -> Arrays:
    """Central differences ``(f(p + eps) - f(p - eps)) / (2 eps)`` per scalar.

    ``loss_fn`` receives a dict of perturbed copies; ``params`` is untouched.
    """
    work = {k: np.array(v, dtype=np.float64, copy=True) for k, v in params.items()}
    out: Arrays = {}
    for name, arr in work.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_fn(work)
            flat[i] = orig - eps
            down = loss_fn(work)
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * eps)
        out[name] = g
    return out


def max_relative_error(analytic: Arrays, numeric: Arrays, floor: float = 1e-8) -> float:
    """Largest ``|a - n| / max(|a|, |n|, floor)`` over all entries."""
    worst = 0.0
    for k, a in analytic.items():
        n = numeric[k]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom, initial=0.0)))
    return worst

"""SGD with momentum, Adam, and a reduce-on-plateau learning-rate schedule.

Optimizer steps are value-semantic: they return new parameter and state
dicts and never modify their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .config import Plateau, TrainConfig

Arrays = dict[str, np.ndarray]


@dataclass
class SgdState:
    velocity: Arrays = field(default_factory=dict)


@dataclass
class AdamState:
    m: Arrays = field(default_factory=dict)
    v: Arrays = field(default_factory=dict)
    t: int = 0


def _check(params: Arrays, grads: Arrays) -> None:
    for k, p in params.items():
        if k not in grads or grads[k].shape != p.shape:
            raise ValueError(f"gradient for {k!r} missing or mis-shaped")


def sgd_step(params: Arrays, grads: Arrays, cfg: TrainConfig, state: SgdState, lr: float | None = None) -> tuple[Arrays, SgdState]:
    """``v <- momentum * v + g``; ``p <- p - lr * v``."""
    _check(params, grads)
    lr = cfg.learning_rate if lr is None else lr
    new_p, new_v = {}, {}
    for k, p in params.items():
        v = grads[k] if k not in state.velocity else cfg.momentum * state.velocity[k] + grads[k]
        new_v[k] = v
        new_p[k] = p - lr * v
    return new_p, SgdState(new_v)


def adam_step(params: Arrays, grads: Arrays, cfg: TrainConfig, state: AdamState, lr: float | None = None) -> tuple[Arrays, AdamState]:
    _check(params, grads)
    lr = cfg.learning_rate if lr is None else lr
    b1, b2 = cfg.adam_betas
    t = state.t + 1
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        m = b1 * state.m.get(k, 0.0) + (1 - b1) * g
        v = b2 * state.v.get(k, 0.0) + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_p[k] = p - lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        new_m[k], new_v[k] = m, v
    return new_p, AdamState(new_m, new_v, t)


def init_optimizer_state(cfg: TrainConfig):
    return SgdState() if cfg.optimizer == "sgd" else AdamState()


def optimizer_step(params: Arrays, grads: Arrays, cfg: TrainConfig, state, lr: float | None = None):
    step = sgd_step if cfg.optimizer == "sgd" else adam_step
    return step(params, grads, cfg, state, lr)


@dataclass(frozen=True)
class PlateauState:
    lr: float
    settings: Plateau
    best: float = float("inf")
    bad_epochs: int = 0


def scheduler_step(state: PlateauState, val_loss: float) -> tuple[PlateauState, float]:
    """Cut the rate by ``factor`` after ``patience`` epochs without strict improvement."""
    s = state.settings
    if val_loss < state.best:
        state = replace(state, best=val_loss, bad_epochs=0)
    else:
        state = replace(state, bad_epochs=state.bad_epochs + 1)
    if state.bad_epochs >= s.patience:
        state = replace(state, lr=max(state.lr * s.factor, s.min_lr), bad_epochs=0)
    return state, state.lr

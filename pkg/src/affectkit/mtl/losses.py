"""Task losses and their gradients with respect to head outputs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import HEADS, TrainConfig
from .network import HeadGrads, ShapeMismatch, TaskOutputs


class ClassOutOfRange(ValueError):
    pass


class AllMasksEmpty(ValueError):
    pass


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax_cross_entropy(logits, targets, weights=None) -> tuple[float, np.ndarray]:
    """Class-weighted mean cross entropy, ``sum(w_t * nll) / sum(w_t)``."""
    logits = np.asarray(logits, dtype=np.float64)
    n, k = logits.shape
    t = np.asarray(targets).astype(np.int64).ravel()
    if t.shape != (n,):
        raise ShapeMismatch(f"{t.size} targets for {n} rows")
    if t.size and (t.min() < 0 or t.max() >= k):
        raise ClassOutOfRange(f"targets must lie in 0..{k - 1}")
    w = np.ones(k) if weights is None else np.asarray(weights, dtype=np.float64)
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    nll = log_norm - z[np.arange(n), t]
    wt = w[t]
    total = wt.sum()
    loss = float(np.dot(wt, nll) / total)
    probs = np.exp(z - log_norm[:, None])
    probs[np.arange(n), t] -= 1.0
    grad = probs * (wt / total)[:, None]
    return loss, grad


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def weighted_bce_with_logits(logits, targets, pos_weights=None) -> tuple[float, np.ndarray]:
    """Mean binary cross entropy on logits with a per-column positive weight."""
    x = np.asarray(logits, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeMismatch(f"logits {x.shape} vs targets {y.shape}")
    p = np.ones(x.shape[1]) if pos_weights is None else np.asarray(pos_weights, dtype=np.float64)
    # -log(sigmoid(x)) = softplus(-x), -log(1 - sigmoid(x)) = softplus(x)
    elem = p * y * _softplus(-x) + (1.0 - y) * _softplus(x)
    s = sigmoid(x)
    grad = (-p * y * (1.0 - s) + (1.0 - y) * s) / x.size
    return float(elem.mean()), grad


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def sigmoid_mse(logits, targets) -> tuple[float, np.ndarray]:
    """MSE between sigmoid probabilities and binary targets, gradient w.r.t. logits."""
    x = np.asarray(logits, dtype=np.float64)
    s = sigmoid(x)
    loss, g = mse_loss(s, targets)
    return loss, g * s * (1.0 - s)


@dataclass
class BatchLabels:
    expr: np.ndarray  # N class ids
    au: np.ndarray  # N x 12 binary
    va: np.ndarray  # N x 2

    def take(self, idx) -> "BatchLabels":
        return BatchLabels(self.expr[idx], self.au[idx], self.va[idx])


@dataclass
class BatchMasks:
    expr: np.ndarray
    au: np.ndarray
    va: np.ndarray

    def __getitem__(self, head: str) -> np.ndarray:
        return getattr(self, head)

    def take(self, idx) -> "BatchMasks":
        return BatchMasks(self.expr[idx], self.au[idx], self.va[idx])

    @classmethod
    def full(cls, n: int) -> "BatchMasks":
        return cls(*(np.ones(n, dtype=bool) for _ in HEADS))


@dataclass
class CombinedLoss:
    total: float
    parts: dict[str, float]  # unweighted per-task losses; 0.0 for empty masks
    counts: dict[str, int]
    grads: HeadGrads


def task_loss(head: str, out: np.ndarray, labels: BatchLabels, cfg: TrainConfig) -> tuple[float, np.ndarray]:
    if head == "expr":
        return softmax_cross_entropy(out, labels.expr, cfg.expr_class_weights)
    if head == "au":
        if cfg.au_loss_kind == "bce":
            return weighted_bce_with_logits(out, labels.au, cfg.au_pos_weights)
        return sigmoid_mse(out, labels.au)
    return mse_loss(out, labels.va)


def combined_loss(outputs: TaskOutputs, labels: BatchLabels, masks: BatchMasks, cfg: TrainConfig) -> CombinedLoss:
    """Weighted sum of the task losses, each averaged over its masked samples."""
    n = outputs.expr_logits.shape[0]
    grads = HeadGrads.zeros(n)
    parts: dict[str, float] = {}
    counts: dict[str, int] = {}
    total = 0.0
    for head, lam in zip(HEADS, cfg.loss_weights):
        mask = np.asarray(masks[head], dtype=bool)
        if mask.shape != (n,):
            raise ShapeMismatch(f"{head} mask has shape {mask.shape}, expected ({n},)")
        counts[head] = int(mask.sum())
        if counts[head] == 0:
            parts[head] = 0.0
            continue
        sub = labels.take(mask)
        loss, g = task_loss(head, outputs[head][mask], sub, cfg)
        parts[head] = loss
        total += lam * loss
        grads[head][mask] = lam * g
    if not any(counts.values()):
        raise AllMasksEmpty("no sample carries any task label")
    return CombinedLoss(total, parts, counts, grads)


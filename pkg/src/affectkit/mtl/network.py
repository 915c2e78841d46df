"""Shared fully connected trunk with expression, AU and valence/arousal heads.

Each trunk layer is ``linear -> batchnorm (optional) -> relu``.  The linear
layer carries no bias when batchnorm follows it, since the batchnorm shift
already plays that role.  Weight matrices are stored ``(out, in)``.
All arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import HEAD_DIMS, HEADS, ModelSpec

BN_EPS = 1e-5


class ShapeMismatch(ValueError):
    pass


class BatchTooSmall(ValueError):
    pass


class StaleCache(ValueError):
    pass


@dataclass
class ModelParams:
    spec: ModelSpec
    weights: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.spec,
            {k: v.copy() for k, v in self.weights.items()},
            {k: v.copy() for k, v in self.buffers.items()},
        )

    def replace_weights(self, weights: dict[str, np.ndarray]) -> "ModelParams":
        return ModelParams(self.spec, weights, self.buffers)

    def n_parameters(self) -> int:
        return sum(v.size for v in self.weights.values())

    def to_bytes(self) -> bytes:
        parts = []
        for group in (self.weights, self.buffers):
            for k in sorted(group):
                parts.append(k.encode())
                parts.append(np.ascontiguousarray(group[k]).tobytes())
        return b"\0".join(parts)


@dataclass
class TaskOutputs:
    expr_logits: np.ndarray  # N x 8
    au_logits: np.ndarray  # N x 12
    va_pred: np.ndarray  # N x 2, unbounded

    def __getitem__(self, head: str) -> np.ndarray:
        return {"expr": self.expr_logits, "au": self.au_logits, "va": self.va_pred}[head]


@dataclass
class HeadGrads:
    expr: np.ndarray
    au: np.ndarray
    va: np.ndarray

    def __getitem__(self, head: str) -> np.ndarray:
        return getattr(self, head)

    @classmethod
    def zeros(cls, n: int) -> "HeadGrads":
        return cls(*(np.zeros((n, HEAD_DIMS[h])) for h in HEADS))


@dataclass
class _LayerCache:
    inputs: np.ndarray
    pre_act: np.ndarray  # value fed to relu
    xhat: np.ndarray | None = None
    inv_std: np.ndarray | None = None
    batch_mean: np.ndarray | None = None
    batch_var: np.ndarray | None = None


@dataclass
class ForwardCache:
    layers: list[_LayerCache]
    features: np.ndarray  # trunk output shared by all heads


def _trunk_names(i: int) -> dict[str, str]:
    return {k: f"trunk{i}.{k}" for k in ("weight", "bias", "gamma", "beta", "running_mean", "running_var")}


def init_params(spec: ModelSpec, seed: int) -> ModelParams:
    """He-normal trunk weights, LeCun-normal head weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights: dict[str, np.ndarray] = {}
    buffers: dict[str, np.ndarray] = {}
    fan_in = spec.input_dim
    for i, width in enumerate(spec.trunk_dims):
        names = _trunk_names(i)
        weights[names["weight"]] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(width, fan_in))
        if spec.use_batchnorm:
            weights[names["gamma"]] = np.ones(width)
            weights[names["beta"]] = np.zeros(width)
            buffers[names["running_mean"]] = np.zeros(width)
            buffers[names["running_var"]] = np.ones(width)
        else:
            weights[names["bias"]] = np.zeros(width)
        fan_in = width
    for head in HEADS:
        weights[f"{head}.weight"] = rng.normal(0.0, np.sqrt(1.0 / fan_in), size=(HEAD_DIMS[head], fan_in))
        weights[f"{head}.bias"] = np.zeros(HEAD_DIMS[head])
    return ModelParams(spec, weights, buffers)


def forward(params: ModelParams, batch: np.ndarray, mode: str = "train") -> tuple[TaskOutputs, ForwardCache | None]:
    """Run the trunk once and every head on its output.

    Train mode normalises with batch statistics and returns the cache that
    :func:`backward` and :func:`update_running_stats` consume; eval mode uses
    the running statistics and returns no cache.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    spec = params.spec
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ShapeMismatch(f"expected N x {spec.input_dim} batch, got shape {x.shape}")
    n = x.shape[0]
    if n < 1:
        raise BatchTooSmall("empty batch")
    train = mode == "train"
    if train and spec.use_batchnorm and n < 2:
        raise BatchTooSmall("batchnorm in train mode needs at least 2 samples")
    w = params.weights
    layers = []
    h = x
    for i in range(len(spec.trunk_dims)):
        names = _trunk_names(i)
        z = h @ w[names["weight"]].T
        lc = _LayerCache(inputs=h, pre_act=z)
        if spec.use_batchnorm:
            if train:
                mean = z.mean(axis=0)
                var = z.var(axis=0)
                lc.batch_mean, lc.batch_var = mean, var
            else:
                mean = params.buffers[names["running_mean"]]
                var = params.buffers[names["running_var"]]
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (z - mean) * inv_std
            lc.xhat, lc.inv_std = xhat, inv_std
            lc.pre_act = w[names["gamma"]] * xhat + w[names["beta"]]
        else:
            lc.pre_act = z + w[names["bias"]]
        h = np.maximum(lc.pre_act, 0.0)
        layers.append(lc)
    heads = [h @ w[f"{head}.weight"].T + w[f"{head}.bias"] for head in HEADS]
    outputs = TaskOutputs(*heads)
    return outputs, (ForwardCache(layers, h) if train else None)


def backward(params: ModelParams, cache: ForwardCache, head_grads: HeadGrads) -> dict[str, np.ndarray]:
    """Gradients of the loss w.r.t. every trainable parameter."""
    spec = params.spec
    w = params.weights
    if cache is None:
        raise StaleCache("backward needs the cache of a train-mode forward")
    if len(cache.layers) != len(spec.trunk_dims):
        raise StaleCache("cache depth does not match the model")
    h = cache.features
    n = h.shape[0]
    if h.shape[1] != spec.trunk_dims[-1]:
        raise StaleCache("cached trunk width does not match the model")
    grads: dict[str, np.ndarray] = {}
    dh = np.zeros_like(h)
    for head in HEADS:
        g = np.asarray(head_grads[head], dtype=np.float64)
        if g.shape != (n, HEAD_DIMS[head]):
            raise StaleCache(f"{head} gradient has shape {g.shape}, expected {(n, HEAD_DIMS[head])}")
        grads[f"{head}.weight"] = g.T @ h
        grads[f"{head}.bias"] = g.sum(axis=0)
        dh += g @ w[f"{head}.weight"]
    for i in reversed(range(len(spec.trunk_dims))):
        names = _trunk_names(i)
        lc = cache.layers[i]
        if lc.inputs.shape[0] != n:
            raise StaleCache("cached batch size is inconsistent")
        dy = dh * (lc.pre_act > 0)
        if spec.use_batchnorm:
            if lc.xhat is None:
                raise StaleCache("cache lacks batchnorm intermediates")
            grads[names["gamma"]] = (dy * lc.xhat).sum(axis=0)
            grads[names["beta"]] = dy.sum(axis=0)
            dxhat = dy * w[names["gamma"]]
            dz = (lc.inv_std / n) * (
                n * dxhat - dxhat.sum(axis=0) - lc.xhat * (dxhat * lc.xhat).sum(axis=0)
            )
        else:
            dz = dy
            grads[names["bias"]] = dz.sum(axis=0)
        grads[names["weight"]] = dz.T @ lc.inputs
        dh = dz @ w[names["weight"]]
    return {k: grads[k] for k in w}


def update_running_stats(params: ModelParams, cache: ForwardCache, momentum: float = 0.1) -> ModelParams:
    """Fold one train-mode batch into the batchnorm running statistics.

    The running variance uses the unbiased batch variance.
    """
    if not params.spec.use_batchnorm:
        return params
    buffers = dict(params.buffers)
    for i, lc in enumerate(cache.layers):
        names = _trunk_names(i)
        n = lc.inputs.shape[0]
        unbiased = lc.batch_var * n / (n - 1)
        buffers[names["running_mean"]] = (1 - momentum) * buffers[names["running_mean"]] + momentum * lc.batch_mean
        buffers[names["running_var"]] = (1 - momentum) * buffers[names["running_var"]] + momentum * unbiased
    return ModelParams(params.spec, params.weights, buffers)

"""Single-file model checkpoints (numpy ``.npz`` with a JSON metadata entry)."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import ModelSpec, TrainConfig
from .network import ModelParams, init_params
from .optim import AdamState, SgdState

FORMAT = "affectkit-checkpoint"
VERSION = 1


def save_checkpoint(path: str | Path, params: ModelParams, cfg: TrainConfig | None = None,
                    opt_state=None, epoch: int = 0) -> None:
    arrays: dict[str, np.ndarray] = {}
    for k, v in params.weights.items():
        arrays[f"weights/{k}"] = v
    for k, v in params.buffers.items():
        arrays[f"buffers/{k}"] = v
    opt_meta = None
    if isinstance(opt_state, SgdState):
        opt_meta = {"kind": "sgd"}
        for k, v in opt_state.velocity.items():
            arrays[f"opt/velocity/{k}"] = v
    elif isinstance(opt_state, AdamState):
        opt_meta = {"kind": "adam", "t": opt_state.t}
        for k, v in opt_state.m.items():
            arrays[f"opt/m/{k}"] = v
        for k, v in opt_state.v.items():
            arrays[f"opt/v/{k}"] = v
    meta = {
        "format": FORMAT,
        "version": VERSION,
        "spec": params.spec.to_dict(),
        "train_config": cfg.to_dict() if cfg is not None else None,
        "optimizer": opt_meta,
        "epoch": epoch,
    }
    arrays["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path: str | Path) -> dict:
    """Returns ``{"params", "train_config", "opt_state", "epoch"}``."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("format") != FORMAT:
            raise ValueError(f"{path} is not an affectkit checkpoint")
        if meta["version"] > VERSION:
            raise ValueError(f"checkpoint version {meta['version']} is newer than supported {VERSION}")
        groups: dict[str, dict[str, np.ndarray]] = {}
        for key in data.files:
            if key == "__meta__":
                continue
            prefix, _, name = key.rpartition("/")
            groups.setdefault(prefix, {})[name] = data[key]
    spec = ModelSpec.from_dict(meta["spec"])
    params = ModelParams(spec, groups.get("weights", {}), groups.get("buffers", {}))
    # restore the model's canonical key order
    order = list(init_params(spec, 0).weights)
    params.weights = {k: params.weights[k] for k in order if k in params.weights}
    opt = meta["optimizer"]
    opt_state = None
    if opt is not None and opt["kind"] == "sgd":
        opt_state = SgdState(groups.get("opt/velocity", {}))
    elif opt is not None:
        opt_state = AdamState(groups.get("opt/m", {}), groups.get("opt/v", {}), opt["t"])
    cfg = TrainConfig.from_dict(meta["train_config"]) if meta["train_config"] else None
    return {"params": params, "train_config": cfg, "opt_state": opt_state, "epoch": meta["epoch"]}


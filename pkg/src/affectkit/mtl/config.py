from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

HEAD_DIMS = {"expr": 8, "au": 12, "va": 2}
HEADS = ("expr", "au", "va")


@dataclass(frozen=True)
class ModelSpec:
    input_dim: int
    trunk_dims: tuple[int, ...] = (64,)
    use_batchnorm: bool = True
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "trunk_dims", tuple(int(d) for d in self.trunk_dims))
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if not self.trunk_dims or min(self.trunk_dims) < 1:
            raise ValueError("trunk_dims must be a non-empty list of positive sizes")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def head_dims(self) -> dict[str, int]:
        return dict(HEAD_DIMS)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["trunk_dims"] = list(self.trunk_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)


@dataclass(frozen=True)
class Plateau:
    """ReduceLROnPlateau settings."""

    factor: float = 0.1
    patience: int = 2
    min_lr: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.factor < 1.0:
            raise ValueError("plateau factor must lie in (0, 1)")
        if self.patience < 1:
            raise ValueError("plateau patience must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    momentum: float = 0.0
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    batch_size: int = 64
    epochs: int = 10
    seed: int = 42
    scheduler: Optional[Plateau] = None
    loss_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)  # expr, au, va
    au_loss_kind: str = "mse"
    expr_class_weights: Optional[tuple[float, ...]] = None
    au_pos_weights: Optional[tuple[float, ...]] = None
    # derive the weights above from training label frequencies when unset
    balance_expr: bool = False
    balance_au: bool = False
    bn_momentum: float = 0.1

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.momentum < 0:
            raise ValueError("momentum must be >= 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.au_loss_kind not in ("mse", "bce"):
            raise ValueError(f"au_loss_kind must be 'mse' or 'bce', got {self.au_loss_kind!r}")
        lw = tuple(float(w) for w in self.loss_weights)
        if len(lw) != 3 or min(lw) < 0 or max(lw) == 0:
            raise ValueError("loss_weights must be three non-negative values, not all zero")
        object.__setattr__(self, "loss_weights", lw)
        object.__setattr__(self, "adam_betas", tuple(self.adam_betas))
        for name, n in (("expr_class_weights", 8), ("au_pos_weights", 12)):
            w = getattr(self, name)
            if w is not None:
                w = tuple(float(x) for x in w)
                if len(w) != n:
                    raise ValueError(f"{name} needs {n} entries")
                object.__setattr__(self, name, w)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("adam_betas", "loss_weights", "expr_class_weights", "au_pos_weights"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if d.get("scheduler") is not None:
            d["scheduler"] = Plateau(**d["scheduler"])
        for k in ("adam_betas", "loss_weights", "expr_class_weights", "au_pos_weights"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)


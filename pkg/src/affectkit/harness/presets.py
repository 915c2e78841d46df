"""Training recipes for the uni-task and multi-task experiments.

Every preset trains the same three-headed network; a uni-task preset simply
zeroes the loss weights of the other two heads.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from ..annotations import TaskKind
from ..mtl.config import Plateau, TrainConfig


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    tasks: frozenset[TaskKind]
    train: TrainConfig
    trunk_dims: tuple[int, ...] = (64,)
    use_batchnorm: bool = True
    notes: str = field(default="", compare=False)

    def with_train(self, **changes) -> "ExperimentPreset":
        return replace(self, train=replace(self.train, **changes))


PRESETS: dict[str, ExperimentPreset] = {
    "va-uni": ExperimentPreset(
        "va-uni",
        frozenset({TaskKind.VA}),
        TrainConfig(optimizer="adam", learning_rate=1e-3, scheduler=Plateau(), loss_weights=(0.0, 0.0, 1.0)),
        notes="MSE loss, Adam, reduce-on-plateau",
    ),
    "expr-uni": ExperimentPreset(
        "expr-uni",
        frozenset({TaskKind.EXPR}),
        TrainConfig(optimizer="sgd", learning_rate=0.01, momentum=0.9, loss_weights=(1.0, 0.0, 0.0),
                    balance_expr=True),
        notes="class-weighted cross entropy, SGD with momentum",
    ),
    "au-uni": ExperimentPreset(
        "au-uni",
        frozenset({TaskKind.AU}),
        TrainConfig(optimizer="adam", learning_rate=1e-3, scheduler=Plateau(), loss_weights=(0.0, 1.0, 0.0),
                    au_loss_kind="bce", balance_au=True),
        notes="positive-weighted BCE, Adam, reduce-on-plateau",
    ),
    "mtl": ExperimentPreset(
        "mtl",
        frozenset({TaskKind.VA, TaskKind.EXPR, TaskKind.AU}),
        TrainConfig(optimizer="adam", learning_rate=1e-3, loss_weights=(1.0, 1.0, 1.0), au_loss_kind="mse"),
        notes="cross entropy + MSE (AU) + MSE (VA), Adam",
    ),
}


def get_preset(name: str) -> ExperimentPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None

"""Train presets, evaluate them on held-out data, and compare the results."""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .. import metrics
from ..annotations import TaskKind
from ..mtl import (
    HEADS,
    ModelParams,
    ModelSpec,
    PlateauState,
    TrainConfig,
    backward,
    combined_loss,
    forward,
    init_optimizer_state,
    init_params,
    optimizer_step,
    scheduler_step,
    update_running_stats,
)
from ..mtl.checkpoint import save_checkpoint
from .data import TaskDataset
from .presets import ExperimentPreset, get_preset
from .synthetic import SyntheticConfig, generate_synthetic

log = logging.getLogger(__name__)

EPOCH_COLUMNS = (
    "epoch",
    "train_loss_expr", "train_loss_au", "train_loss_va",
    "val_loss_expr", "val_loss_au", "val_loss_va",
    "lr",
)
TASK_ORDER = (TaskKind.VA, TaskKind.EXPR, TaskKind.AU)


class EmptySubset(ValueError):
    pass


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss_expr: float
    train_loss_au: float
    train_loss_va: float
    val_loss_expr: float
    val_loss_au: float
    val_loss_va: float
    lr: float

    def banner(self, total: int) -> str:
        return (
            f"Epoch {self.epoch}/{total}, Train Expression Loss: {self.train_loss_expr:.4f}, "
            f"Train AU Loss: {self.train_loss_au:.4f}, Train VA Loss: {self.train_loss_va:.4f}, "
            f"Val Expression Loss: {self.val_loss_expr:.4f}, Val AU Loss: {self.val_loss_au:.4f}, "
            f"Val VA Loss: {self.val_loss_va:.4f}"
        )


@dataclass
class RunResult:
    preset: str
    reports: dict[TaskKind, metrics.MetricsReport]
    epochs: list[EpochRecord]
    params: ModelParams
    train_config: TrainConfig
    n_train: int
    n_val: int
    wall_time: float = 0.0
    files: dict[str, str] = field(default_factory=dict)

    def report_dict(self) -> dict:
        """Run summary with no timing or absolute paths, so reruns are byte-identical."""
        return {
            "preset": self.preset,
            "tasks": [t.value for t in TASK_ORDER if t in self.reports],
            "n_train": self.n_train,
            "n_val": self.n_val,
            "model": self.params.spec.to_dict(),
            "train_config": self.train_config.to_dict(),
            "final_epoch": asdict(self.epochs[-1]),
            "metrics": {t.value: self.reports[t].to_dict() for t in TASK_ORDER if t in self.reports},
        }


def subset_indices(n: int, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """``round(fraction * n)`` distinct indices, ascending."""
    if not 0.0 < fraction <= 1.0:
        if fraction == 0.0 or n == 0:
            raise EmptySubset(f"subset fraction {fraction} of {n} samples is empty")
        raise ValueError(f"subset fraction must lie in (0, 1], got {fraction}")
    size = int(round(fraction * n))
    if size == 0:
        raise EmptySubset(f"subset fraction {fraction} of {n} samples is empty")
    if size == n:
        return np.arange(n)
    return np.sort(rng.choice(n, size=size, replace=False))


def resolve_weights(cfg: TrainConfig, train: TaskDataset) -> TrainConfig:
    """Fill class and AU weights from training label frequencies when requested."""
    changes = {}
    if cfg.balance_expr and cfg.expr_class_weights is None:
        labels = train.expr[train.masks.expr]
        counts = np.bincount(labels, minlength=len(metrics.EXPR_CLASSES))
        changes["expr_class_weights"] = tuple(float(w) for w in metrics.class_weights(counts, int(counts.sum())))
    if cfg.balance_au and cfg.au_pos_weights is None:
        au = train.au[train.masks.au]
        w = metrics.class_weights(au.sum(axis=0), au.shape[0])
        # rescale to mean 1 so only the relative emphasis on rare AUs changes
        changes["au_pos_weights"] = tuple(float(x) for x in w / w.mean())
    return replace(cfg, **changes) if changes else cfg


def _evaluate_losses(params: ModelParams, data: TaskDataset, cfg: TrainConfig):
    outputs, _ = forward(params, data.features, "eval")
    return outputs, combined_loss(outputs, data.labels, data.masks, cfg)


def predict(params: ModelParams, features: np.ndarray) -> dict[TaskKind, np.ndarray]:
    """Decoded predictions: class ids, binary AUs, and VA clamped to [-1, 1]."""
    outputs, _ = forward(params, features, "eval")
    return {
        TaskKind.EXPR: outputs.expr_logits.argmax(axis=1),
        TaskKind.AU: (outputs.au_logits > 0).astype(np.int64),
        TaskKind.VA: np.clip(outputs.va_pred, -1.0, 1.0),
    }


def evaluate_model(params: ModelParams, data: TaskDataset, tasks) -> dict[TaskKind, metrics.MetricsReport]:
    preds = predict(params, data.features)
    targets = {TaskKind.EXPR: data.expr, TaskKind.AU: data.au, TaskKind.VA: data.va}
    masks = {TaskKind.EXPR: data.masks.expr, TaskKind.AU: data.masks.au, TaskKind.VA: data.masks.va}
    reports = {}
    for task in TASK_ORDER:
        if task in tasks:
            m = masks[task]
            reports[task] = metrics.build_report(task, preds[task][m], targets[task][m])
    return reports


def train_model(spec: ModelSpec, cfg: TrainConfig, train: TaskDataset, val: TaskDataset,
                shuffle_rng: np.random.Generator, verbose: bool = False) -> tuple[ModelParams, list[EpochRecord], object]:
    params = init_params(spec, cfg.seed)
    opt_state = init_optimizer_state(cfg)
    lr = cfg.learning_rate
    plateau = PlateauState(lr, cfg.scheduler) if cfg.scheduler is not None else None
    n = len(train)
    min_batch = 2 if spec.use_batchnorm else 1
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        sums = dict.fromkeys(HEADS, 0.0)
        counts = dict.fromkeys(HEADS, 0)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if idx.size < min_batch:
                continue
            outputs, cache = forward(params, train.features[idx], "train")
            loss = combined_loss(outputs, train.labels.take(idx), train.masks.take(idx), cfg)
            grads = backward(params, cache, loss.grads)
            new_weights, opt_state = optimizer_step(params.weights, grads, cfg, opt_state, lr)
            params = update_running_stats(params.replace_weights(new_weights), cache, cfg.bn_momentum)
            for head in HEADS:
                sums[head] += loss.parts[head] * loss.counts[head]
                counts[head] += loss.counts[head]
        _, val_loss = _evaluate_losses(params, val, cfg)
        record = EpochRecord(
            epoch,
            *(sums[h] / counts[h] if counts[h] else 0.0 for h in HEADS),
            *(val_loss.parts[h] for h in HEADS),
            lr,
        )
        history.append(record)
        if verbose:
            log.info(record.banner(cfg.epochs))
        if plateau is not None:
            plateau, lr = scheduler_step(plateau, val_loss.total)
    return params, history, opt_state


def write_epochs_csv(path: str | Path, epochs: list[EpochRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EPOCH_COLUMNS)
        for e in epochs:
            w.writerow([e.epoch] + [repr(float(getattr(e, c))) for c in EPOCH_COLUMNS[1:]])


def read_epochs_csv(path: str | Path) -> list[EpochRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [EpochRecord(int(r["epoch"]), *(float(r[c]) for c in EPOCH_COLUMNS[1:])) for r in rows]


def run_preset(
    preset: ExperimentPreset | str,
    train: TaskDataset,
    val: TaskDataset,
    subset_fraction: float = 1.0,
    out_dir: str | Path | None = None,
    figures: bool = True,
    verbose: bool = False,
) -> RunResult:
    """Subsample, train, evaluate each epoch, and score the final model.

    With ``out_dir`` the run writes ``<out_dir>/<preset>/`` containing
    ``epochs.csv``, ``report.json``, ``model.ckpt`` and, with ``figures``,
    ``curves.png``.
    """
    if isinstance(preset, str):
        preset = get_preset(preset)
    t0 = time.perf_counter()
    cfg = preset.train
    subset_ss, shuffle_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    subset_rng = np.random.default_rng(subset_ss)
    train = train.take(subset_indices(len(train), subset_fraction, subset_rng))
    val = val.take(subset_indices(len(val), subset_fraction, subset_rng))
    cfg = resolve_weights(cfg, train)
    spec = ModelSpec(train.features.shape[1], preset.trunk_dims, preset.use_batchnorm)
    params, history, opt_state = train_model(spec, cfg, train, val, np.random.default_rng(shuffle_ss), verbose)
    reports = evaluate_model(params, val, preset.tasks)
    result = RunResult(preset.name, reports, history, params, cfg, len(train), len(val))
    result.wall_time = time.perf_counter() - t0
    if out_dir is not None:
        run_dir = Path(out_dir) / preset.name
        run_dir.mkdir(parents=True, exist_ok=True)
        write_epochs_csv(run_dir / "epochs.csv", history)
        (run_dir / "report.json").write_text(json.dumps(result.report_dict(), indent=2) + "\n")
        save_checkpoint(run_dir / "model.ckpt", params, cfg, opt_state, epoch=cfg.epochs)
        result.files = {
            "epochs": str(run_dir / "epochs.csv"),
            "report": str(run_dir / "report.json"),
            "checkpoint": str(run_dir / "model.ckpt"),
        }
        if figures:
            from ..plotting import plot_epoch_curves

            plot_epoch_curves(history, run_dir / "curves.png", title=preset.name)
            result.files["curves"] = str(run_dir / "curves.png")
    return result


# ---------------------------------------------------------------------------
# comparison


@dataclass
class ComparisonReport:
    presets: list[str]
    scores: dict[str, dict[str, float | None]]  # preset -> task -> challenge score
    best: dict[str, str | None]  # task -> preset with the highest score
    deltas: dict[str, dict[str, float | None]]  # preset -> task -> score minus reference
    references: dict[str, str | None]  # task -> first preset that scored it
    reports: dict[str, dict[str, dict]]
    wall_time: dict[str, float] = field(default_factory=dict)
    curves: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_text(self) -> str:
        cols = [t.value for t in TASK_ORDER]
        labels = {"va": "P_VA (mean CCC)", "expr": "P_EXPR (macro F1)", "au": "P_AU (macro F1)"}
        width = max(len(p) for p in self.presets + ["preset"])
        head = f"{'preset':<{width}}" + "".join(f"  {labels[c]:>18}" for c in cols)
        if self.wall_time:
            head += f"  {'time (s)':>9}"
        lines = [head, "-" * len(head)]
        for p in self.presets:
            row = f"{p:<{width}}"
            for c in cols:
                s = self.scores[p][c]
                cell = "-" if s is None else f"{s:.4f}" + ("*" if self.best[c] == p else " ")
                row += f"  {cell:>18}"
            if self.wall_time:
                row += f"  {self.wall_time.get(p, 0.0):>9.2f}"
            lines.append(row)
        refs = ", ".join(f"{c} vs {self.references[c] or 'n/a'}" for c in cols)
        lines += ["", f"delta ({refs}):"]
        for p in self.presets:
            cells = []
            for c in cols:
                d = self.deltas[p][c]
                cells.append(f"{c} {'n/a' if d is None else f'{d:+.4f}'}")
            lines.append(f"  {p}: " + ", ".join(cells))
        lines += ["", "* best score per task"]
        return "\n".join(lines) + "\n"


def compare(results: list[RunResult]) -> ComparisonReport:
    """Side-by-side challenge scores of at least two runs.

    Each task's delta is taken against the first run that scored the task, so
    ``compare([va-uni, expr-uni, au-uni, mtl])`` reports mtl against each
    uni-task run.  Runs only need ``preset`` and ``reports`` attributes.
    """
    if len(results) < 2:
        raise ValueError("compare needs at least two runs")
    names = [r.preset for r in results]
    if len(set(names)) != len(names):
        raise ValueError("preset names in a comparison must be unique")
    scores = {
        r.preset: {t.value: (r.reports[t].challenge_score if t in r.reports else None) for t in TASK_ORDER}
        for r in results
    }
    best: dict[str, str | None] = {}
    references: dict[str, str | None] = {}
    for t in TASK_ORDER:
        scored = [(scores[n][t.value], n) for n in names if scores[n][t.value] is not None]
        # ties go to the earliest run
        best[t.value] = max(scored, key=lambda sn: sn[0])[1] if scored else None
        references[t.value] = scored[0][1] if scored else None
    deltas = {
        n: {
            t: (None if s is None or references[t] is None else s - scores[references[t]][t])
            for t, s in scores[n].items()
        }
        for n in names
    }
    return ComparisonReport(
        presets=names,
        scores=scores,
        best=best,
        deltas=deltas,
        references=references,
        reports={r.preset: {t.value: r.reports[t].to_dict() for t in TASK_ORDER if t in r.reports}
                 for r in results},
        wall_time={r.preset: getattr(r, "wall_time", 0.0) for r in results},
        curves={r.preset: getattr(r, "files", {}).get("epochs", "") for r in results},
    )


def _run_job(args):
    name, syn_cfg, subset, out_dir, figures, overrides = args
    train, val = generate_synthetic(syn_cfg)
    preset = get_preset(name)
    if overrides:
        preset = preset.with_train(**overrides)
    return run_preset(preset, train, val, subset, out_dir, figures)


def run_comparison(
    preset_names: list[str],
    syn_cfg: SyntheticConfig,
    out_dir: str | Path,
    subset_fraction: float = 1.0,
    figures: bool = True,
    jobs: int = 1,
    train_overrides: dict | None = None,
) -> ComparisonReport:
    """Run each preset as an isolated job on the same synthetic data and compare.

    Writes ``<out_dir>/<preset>/...`` per run and ``<out_dir>/comparison.{json,txt}``.
    """
    for name in preset_names:
        get_preset(name)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    job_args = [(n, syn_cfg, subset_fraction, out_dir, figures, train_overrides) for n in preset_names]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_job, job_args))
    else:
        results = [_run_job(a) for a in job_args]
    report = compare(results)
    report.curves = {r.preset: str(Path(r.preset) / "epochs.csv") for r in results}
    (out_dir / "comparison.json").write_text(report.to_json())
    (out_dir / "comparison.txt").write_text(report.to_text())
    if figures:
        from ..plotting import plot_comparison

        plot_comparison(report, out_dir / "comparison.png")
    return report

"""Challenge metrics: mean CCC for valence/arousal, macro F1 for expressions and AUs."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .annotations import (
    AU_NAMES,
    EXPR_CLASSES,
    AuLabel,
    ExprLabel,
    Manifest,
    MultiLabel,
    TaskKind,
    VaLabel,
)

N_EXPR = len(EXPR_CLASSES)
N_AU = len(AU_NAMES)


class MetricsError(ValueError):
    pass


class LengthMismatch(MetricsError):
    pass


class TooFewSamples(MetricsError):
    pass


class ClassOutOfRange(MetricsError):
    pass


class WrongArity(MetricsError):
    pass


class ShapeMismatch(MetricsError):
    pass


class MissingPrediction(MetricsError):
    def __init__(self, video_id: str, frame: int):
        self.video_id = video_id
        self.frame = frame
        super().__init__(f"no prediction for video {video_id} frame {frame}")


class MalformedPredictionRow(MetricsError):
    def __init__(self, detail: str, line_no: int | None = None):
        self.line_no = line_no
        prefix = f"line {line_no}: " if line_no is not None else ""
        super().__init__(f"{prefix}malformed prediction row: {detail}")


def _pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise LengthMismatch(f"lengths differ: {x.size} vs {y.size}")
    if x.size < 2:
        raise TooFewSamples(f"need at least 2 samples, got {x.size}")
    return x, y


def pearson(x, y) -> float:
    """Product-moment correlation; 0 when either input is constant."""
    x, y = _pair(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = np.dot(dx, dx)
    syy = np.dot(dy, dy)
    # sqrt each factor separately so tiny variances do not underflow
    denom = np.sqrt(sxx) * np.sqrt(syy)
    if denom == 0.0:
        return 0.0
    r = np.dot(dx, dy) / denom
    return float(np.clip(r, -1.0, 1.0))


def ccc(pred, target) -> float:
    """Lin's concordance correlation coefficient with population moments.

    Two identical constant sequences score 1; any other zero denominator
    scores 0.
    """
    x, y = _pair(pred, target)
    mx, my = x.mean(), y.mean()
    dx = x - mx
    dy = y - my
    n = x.size
    vx = np.dot(dx, dx) / n
    vy = np.dot(dy, dy) / n
    cov = np.dot(dx, dy) / n
    denom = vx + vy + (mx - my) ** 2
    if denom == 0.0:
        return 1.0 if np.array_equal(x, y) else 0.0
    return float(np.clip(2.0 * cov / denom, -1.0, 1.0))


def score_va(ccc_v: float, ccc_a: float) -> float:
    return (ccc_v + ccc_a) / 2.0


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows = true class, columns = predicted class

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def _classes(values, k: int, what: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        as_int = arr.astype(np.int64)
        if not np.array_equal(as_int, arr):
            raise ClassOutOfRange(f"{what} contains non-integer class ids")
        arr = as_int
    arr = arr.astype(np.int64).ravel()
    if arr.size and (arr.min() < 0 or arr.max() >= k):
        raise ClassOutOfRange(f"{what} contains class ids outside 0..{k - 1}")
    return arr


def confusion(pred, target, k: int) -> ConfusionMatrix:
    p = _classes(pred, k, "pred")
    t = _classes(target, k, "target")
    if p.shape != t.shape:
        raise LengthMismatch(f"lengths differ: {p.size} vs {t.size}")
    counts = np.bincount(t * k + p, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(counts.astype(np.int64))


def _f1(tp, fp, fn) -> np.ndarray:
    tp = np.asarray(tp, dtype=np.float64)
    fp = np.asarray(fp, dtype=np.float64)
    fn = np.asarray(fn, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        recall = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
        pr = precision + recall
        return np.where(pr > 0, 2 * precision * recall / pr, 0.0)


def per_class_f1(cm: ConfusionMatrix) -> np.ndarray:
    counts = cm.counts
    tp = np.diag(counts)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    return _f1(tp, fp, fn)


def _mean_of(values, n: int, what: str) -> float:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size != n:
        raise WrongArity(f"{what} needs exactly {n} values, got {arr.size}")
    return float(arr.mean())


def score_expr(per_class: Sequence[float]) -> float:
    return _mean_of(per_class, N_EXPR, "expression score")


def multilabel_f1(pred, target) -> np.ndarray:
    p = np.asarray(pred)
    t = np.asarray(target)
    if p.shape != t.shape or p.ndim != 2:
        raise ShapeMismatch(f"shapes differ or are not 2-D: {p.shape} vs {t.shape}")
    for name, arr in (("pred", p), ("target", t)):
        if not np.isin(arr, (0, 1)).all():
            raise ClassOutOfRange(f"{name} entries must be 0 or 1")
    p = p.astype(bool)
    t = t.astype(bool)
    tp = (p & t).sum(axis=0)
    fp = (p & ~t).sum(axis=0)
    fn = (~p & t).sum(axis=0)
    return _f1(tp, fp, fn)


def score_au(per_au: Sequence[float]) -> float:
    return _mean_of(per_au, N_AU, "AU score")


def class_weights(counts, total: int) -> np.ndarray:
    """Inverse-frequency weights ``total / (K * max(count, 1))``.

    Balanced counts give unit weights.
    """
    counts = np.asarray(counts, dtype=np.float64)
    return total / (counts.size * np.maximum(counts, 1.0))


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class MetricsReport:
    task: TaskKind
    challenge_score: float
    n_scored: int
    per_class_f1: tuple[float, ...] | None = None
    macro_f1: float | None = None
    ccc_valence: float | None = None
    ccc_arousal: float | None = None

    @property
    def class_names(self) -> tuple[str, ...] | None:
        if self.task is TaskKind.EXPR:
            return EXPR_CLASSES
        if self.task is TaskKind.AU:
            return AU_NAMES
        return None

    def to_dict(self) -> dict:
        names = self.class_names
        return {
            "task": self.task.value,
            "n_scored": self.n_scored,
            "challenge_score": self.challenge_score,
            "macro_f1": self.macro_f1,
            "class_names": list(names) if names else None,
            "per_class_f1": list(self.per_class_f1) if self.per_class_f1 is not None else None,
            "ccc_valence": self.ccc_valence,
            "ccc_arousal": self.ccc_arousal,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        per_class = d.get("per_class_f1")
        return cls(
            task=TaskKind.parse(d["task"]),
            challenge_score=d["challenge_score"],
            n_scored=d["n_scored"],
            per_class_f1=tuple(per_class) if per_class is not None else None,
            macro_f1=d.get("macro_f1"),
            ccc_valence=d.get("ccc_valence"),
            ccc_arousal=d.get("ccc_arousal"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_text(self) -> str:
        if self.task is TaskKind.VA:
            return (
                f"Validation CCC Valence: {self.ccc_valence:.4f}, "
                f"Validation CCC Arousal: {self.ccc_arousal:.4f}\n"
                f"Average Validation CCC: {self.challenge_score:.4f}\n"
            )
        title = "Emotion" if self.task is TaskKind.EXPR else "Action Unit"
        width = max(len(title), *(len(n) for n in self.class_names), len("Average"))
        rule = "-" * (width + 11)
        rows = [f"{n:<{width}} | {f:.4f}" for n, f in zip(self.class_names, self.per_class_f1)]
        avg = f"{'Average':<{width}} | {self.challenge_score:.4f}"
        head = [rule, f"{title:<{width}} | F1 Score", rule]
        if self.task is TaskKind.AU:
            # the AU table lists the average first
            body = [avg] + rows
        else:
            body = rows + [rule, avg]
        return "\n".join(head + body + [rule]) + "\n"


def report_va(pred, target) -> MetricsReport:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.ndim != 2 or pred.shape[1] != 2:
        raise ShapeMismatch(f"VA arrays must both be N x 2, got {pred.shape} and {target.shape}")
    cv = ccc(pred[:, 0], target[:, 0])
    ca = ccc(pred[:, 1], target[:, 1])
    return MetricsReport(TaskKind.VA, score_va(cv, ca), len(pred), ccc_valence=cv, ccc_arousal=ca)


def report_expr(pred, target) -> MetricsReport:
    f1 = per_class_f1(confusion(pred, target, N_EXPR))
    score = score_expr(f1)
    return MetricsReport(TaskKind.EXPR, score, int(np.asarray(target).size),
                         per_class_f1=tuple(float(v) for v in f1), macro_f1=score)


def report_au(pred, target) -> MetricsReport:
    f1 = multilabel_f1(pred, target)
    if f1.size != N_AU:
        raise ShapeMismatch(f"AU arrays need {N_AU} columns, got {f1.size}")
    score = score_au(f1)
    return MetricsReport(TaskKind.AU, score, int(np.asarray(target).shape[0]),
                         per_class_f1=tuple(float(v) for v in f1), macro_f1=score)


def build_report(task, pred, target) -> MetricsReport:
    task = TaskKind.parse(task)
    return {TaskKind.VA: report_va, TaskKind.EXPR: report_expr, TaskKind.AU: report_au}[task](pred, target)


# ---------------------------------------------------------------------------
# prediction files

PAYLOAD_WIDTH = {TaskKind.VA: 2, TaskKind.EXPR: 1, TaskKind.AU: N_AU}


def prediction_header(task) -> list[str]:
    task = TaskKind.parse(task)
    if task is TaskKind.VA:
        payload = ["valence", "arousal"]
    elif task is TaskKind.EXPR:
        payload = ["class_id"]
    else:
        payload = list(AU_NAMES)
    return ["video_id", "frame"] + payload


def _parse_payload(task: TaskKind, fields: list[str], line_no: int):
    try:
        if task is TaskKind.VA:
            values = tuple(float(f) for f in fields)
            if not all(np.isfinite(values)):
                raise ValueError("non-finite value")
            return values
        if task is TaskKind.EXPR:
            class_id = int(fields[0])
            if not 0 <= class_id < N_EXPR:
                raise ValueError(f"class id {class_id} outside 0..{N_EXPR - 1}")
            return class_id
        acts = tuple(int(f) for f in fields)
        if any(a not in (0, 1) for a in acts):
            raise ValueError("AU predictions must be 0 or 1")
        return acts
    except ValueError as exc:
        raise MalformedPredictionRow(str(exc), line_no) from None


def read_predictions(text: str, task) -> dict[tuple[str, int], object]:
    task = TaskKind.parse(task)
    rows = list(csv.reader(io.StringIO(text.lstrip("﻿"))))
    while rows and not any(f.strip() for f in rows[-1]):
        rows.pop()
    if not rows:
        raise MalformedPredictionRow("empty file, header required", 1)
    header = [f.strip() for f in rows[0]]
    width = 2 + PAYLOAD_WIDTH[task]
    if len(header) > 1 and header[1].lstrip("+-").isdigit():
        raise MalformedPredictionRow("header line required", 1)
    if len(header) != width:
        raise MalformedPredictionRow(f"header has {len(header)} columns, expected {width}", 1)
    preds: dict[tuple[str, int], object] = {}
    for line_no, row in enumerate(rows[1:], start=2):
        fields = [f.strip() for f in row]
        if len(fields) != width:
            raise MalformedPredictionRow(f"expected {width} fields, got {len(fields)}", line_no)
        try:
            frame = int(fields[1])
        except ValueError:
            raise MalformedPredictionRow(f"frame {fields[1]!r} is not an integer", line_no) from None
        key = (fields[0], frame)
        if key in preds:
            raise MalformedPredictionRow(f"duplicate prediction for {key[0]} frame {frame}", line_no)
        preds[key] = _parse_payload(task, fields[2:], line_no)
    return preds


def write_predictions(fh, task, keys, values) -> None:
    task = TaskKind.parse(task)
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(prediction_header(task))
    for (video, frame), value in zip(keys, values):
        if task is TaskKind.VA:
            payload = [repr(float(v)) for v in value]
        elif task is TaskKind.EXPR:
            payload = [int(value)]
        else:
            payload = [int(v) for v in value]
        writer.writerow([video, frame] + payload)


def _gt_value(label, task: TaskKind):
    if isinstance(label, MultiLabel):
        label = {TaskKind.VA: label.va, TaskKind.EXPR: label.expr, TaskKind.AU: label.au}[task]
    if isinstance(label, VaLabel):
        return (label.valence, label.arousal)
    if isinstance(label, ExprLabel):
        return label.class_id
    if isinstance(label, AuLabel):
        return label.activations
    raise TypeError(f"unsupported label {label!r}")


def evaluate_predictions(pred_file: str | Path, gt: Manifest, task) -> MetricsReport:
    """Score a prediction CSV against the valid frames of a ground-truth manifest."""
    task = TaskKind.parse(task)
    if task not in gt.tasks:
        raise ValueError(f"manifest has no {task.value} labels")
    preds = read_predictions(Path(pred_file).read_text(encoding="utf-8"), task)
    p, t = [], []
    for rec in gt.records:
        if not rec.valid:
            continue
        if rec.key not in preds:
            raise MissingPrediction(*rec.key)
        p.append(preds[rec.key])
        t.append(_gt_value(rec.label, task))
    return build_report(task, np.asarray(p), np.asarray(t))

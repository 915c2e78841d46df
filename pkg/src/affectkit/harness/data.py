"""In-memory task datasets: feature vectors plus the three label families."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..annotations import AU_NAMES, Manifest, MultiLabel, TaskKind
from ..mtl.losses import BatchLabels, BatchMasks


@dataclass
class TaskDataset:
    """Feature vectors with all three label families and per-task availability."""

    features: np.ndarray  # N x D
    va: np.ndarray  # N x 2
    expr: np.ndarray  # N
    au: np.ndarray  # N x 12
    masks: BatchMasks

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def labels(self) -> BatchLabels:
        return BatchLabels(self.expr, self.au, self.va)

    def take(self, idx) -> "TaskDataset":
        return TaskDataset(self.features[idx], self.va[idx], self.expr[idx], self.au[idx], self.masks.take(idx))

    def to_csv(self, path: str | Path) -> None:
        d = self.features.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample_id"] + [f"f_{j}" for j in range(d)] + ["valence", "arousal", "expr"]
                       + [f"au_{k + 1}" for k in range(len(AU_NAMES))])
            for i in range(len(self)):
                w.writerow([i] + [repr(float(v)) for v in self.features[i]]
                           + [repr(float(self.va[i, 0])), repr(float(self.va[i, 1])), int(self.expr[i])]
                           + [int(a) for a in self.au[i]])


def dataset_from_manifest(manifest: Manifest, features: np.ndarray) -> TaskDataset:
    """Pair manifest records (in manifest order) with precomputed feature rows.

    Only valid records are used; a task's mask is set where that task's label
    is present.  Features must have one row per valid record.
    """
    records = [r for r in manifest.records if r.valid]
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != len(records):
        raise ValueError(f"need {len(records)} feature rows, got shape {features.shape}")
    n = len(records)
    va = np.zeros((n, 2))
    expr = np.zeros(n, dtype=np.int64)
    au = np.zeros((n, len(AU_NAMES)), dtype=np.int64)
    masks = BatchMasks(*(np.zeros(n, dtype=bool) for _ in range(3)))
    for i, rec in enumerate(records):
        label = rec.label
        parts = {TaskKind.VA: label.va, TaskKind.EXPR: label.expr, TaskKind.AU: label.au} \
            if isinstance(label, MultiLabel) else {manifest.task: label}
        if TaskKind.VA in parts:
            va[i] = (parts[TaskKind.VA].valence, parts[TaskKind.VA].arousal)
            masks.va[i] = True
        if TaskKind.EXPR in parts:
            expr[i] = parts[TaskKind.EXPR].class_id
            masks.expr[i] = True
        if TaskKind.AU in parts:
            au[i] = parts[TaskKind.AU].activations
            masks.au[i] = True
    return TaskDataset(features, va, expr, au, masks)

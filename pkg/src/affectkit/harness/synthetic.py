"""Synthetic multi-task data with labels driven by a shared valence/arousal latent.

Per sample, ``(v, a)`` is uniform on the unit disc and the other labels are
functions of it:

* expression -- Neutral inside ``neutral_radius``; otherwise the basic
  emotion of the 60 degree angular sector (counter-clockwise from +valence,
  see ``SECTOR_CLASSES``), swapped for Other with probability ``other_prob``.
* AU k -- active iff ``AU_DIRECTIONS[k] . (v, a) + AU_OFFSET > 0``.
* features -- ``A @ [v, a, au_1..au_12]`` plus Gaussian noise, with ``A`` a
  seeded ``feature_dim x 14`` matrix.

``label_noise`` then flips each AU bit and resamples each expression class
with that probability.  Features are computed from the clean labels.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..annotations import AU_NAMES, EXPR_CLASSES
from ..mtl.losses import BatchMasks
from .data import TaskDataset

LATENT_DIM = 2 + len(AU_NAMES)

# class ids of sectors [0, 60), [60, 120), ... degrees
SECTOR_CLASSES = (
    EXPR_CLASSES.index("Happiness"),
    EXPR_CLASSES.index("Surprise"),
    EXPR_CLASSES.index("Fear"),
    EXPR_CLASSES.index("Anger"),
    EXPR_CLASSES.index("Disgust"),
    EXPR_CLASSES.index("Sadness"),
)
NEUTRAL = EXPR_CLASSES.index("Neutral")
OTHER = EXPR_CLASSES.index("Other")

# one unit direction every 30 degrees; fixed, not seeded
AU_ANGLES_DEG = np.arange(12) * 30.0
AU_DIRECTIONS = np.stack([np.cos(np.radians(AU_ANGLES_DEG)), np.sin(np.radians(AU_ANGLES_DEG))], axis=1)
AU_OFFSET = -0.1


@dataclass(frozen=True)
class SyntheticConfig:
    n_train: int = 2000
    n_val: int = 500
    feature_dim: int = 32
    label_noise: float = 0.0
    feature_noise_std: float = 0.05
    neutral_radius: float = 0.25
    other_prob: float = 0.0
    seed: int = 42

    def __post_init__(self):
        if self.n_train < 1 or self.n_val < 1:
            raise ValueError("n_train and n_val must be >= 1")
        if self.feature_dim < LATENT_DIM:
            raise ValueError(f"feature_dim must be >= {LATENT_DIM}")
        if not 0.0 <= self.label_noise <= 1.0 or not 0.0 <= self.other_prob <= 1.0:
            raise ValueError("label_noise and other_prob must lie in [0, 1]")
        if self.feature_noise_std < 0:
            raise ValueError("feature_noise_std must be >= 0")
        if not 0.0 < self.neutral_radius < 1.0:
            raise ValueError("neutral_radius must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "SyntheticConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def expression_from_va(v: np.ndarray, a: np.ndarray, neutral_radius: float) -> np.ndarray:
    """Clean expression class from position on the disc.

    Angles exactly on a sector boundary go to the lower-index sector.
    """
    theta = np.mod(np.arctan2(a, v), 2 * np.pi)
    width = np.pi / 3
    sector = np.ceil(theta / width).astype(np.int64) - 1
    sector = np.clip(sector, 0, 5)
    classes = np.asarray(SECTOR_CLASSES)[sector]
    radius = np.hypot(v, a)
    return np.where(radius < neutral_radius, NEUTRAL, classes)


def au_from_va(va: np.ndarray) -> np.ndarray:
    return (va @ AU_DIRECTIONS.T + AU_OFFSET > 0).astype(np.int64)


def _draw(rng: np.random.Generator, n: int, cfg: SyntheticConfig, mixing: np.ndarray) -> TaskDataset:
    r = np.sqrt(rng.uniform(0.0, 1.0, n))
    theta = rng.uniform(0.0, 2 * np.pi, n)
    va = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    expr = expression_from_va(va[:, 0], va[:, 1], cfg.neutral_radius)
    expr = np.where(rng.uniform(size=n) < cfg.other_prob, OTHER, expr)
    au = au_from_va(va)
    latent = np.concatenate([va, au.astype(np.float64)], axis=1)
    features = latent @ mixing.T + rng.normal(0.0, 1.0, (n, cfg.feature_dim)) * cfg.feature_noise_std
    flip = rng.uniform(size=au.shape) < cfg.label_noise
    au = np.where(flip, 1 - au, au)
    resample = rng.uniform(size=n) < cfg.label_noise
    expr = np.where(resample, rng.integers(0, len(EXPR_CLASSES), n), expr)
    return TaskDataset(features, va, expr.astype(np.int64), au, BatchMasks.full(n))


def generate_synthetic(cfg: SyntheticConfig) -> tuple[TaskDataset, TaskDataset]:
    rng = np.random.default_rng(cfg.seed)
    mixing = rng.normal(0.0, 1.0 / np.sqrt(LATENT_DIM), (cfg.feature_dim, LATENT_DIM))
    train = _draw(rng, cfg.n_train, cfg, mixing)
    val = _draw(rng, cfg.n_val, cfg, mixing)
    return train, val

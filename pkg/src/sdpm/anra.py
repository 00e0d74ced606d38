"""Adaptive noise reduction and augmentation (ANRA) for training data.

Stages, in pipeline order: exact-duplicate removal, IQR outlier clipping,
z-score normalization, and SMOTE-style minority oversampling. Only training
data goes through the whole pipeline; test data reuses the fitted
:class:`NormStats` via :func:`apply_normalize`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .errors import DatasetError

__all__ = [
    "AnraConfig",
    "NormStats",
    "PreprocessedDataset",
    "deduplicate",
    "clip_outliers",
    "apply_clip",
    "fit_normalize",
    "apply_normalize",
    "augment_minority",
    "anra_pipeline",
    "clean_and_normalize",
]


@dataclass(frozen=True)
class AnraConfig:
    dedup: bool = True
    iqr_multiplier: float = 3.0
    knn_k: int = 5
    target_ratio: float = 1.0
    jitter_sigma: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not self.iqr_multiplier > 0:
            raise ValueError(f"iqr_multiplier must be > 0, got {self.iqr_multiplier}")
        if self.knn_k < 1:
            raise ValueError(f"knn_k must be >= 1, got {self.knn_k}")
        if not 0 < self.target_ratio <= 1:
            raise ValueError(f"target_ratio must be in (0, 1], got {self.target_ratio}")
        if not self.jitter_sigma >= 0:
            raise ValueError(f"jitter_sigma must be >= 0, got {self.jitter_sigma}")


@dataclass(frozen=True, eq=False)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    @property
    def constant(self) -> np.ndarray:
        return self.std == 0

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != len(self.mean):
            raise DatasetError(f"expected {len(self.mean)} features, got {X.shape[-1]}")
        safe = np.where(self.constant, 1.0, self.std)
        return np.where(self.constant, 0.0, (X - self.mean) / safe)

    def inverse(self, Z):
        return np.asarray(Z) * self.std + self.mean


@dataclass(frozen=True, eq=False)
class PreprocessedDataset:
    data: Dataset
    norm: NormStats
    clip_bounds: np.ndarray = None
    provenance: dict = field(default_factory=dict)


def deduplicate(dataset: Dataset):
    """Drop exact repeats of (features, label), keeping first occurrences."""
    seen = set()
    keep = []
    for i, (row, lab) in enumerate(zip(dataset.X, dataset.y)):
        key = (tuple(row.tolist()), int(lab))
        if key not in seen:
            seen.add(key)
            keep.append(i)
    dropped = dataset.n - len(keep)
    if dropped == 0:
        return dataset, 0
    return dataset.subset(keep), dropped


def clip_outliers(dataset: Dataset, iqr_multiplier: float = 3.0):
    """Clamp each feature into [Q1 - m*IQR, Q3 + m*IQR].

    Quartiles use linear interpolation between order statistics. Returns the
    clipped dataset, a ``(d, 2)`` bounds array and the number of rows that had
    at least one value moved.
    """
    q1, q3 = np.percentile(dataset.X, [25, 75], axis=0, method="linear")
    iqr = q3 - q1
    bounds = np.column_stack([q1 - iqr_multiplier * iqr, q3 + iqr_multiplier * iqr])
    clipped, count = apply_clip(dataset, bounds)
    return clipped, bounds, count


def apply_clip(dataset: Dataset, bounds):
    X = np.clip(dataset.X, bounds[:, 0], bounds[:, 1])
    changed = np.any(X != dataset.X, axis=1)
    count = int(changed.sum())
    if count == 0:
        return dataset, 0
    return dataset.replace(X=X), count


def fit_normalize(train: Dataset) -> NormStats:
    mean = train.X.mean(axis=0)
    std = train.X.std(axis=0)
    # float noise on a constant column must not count as spread
    std = np.where(np.all(train.X == train.X[0], axis=0), 0.0, std)
    return NormStats(mean, std)


def apply_normalize(dataset: Dataset, norm: NormStats) -> Dataset:
    if dataset.schema.arity != len(norm.mean):
        raise DatasetError(f"dataset has {dataset.schema.arity} features, stats cover {len(norm.mean)}")
    return dataset.replace(X=norm.transform(dataset.X))


def _needed(minority, majority, ratio):
    # small epsilon keeps 0.3 * 90 from rounding up to 28
    return max(0, math.ceil(ratio * majority - 1e-9) - minority)


def _minority_neighbors(M, k):
    d2 = np.sum((M[:, None, :] - M[None, :, :]) ** 2, axis=-1)
    np.fill_diagonal(d2, np.inf)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def augment_minority(dataset: Dataset, config: AnraConfig):
    """Oversample the minority class until it reaches ``target_ratio`` of the majority.

    Each synthetic row interpolates between a random real minority row and one
    of its ``k`` nearest real minority neighbours. A lone minority row is
    copied with Gaussian jitter instead.
    """
    counts = dataset.class_counts()
    if counts[0] == 0 or counts[1] == 0:
        raise DatasetError("augmentation needs both classes present")
    minority = 0 if counts[0] < counts[1] else 1
    n_min, n_maj = counts[minority], counts[1 - minority]
    need = _needed(n_min, n_maj, config.target_ratio)
    if counts[0] == counts[1] or need == 0:
        return dataset, 0

    rng = np.random.default_rng(config.seed)
    real_min = np.flatnonzero((dataset.y == minority) & ~dataset.synthetic)
    if len(real_min) == 0:
        real_min = np.flatnonzero(dataset.y == minority)
    M = dataset.X[real_min]
    d = M.shape[1]
    if len(M) == 1:
        new = M[0] + config.jitter_sigma * rng.standard_normal((need, d))
    else:
        k = min(config.knn_k, len(M) - 1)
        nbrs = _minority_neighbors(M, k)
        base = rng.integers(len(M), size=need)
        pick = rng.integers(k, size=need)
        u = rng.random(need)
        other = nbrs[base, pick]
        new = M[base] + u[:, None] * (M[other] - M[base])
    out = dataset.replace(
        X=np.vstack([dataset.X, new]),
        y=np.concatenate([dataset.y, np.full(need, minority)]),
        synthetic=np.concatenate([dataset.synthetic, np.ones(need, bool)]),
        index=np.concatenate([dataset.index, np.full(need, -1)]),
    )
    return out, need


def clean_and_normalize(dataset: Dataset, config: AnraConfig) -> PreprocessedDataset:
    """The cleaning half of ANRA: dedup, clip, normalize. No augmentation."""
    dropped = 0
    if config.dedup:
        dataset, dropped = deduplicate(dataset)
    dataset, bounds, clipped = clip_outliers(dataset, config.iqr_multiplier)
    norm = fit_normalize(dataset)
    data = apply_normalize(dataset, norm)
    prov = {"rows_dropped_dup": dropped, "rows_clipped": clipped, "synthetic_added": 0}
    return PreprocessedDataset(data, norm, bounds, prov)


def anra_pipeline(dataset: Dataset, config: AnraConfig = AnraConfig()) -> PreprocessedDataset:
    pre = clean_and_normalize(dataset, config)
    data, added = augment_minority(pre.data, config)
    prov = dict(pre.provenance, synthetic_added=added)
    return PreprocessedDataset(data, pre.norm, pre.clip_bounds, prov)

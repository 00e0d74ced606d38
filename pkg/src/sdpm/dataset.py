"""Code-metric datasets: CSV loading, summaries and stratified TP splits.

A :class:`Dataset` keeps its records column-wise in read-only numpy arrays
(``X`` features, ``y`` labels, ``synthetic`` origin flags, ``index`` original
row ids) so the preprocessing and model code can work on whole matrices.
:attr:`Dataset.records` gives the row view when one is wanted.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetError

__all__ = [
    "FeatureSchema",
    "MetricRecord",
    "Dataset",
    "SplitPair",
    "DEFAULT_SCHEMA",
    "load_csv",
    "write_csv",
    "describe",
    "stratified_split",
]


@dataclass(frozen=True)
class FeatureSchema:
    feature_names: tuple[str, ...]
    label_name: str = "defect"

    def __post_init__(self):
        names = tuple(self.feature_names)
        object.__setattr__(self, "feature_names", names)
        if not names:
            raise DatasetError("schema needs at least one feature")
        if any(not n for n in names):
            raise DatasetError("feature names must be nonempty")
        if len(set(names)) != len(names):
            raise DatasetError(f"duplicate feature names in {names}")
        if not self.label_name:
            raise DatasetError("label name must be nonempty")
        if self.label_name in names:
            raise DatasetError(f"label {self.label_name!r} is also listed as a feature")

    @property
    def arity(self) -> int:
        return len(self.feature_names)


# Metrics named for the Kaggle defect dataset; real files usually need their own schema.
DEFAULT_SCHEMA = FeatureSchema(("loc", "cyclomatic_complexity", "dit", "cbo"), "defect")


@dataclass(frozen=True)
class MetricRecord:
    features: tuple[float, ...]
    label: int
    origin: str = "real"  # "real" | "synthetic"


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    schema: FeatureSchema
    X: np.ndarray
    y: np.ndarray
    synthetic: np.ndarray = None
    index: np.ndarray = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, self.schema.arity)
        n = X.shape[0]
        if X.ndim != 2 or X.shape[1] != self.schema.arity:
            raise DatasetError(f"feature matrix shape {X.shape} does not match schema arity {self.schema.arity}")
        if n < 1:
            raise DatasetError("dataset has no records")
        if not np.all(np.isfinite(X)):
            raise DatasetError("non-finite feature value")
        y = np.asarray(self.y)
        if y.shape != (n,):
            raise DatasetError(f"label vector shape {y.shape} does not match {n} records")
        if not np.all((y == 0) | (y == 1)):
            raise DatasetError("labels must be 0 or 1")
        synthetic = np.zeros(n, bool) if self.synthetic is None else self.synthetic
        index = np.arange(n) if self.index is None else self.index
        object.__setattr__(self, "X", _frozen(X, np.float64))
        object.__setattr__(self, "y", _frozen(y, np.int64))
        object.__setattr__(self, "synthetic", _frozen(synthetic, bool))
        object.__setattr__(self, "index", _frozen(index, np.int64))
        if self.synthetic.shape != (n,) or self.index.shape != (n,):
            raise DatasetError("origin/index vectors must have one entry per record")

    def __len__(self):
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def records(self) -> list[MetricRecord]:
        return [
            MetricRecord(tuple(row.tolist()), int(lab), "synthetic" if syn else "real")
            for row, lab, syn in zip(self.X, self.y, self.synthetic)
        ]

    def class_counts(self) -> dict[int, int]:
        return {0: int(np.sum(self.y == 0)), 1: int(np.sum(self.y == 1))}

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.schema, self.X[rows], self.y[rows], self.synthetic[rows], self.index[rows])

    def replace(self, X=None, y=None, synthetic=None, index=None) -> "Dataset":
        return Dataset(
            self.schema,
            self.X if X is None else X,
            self.y if y is None else y,
            self.synthetic if synthetic is None else synthetic,
            self.index if index is None else index,
        )

    @classmethod
    def from_records(cls, schema: FeatureSchema, records) -> "Dataset":
        records = list(records)
        if not records:
            raise DatasetError("dataset has no records")
        for r in records:
            if len(r.features) != schema.arity:
                raise DatasetError(f"record has {len(r.features)} features, schema expects {schema.arity}")
        X = np.array([r.features for r in records], dtype=np.float64)
        y = np.array([r.label for r in records])
        syn = np.array([r.origin == "synthetic" for r in records])
        return cls(schema, X, y, syn)


@dataclass(frozen=True, eq=False)
class SplitPair:
    train: Dataset
    test: Dataset
    tp_percent: int
    train_rows: np.ndarray = field(repr=False, default=None)
    test_rows: np.ndarray = field(repr=False, default=None)


def _parse_label(cell, lineno):
    text = cell.strip()
    low = text.lower()
    if low in ("true", "false"):
        return int(low == "true")
    try:
        value = float(text)
    except ValueError:
        raise DatasetError(f"line {lineno}: label {text!r} is not 0 or 1") from None
    if value not in (0.0, 1.0):
        raise DatasetError(f"line {lineno}: label {text!r} is not 0 or 1")
    return int(value)


def load_csv(path, schema: FeatureSchema = DEFAULT_SCHEMA) -> Dataset:
    """Read a comma-separated metric file with a header row.

    Columns are picked out and ordered by ``schema``; extra columns are
    ignored. Line numbers in error messages are 1-based and count the header.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"data file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        wanted = list(schema.feature_names) + [schema.label_name]
        missing = [c for c in wanted if c not in header]
        if missing:
            raise DatasetError(f"{path}: missing column(s) {', '.join(missing)}")
        cols = [header.index(c) for c in schema.feature_names]
        label_col = header.index(schema.label_name)
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                raise DatasetError(f"line {lineno}: expected {len(header)} cells, got {len(row)}")
            values = []
            for c in cols:
                cell = row[c].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise DatasetError(
                        f"line {lineno}: non-numeric value {cell!r} in column {header[c]!r}"
                    ) from None
                if not math.isfinite(v):
                    raise DatasetError(f"line {lineno}: non-finite value {cell!r} in column {header[c]!r}")
                values.append(v)
            rows.append(values)
            labels.append(_parse_label(row[label_col], lineno))
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    return Dataset(schema, np.array(rows, dtype=np.float64), np.array(labels))


def write_csv(dataset: Dataset, path, with_origin=False):
    path = Path(path)
    header = list(dataset.schema.feature_names) + [dataset.schema.label_name]
    if with_origin:
        header.append("origin")
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row, lab, syn in zip(dataset.X, dataset.y, dataset.synthetic):
            out = [repr(float(v)) for v in row] + [int(lab)]
            if with_origin:
                out.append("synthetic" if syn else "real")
            w.writerow(out)


def describe(dataset: Dataset) -> dict:
    """Per-class and per-origin counts plus per-feature min/max/mean/std.

    Std is the population standard deviation (divides by n).
    """
    X = dataset.X
    features = {}
    for j, name in enumerate(dataset.schema.feature_names):
        col = X[:, j]
        features[name] = {
            "min": float(col.min()),
            "max": float(col.max()),
            "mean": float(col.mean()),
            "std": float(col.std()),
        }
    n_syn = int(dataset.synthetic.sum())
    return {
        "n": dataset.n,
        "class_counts": dataset.class_counts(),
        "origin_counts": {"real": dataset.n - n_syn, "synthetic": n_syn},
        "features": features,
    }


def train_quotas(counts: dict[int, int], tp_percent: int) -> dict[int, int]:
    """Per-class train sizes by largest remainder.

    Each class gets floor(n_c * tp / 100); the leftover seats, up to the
    half-up rounded total, go to classes with the largest fractional parts,
    lower label first on ties.
    """
    total = sum(counts.values())
    target = (total * tp_percent + 50) // 100
    quotas = {c: (n * tp_percent) // 100 for c, n in counts.items()}
    leftover = target - sum(quotas.values())
    order = sorted(counts, key=lambda c: (-((counts[c] * tp_percent) % 100), c))
    for c in order[: max(leftover, 0)]:
        if (counts[c] * tp_percent) % 100:
            quotas[c] += 1
    return quotas


def stratified_split(dataset: Dataset, tp_percent: int, seed: int) -> SplitPair:
    if not isinstance(tp_percent, (int, np.integer)) or not 1 <= tp_percent <= 99:
        raise DatasetError(f"training percentage must be an integer in [1, 99], got {tp_percent!r}")
    counts = dataset.class_counts()
    empty = [c for c, n in counts.items() if n == 0]
    if empty:
        raise DatasetError(f"class {empty[0]} has no records")
    quotas = train_quotas(counts, int(tp_percent))
    rng = np.random.default_rng(seed)
    train_rows, test_rows = [], []
    for c in sorted(counts):
        members = np.flatnonzero(dataset.y == c)
        perm = rng.permutation(members)
        train_rows.append(perm[: quotas[c]])
        test_rows.append(perm[quotas[c]:])
    train_rows = np.sort(np.concatenate(train_rows))
    test_rows = np.sort(np.concatenate(test_rows))
    if len(train_rows) == 0 or len(test_rows) == 0:
        side = "training" if len(train_rows) == 0 else "test"
        raise DatasetError(f"training percentage {tp_percent} leaves no {side} records")
    return SplitPair(
        dataset.subset(train_rows),
        dataset.subset(test_rows),
        int(tp_percent),
        train_rows,
        test_rows,
    )

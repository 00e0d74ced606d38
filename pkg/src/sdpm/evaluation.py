"""Metrics, the ADE fitness objective, a logistic-regression baseline and TP sweeps."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ade import AdeConfig, Dim, SearchSpace, decode, encode, optimize
from .anra import AnraConfig, PreprocessedDataset, augment_minority, clean_and_normalize
from .dataset import Dataset, stratified_split
from .errors import DatasetError, NumericError, SdpmError, TrainingDiverged
from .model.qvaet import HyperParams, Prediction
from .model.training import predict_dataset, train

__all__ = [
    "ConfusionMatrix",
    "Metrics",
    "SweepRow",
    "SweepReport",
    "SweepConfig",
    "LogisticModel",
    "DEFAULT_SPACE",
    "DEFAULT_TPS",
    "confusion",
    "metrics",
    "evaluate_predictions",
    "genome_seed",
    "derive_seed",
    "hyper_from_values",
    "fitness_objective",
    "make_objective",
    "logreg_loss_grad",
    "train_baseline_logreg",
    "tp_sweep",
    "read_report_csv",
]

DEFAULT_TPS = (40, 50, 60, 70, 80, 90)
DIVERGED_FITNESS = -1.0
MODEL_NAMES = ("ADE-QVAET", "QVAET", "LogReg")

DEFAULT_SPACE = SearchSpace((
    Dim("learning_rate", 0.02, 0.3, "log"),
    Dim("l2_reg", 1e-6, 1e-2, "log"),
    Dim("n_layers", 1, 3, "linear", "integer"),
))


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    degenerate: tuple = ()

    def as_dict(self):
        return {"accuracy": self.accuracy, "precision": self.precision, "recall": self.recall, "f1": self.f1}


def _labels(preds):
    return np.array([p.label if isinstance(p, Prediction) else int(p) for p in preds], dtype=np.int64)


def confusion(predictions, labels) -> ConfusionMatrix:
    """Counts with label 1 (defective) as the positive class."""
    p = _labels(predictions)
    y = np.asarray(labels, dtype=np.int64)
    if p.shape != y.shape or p.size == 0:
        raise ValueError(f"need equal, nonzero lengths; got {p.size} predictions and {y.size} labels")
    return ConfusionMatrix(
        tp=int(np.sum((p == 1) & (y == 1))),
        fp=int(np.sum((p == 1) & (y == 0))),
        fn=int(np.sum((p == 0) & (y == 1))),
        tn=int(np.sum((p == 0) & (y == 0))),
    )


def metrics(cm: ConfusionMatrix) -> Metrics:
    """Accuracy, precision, recall and F1. A zero denominator gives 0 plus a flag."""
    if cm.total <= 0:
        raise ValueError("empty confusion matrix")
    flags = []
    accuracy = (cm.tp + cm.tn) / cm.total
    if cm.tp + cm.fp:
        precision = cm.tp / (cm.tp + cm.fp)
    else:
        precision = 0.0
        flags.append("precision")
    if cm.tp + cm.fn:
        recall = cm.tp / (cm.tp + cm.fn)
    else:
        recall = 0.0
        flags.append("recall")
    if precision + recall:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        flags.append("f1")
    return Metrics(accuracy, precision, recall, f1, tuple(flags))


def evaluate_predictions(predictions, labels) -> Metrics:
    return metrics(confusion(predictions, labels))


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from integers and byte strings."""
    h = hashlib.sha256()
    for part in parts:
        h.update(part if isinstance(part, bytes) else repr(part).encode())
        h.update(b"|")
    return int.from_bytes(h.digest()[:8], "little") >> 1


def genome_seed(run_seed: int, genome) -> int:
    return derive_seed(int(run_seed), np.ascontiguousarray(genome, dtype=np.float64).tobytes())


def hyper_from_values(base: HyperParams, values: dict) -> HyperParams:
    return dataclasses.replace(base, **values)


def fitness_objective(train_clean: PreprocessedDataset, hyper: HyperParams, seed: int,
                      anra: AnraConfig = AnraConfig(), metric: str = "f1") -> float:
    """Inner-validation score of ``hyper`` on cleaned, normalized training data.

    The data is split 80/20 (stratified, seeded), only the inner-train part is
    augmented, and the model is scored on the inner-validation part. A
    diverging run scores -1 instead of raising.
    """
    inner = stratified_split(train_clean.data, 80, seed)
    aug, _ = augment_minority(inner.train, dataclasses.replace(anra, seed=seed))
    try:
        model = train(PreprocessedDataset(aug, train_clean.norm), hyper, seed)
        proba = model.predict_proba_normalized(inner.test.X)
    except (TrainingDiverged, FloatingPointError):
        return DIVERGED_FITNESS
    if not np.all(np.isfinite(proba)):
        return DIVERGED_FITNESS
    m = evaluate_predictions((proba >= 0.5).astype(int), inner.test.y)
    return float(getattr(m, metric))


def make_objective(train_clean: PreprocessedDataset, space: SearchSpace, base: HyperParams,
                   run_seed: int, anra: AnraConfig = AnraConfig(), metric: str = "f1"):
    """Genome -> fitness closure for :func:`sdpm.ade.optimize`."""
    if metric not in ("f1", "accuracy"):
        raise ValueError(f"fitness metric must be 'f1' or 'accuracy', got {metric!r}")

    def objective(genome):
        try:
            hyper = hyper_from_values(base, decode(genome, space))
        except ValueError:
            return DIVERGED_FITNESS
        return fitness_objective(train_clean, hyper, genome_seed(run_seed, genome), anra, metric)

    return objective


def default_genome(base: HyperParams, space: SearchSpace):
    return encode({n: getattr(base, n) for n in space.names}, space)


@dataclass
class LogisticModel:
    w: np.ndarray
    b: float
    loss_history: list = field(default_factory=list)
    seed: int = 0

    def predict_proba(self, Z):
        return np.exp(-np.logaddexp(0.0, -(np.asarray(Z) @ self.w + self.b)))

    def predict(self, Z):
        return (self.predict_proba(Z) >= 0.5).astype(np.int64)


def logreg_loss_grad(Z, y, w, b, l2=0.0):
    """Mean BCE (+ l2*|w|^2) and its gradient for a linear logit."""
    logit = Z @ w + b
    value = float(np.mean(np.logaddexp(0.0, logit) - y * logit) + l2 * np.dot(w, w))
    r = (np.exp(-np.logaddexp(0.0, -logit)) - y) / len(y)
    return value, Z.T @ r + 2 * l2 * w, float(r.sum())


def train_baseline_logreg(train_data: Dataset, lr: float = 0.5, epochs: int = 300, seed: int = 0,
                          l2: float = 0.0) -> LogisticModel:
    """Full-batch gradient descent from zero weights on normalized features."""
    counts = train_data.class_counts()
    if counts[0] == 0 or counts[1] == 0:
        raise DatasetError("baseline needs both classes present")
    Z, y = train_data.X, train_data.y.astype(np.float64)
    w, b = np.zeros(Z.shape[1]), 0.0
    history = []
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(epochs):
            value, gw, gb = logreg_loss_grad(Z, y, w, b, l2)
            if not np.isfinite(value):
                raise TrainingDiverged(epoch, value)
            history.append(value)
            w = w - lr * gw
            b = b - lr * gb
    return LogisticModel(w, b, history, seed)


@dataclass(frozen=True)
class SweepConfig:
    anra: AnraConfig = AnraConfig()
    ade: AdeConfig = AdeConfig(pop_size=8, max_generations=10)
    space: SearchSpace = DEFAULT_SPACE
    hyper: HyperParams = HyperParams()
    models: tuple = ("ADE-QVAET", "LogReg")
    fitness_metric: str = "f1"
    baseline_lr: float = 0.5
    baseline_epochs: int = 300

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        unknown = [m for m in self.models if m not in MODEL_NAMES]
        if unknown or not self.models:
            raise ValueError(f"models must be a nonempty subset of {MODEL_NAMES}, got {self.models}")
        if len(set(self.models)) != len(self.models):
            raise ValueError(f"duplicate model names in {self.models}")
        if self.fitness_metric not in ("f1", "accuracy"):
            raise ValueError(f"fitness metric must be 'f1' or 'accuracy', got {self.fitness_metric!r}")
        if not self.baseline_lr > 0 or self.baseline_epochs < 0:
            raise ValueError("baseline_lr must be > 0 and baseline_epochs >= 0")
        unknown = [n for n in self.space.names if n not in HyperParams.field_names()]
        if unknown:
            raise ValueError(f"search space names unknown hyperparameter(s): {', '.join(unknown)}")


@dataclass(frozen=True)
class SweepRow:
    tp: int
    model: str
    metrics: Metrics
    seed: int
    flags: str = ""


@dataclass
class SweepReport:
    rows: list
    details: dict = field(default_factory=dict)

    COLUMNS = ("tp", "model", "accuracy", "precision", "recall", "f1", "seed", "flags")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.rows:
            m = r.metrics
            w.writerow([r.tp, r.model, repr(m.accuracy), repr(m.precision), repr(m.recall), repr(m.f1),
                        r.seed, r.flags])
        return buf.getvalue()

    def to_json(self) -> str:
        rows = [{"tp": r.tp, "model": r.model, **r.metrics.as_dict(), "seed": r.seed, "flags": r.flags}
                for r in self.rows]
        return json.dumps({"rows": rows}, indent=2) + "\n"

    def to_markdown(self) -> str:
        def pct(v):
            return f"{100 * v:.2f}"

        lines = ["| tp | model | accuracy | precision | recall | f1 |", "|---|---|---|---|---|---|"]
        for r in self.rows:
            m = r.metrics
            lines.append(f"| {r.tp} | {r.model} | {pct(m.accuracy)} | {pct(m.precision)} | "
                         f"{pct(m.recall)} | {pct(m.f1)} |")
        # wide layout: one line per model, metric cells joined across TPs
        tps = sorted({r.tp for r in self.rows})
        models = list(dict.fromkeys(r.model for r in self.rows))
        lookup = {(r.tp, r.model): r.metrics for r in self.rows}
        tp_label = "/".join(str(t) for t in tps)
        lines += ["", f"| Model | Accuracy (TP {tp_label}) | Precision | Recall | F1-score |",
                  "|---|---|---|---|---|"]
        for name in models:
            cells = []
            for key in ("accuracy", "precision", "recall", "f1"):
                cells.append("/".join(pct(getattr(lookup[(t, name)], key)) if (t, name) in lookup else "-"
                                      for t in tps))
            lines.append(f"| {name} | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"

    def render(self, fmt: str) -> str:
        if fmt == "csv":
            return self.to_csv()
        if fmt == "md":
            return self.to_markdown()
        if fmt == "json":
            return self.to_json()
        raise ValueError(f"unknown report format {fmt!r}")


def read_report_csv(path) -> SweepReport:
    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            m = Metrics(float(rec["accuracy"]), float(rec["precision"]), float(rec["recall"]), float(rec["f1"]))
            rows.append(SweepRow(int(rec["tp"]), rec["model"], m, int(rec["seed"]), rec.get("flags", "")))
    return SweepReport(rows)


def _failed_row(tp, model, seed, exc):
    return SweepRow(tp, model, Metrics(0.0, 0.0, 0.0, 0.0, ("failed",)), seed, f"failed:{type(exc).__name__}")


def _row(tp, model, seed, preds, labels):
    m = evaluate_predictions(preds, labels)
    flags = ";".join(f"{name}_undefined" for name in m.degenerate)
    return SweepRow(tp, model, m, seed, flags)


def tp_sweep(dataset: Dataset, tps=DEFAULT_TPS, config: SweepConfig = SweepConfig(), seed: int = 0) -> SweepReport:
    """One row per (TP, model), in TP order then model order.

    Per TP: stratified split; ANRA cleaning and normalization fitted on the
    training part only; ADE tuning on the cleaned (unaugmented) training part;
    final fit on the augmented training part; scoring on the untouched test
    part.
    """
    tps = list(tps)
    if not tps:
        raise ValueError("no training percentages given")
    rows, details = [], {}
    for tp in tps:
        cell_seed = derive_seed(int(seed), int(tp))
        info = {"seed": cell_seed}
        details[tp] = info
        try:
            split = stratified_split(dataset, tp, cell_seed)
            clean = clean_and_normalize(split.train, config.anra)
            aug, added = augment_minority(clean.data, dataclasses.replace(config.anra, seed=cell_seed))
            full = PreprocessedDataset(aug, clean.norm, clean.clip_bounds,
                                       dict(clean.provenance, synthetic_added=added))
            test_Z = clean.norm.transform(split.test.X)
            info["provenance"] = full.provenance
            info["train_rows"] = split.train_rows.tolist()
            info["test_rows"] = split.test_rows.tolist()
        except (SdpmError, ValueError) as exc:
            rows.extend(_failed_row(tp, name, cell_seed, exc) for name in config.models)
            continue
        for name in config.models:
            try:
                if name == "ADE-QVAET":
                    objective = make_objective(clean, config.space, config.hyper, cell_seed,
                                               config.anra, config.fitness_metric)
                    result = optimize(objective, config.space, dataclasses.replace(config.ade, seed=cell_seed))
                    hyper = hyper_from_values(config.hyper, result.best_decoded)
                    info["tuned"] = result.best_decoded
                    info["tuned_fitness"] = result.best_fitness
                    info["ade_history"] = result.history
                    model = train(full, hyper, cell_seed)
                    preds = predict_dataset(model, test_Z)
                elif name == "QVAET":
                    model = train(full, config.hyper, cell_seed)
                    preds = predict_dataset(model, test_Z)
                elif name == "LogReg":
                    base = train_baseline_logreg(aug, config.baseline_lr, config.baseline_epochs, cell_seed)
                    preds = base.predict(test_Z)
                else:
                    raise ValueError(f"unknown model {name!r}")
                rows.append(_row(tp, name, cell_seed, preds, split.test.y))
            except (SdpmError, ValueError, NumericError) as exc:
                rows.append(_failed_row(tp, name, cell_seed, exc))
    return SweepReport(rows, details)

"""Mini-batch training and deterministic inference for the QVAET model."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..anra import NormStats, PreprocessedDataset
from ..errors import DatasetError, TrainingDiverged
from .qvaet import HyperParams, ModelParams, Prediction, gradient, init_params, predict_proba

__all__ = ["TrainedModel", "train", "infer", "predict_dataset"]


@dataclass(eq=False)
class TrainedModel:
    params: ModelParams
    hyper: HyperParams
    norm: NormStats
    loss_history: list = field(default_factory=list)
    seed: int = 0

    @property
    def arity(self):
        return len(self.norm.mean)

    def predict_proba_normalized(self, Z):
        return predict_proba(Z, self.params, self.hyper)

    def predict_proba(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.arity:
            raise DatasetError(f"expected {self.arity} features, got {X.shape[1]}")
        return self.predict_proba_normalized(self.norm.transform(X))


def train(train_set: PreprocessedDataset, hyper: HyperParams, seed: int = 0) -> TrainedModel:
    """Plain mini-batch gradient descent on the composite loss.

    One seeded stream drives initialization, the per-epoch shuffle and the
    per-record reparameterization noise, so a fixed seed reproduces the model
    bit for bit.
    """
    data = train_set.data
    counts = data.class_counts()
    if counts[0] == 0 or counts[1] == 0:
        raise DatasetError("training data must contain both classes")
    rng = np.random.default_rng(seed)
    params = init_params(hyper, data.schema.arity, rng)
    X, y = data.X, data.y
    n = len(y)
    history = []
    for epoch in range(hyper.epochs):
        order = rng.permutation(n)
        eps = rng.standard_normal((n, hyper.latent_dim))
        total = 0.0
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, n, hyper.batch_size):
                rows = order[start:start + hyper.batch_size]
                value, grads = gradient(X[rows], y[rows], params, hyper, eps[rows])
                if not np.isfinite(value):
                    raise TrainingDiverged(epoch, value)
                total += value * len(rows)
                for k, g in grads.items():
                    params[k] -= hyper.learning_rate * g
        mean_loss = total / n
        if not np.isfinite(mean_loss) or not params.all_finite():
            raise TrainingDiverged(epoch, mean_loss)
        history.append(mean_loss)
    return TrainedModel(params, hyper, train_set.norm, history, seed)


def infer(model: TrainedModel, x) -> Prediction:
    """Normalize a raw feature vector with the stored stats and classify it (z = mu)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DatasetError("infer takes a single feature vector")
    p = float(model.predict_proba(x[None, :])[0])
    return Prediction(p, int(p >= 0.5))


def predict_dataset(model: TrainedModel, Z) -> np.ndarray:
    """0/1 predictions for already-normalized rows."""
    return (model.predict_proba_normalized(Z) >= 0.5).astype(np.int64)

"""``sdpm-v1`` text checkpoints.

Layout, one item per line::

    sdpm-v1
    hyper <name> <value>            (one line per HyperParams field)
    seed <int>
    norm_mean <d> <v1> ... <vd>
    norm_std <d> <v1> ... <vd>
    loss_history <k> <v1> ... <vk>
    tensor <name> <ndim> <dim1> ... <dimN>
    <row-major values, space separated>

Floats are written with ``repr`` so they parse back to the identical double.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..anra import NormStats
from ..errors import DatasetError
from .qvaet import HyperParams, ModelParams, param_shapes
from .training import TrainedModel

MAGIC = "sdpm-v1"

__all__ = ["save_checkpoint", "load_checkpoint", "MAGIC"]


def _fmt(values):
    return " ".join(repr(float(v)) for v in np.ravel(values))


def save_checkpoint(model: TrainedModel, path):
    lines = [MAGIC]
    for name, value in model.hyper.to_dict().items():
        lines.append(f"hyper {name} {value!r}")
    lines.append(f"seed {int(model.seed)}")
    lines.append(f"norm_mean {len(model.norm.mean)} {_fmt(model.norm.mean)}")
    lines.append(f"norm_std {len(model.norm.std)} {_fmt(model.norm.std)}")
    lines.append(f"loss_history {len(model.loss_history)} {_fmt(model.loss_history)}".rstrip())
    for name, tensor in model.params.items():
        dims = " ".join(str(d) for d in tensor.shape)
        lines.append(f"tensor {name} {tensor.ndim} {dims}".rstrip())
        lines.append(_fmt(tensor))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _floats(tokens, count, what):
    if len(tokens) != count:
        raise DatasetError(f"checkpoint: {what} expects {count} values, found {len(tokens)}")
    return np.array([float(t) for t in tokens], dtype=np.float64)


def load_checkpoint(path) -> TrainedModel:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise DatasetError(f"{path}: not an {MAGIC} checkpoint")
    hyper_kw, params = {}, ModelParams()
    seed, mean, std, history = 0, None, None, []
    i = 1
    while i < len(lines):
        parts = lines[i].split()
        i += 1
        if not parts:
            continue
        key = parts[0]
        if key == "hyper":
            name, raw = parts[1], parts[2]
            if name not in HyperParams.field_names():
                raise DatasetError(f"checkpoint: unknown hyperparameter {name!r}")
            hyper_kw[name] = int(raw) if raw.lstrip("-").isdigit() else float(raw)
        elif key == "seed":
            seed = int(parts[1])
        elif key in ("norm_mean", "norm_std", "loss_history"):
            vals = _floats(parts[2:], int(parts[1]), key)
            if key == "norm_mean":
                mean = vals
            elif key == "norm_std":
                std = vals
            else:
                history = vals.tolist()
        elif key == "tensor":
            name, ndim = parts[1], int(parts[2])
            shape = tuple(int(d) for d in parts[3:3 + ndim])
            size = int(np.prod(shape)) if shape else 1
            body = lines[i].split() if i < len(lines) else []
            i += 1
            params[name] = _floats(body, size, f"tensor {name}").reshape(shape)
        else:
            raise DatasetError(f"checkpoint line {i}: unknown record {key!r}")
    if mean is None or std is None:
        raise DatasetError(f"{path}: missing normalization statistics")
    hyper = HyperParams(**hyper_kw)
    expected = param_shapes(hyper, len(mean))
    if {k: v.shape for k, v in params.items()} != expected:
        raise DatasetError(f"{path}: tensor set does not match the stored hyperparameters")
    params = ModelParams((k, params[k]) for k in expected)
    return TrainedModel(params, hyper, NormStats(mean, std), history, seed)

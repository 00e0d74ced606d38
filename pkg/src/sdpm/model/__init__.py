"""QVAET model: kernels, forward/backward, training and checkpoints."""
from .kernels import BACKEND
from .qvaet import (
    ContextFeatures,
    HyperParams,
    LatentSample,
    ModelParams,
    Prediction,
    decode,
    embed_inputs,
    encode,
    gradient,
    init_params,
    kl_divergence,
    loss,
    predict,
    predict_proba,
    quantum_feature_map,
    transformer_forward,
    zero_params,
)
from .training import TrainedModel, infer, predict_dataset, train
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "BACKEND",
    "ContextFeatures",
    "HyperParams",
    "LatentSample",
    "ModelParams",
    "Prediction",
    "TrainedModel",
    "decode",
    "embed_inputs",
    "encode",
    "gradient",
    "infer",
    "init_params",
    "kl_divergence",
    "load_checkpoint",
    "loss",
    "predict",
    "predict_dataset",
    "predict_proba",
    "quantum_feature_map",
    "save_checkpoint",
    "train",
    "transformer_forward",
    "zero_params",
]

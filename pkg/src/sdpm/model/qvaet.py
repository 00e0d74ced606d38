"""QVAET classifier: angle-encoding feature map, variational encoder,
transformer stack over latent tokens, and a logistic prediction head.

Everything here is a pure function of (inputs, parameters, noise). Batches are
2-D arrays of normalized features with shape ``(B, d)``; the noise ``eps`` for
the reparameterization has shape ``(B, latent_dim)``.

Forward path for one record::

    phi = [cos(pi*u_1), sin(pi*u_1), ...]     u = tanh(x_normalized)
    h   = tanh(tanh(phi W1 + b1) W2 + b2)
    mu, logvar = h W_mu + b_mu, h W_lv + b_lv
    z   = mu + exp(logvar / 2) * eps
    tokens = reshape(z, (T, E)) + pos
    tokens = block(tokens) for each layer
    q   = mean over tokens
    p   = logistic(q . w + b)

The decoder ``tanh(z Wd1 + bd1) Wd2 + bd2`` reconstructs ``phi``.
"""
from __future__ import annotations

from collections import namedtuple
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import kernels
from ._pykernels import BLOCK_PARAM_NAMES

__all__ = [
    "HyperParams",
    "ModelParams",
    "LatentSample",
    "ContextFeatures",
    "Prediction",
    "init_params",
    "zero_params",
    "quantum_feature_map",
    "embed_inputs",
    "encode",
    "decode",
    "kl_divergence",
    "transformer_forward",
    "predict",
    "predict_proba",
    "loss",
    "gradient",
]


@dataclass(frozen=True)
class HyperParams:
    learning_rate: float = 0.1
    l2_reg: float = 1e-4
    n_layers: int = 1
    latent_dim: int = 8
    token_count: int = 2
    kl_weight: float = 1e-3
    recon_weight: float = 0.1
    epochs: int = 60
    batch_size: int = 32
    head_count: int = 1
    hidden_dim: int = 16
    logvar_bias_init: float = -4.0

    def __post_init__(self):
        for name in ("n_layers", "latent_dim", "token_count", "epochs", "batch_size", "head_count", "hidden_dim"):
            value = getattr(self, name)
            if isinstance(value, float) and value.is_integer():
                object.__setattr__(self, name, int(value))
            elif not isinstance(value, (int, np.integer)):
                raise ValueError(f"{name} must be an integer, got {value!r}")
        if not np.isfinite(self.logvar_bias_init):
            raise ValueError("logvar_bias_init must be finite")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        for name in ("l2_reg", "kl_weight", "recon_weight"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.n_layers < 1:
            raise ValueError("n_layers must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1 or self.hidden_dim < 1 or self.token_count < 1 or self.head_count < 1:
            raise ValueError("batch_size, hidden_dim, token_count and head_count must be >= 1")
        if self.latent_dim < 1 or self.latent_dim % self.token_count:
            raise ValueError(f"latent_dim {self.latent_dim} is not a multiple of token_count {self.token_count}")
        if self.embed_dim % self.head_count:
            raise ValueError(f"head_count {self.head_count} does not divide embed_dim {self.embed_dim}")

    @property
    def embed_dim(self) -> int:
        return self.latent_dim // self.token_count

    @property
    def ffn_dim(self) -> int:
        return 2 * self.embed_dim

    def to_dict(self):
        return asdict(self)

    @classmethod
    def field_names(cls):
        return tuple(f.name for f in fields(cls))


class ModelParams(dict):
    """Named parameter tensors, in a fixed insertion order."""

    def copy(self):
        return ModelParams((k, v.copy()) for k, v in self.items())

    def block(self, layer):
        return tuple(self[f"blocks.{layer}.{n}"] for n in BLOCK_PARAM_NAMES)

    @staticmethod
    def is_weight(name):
        """True for the matrices that the L2 penalty covers."""
        leaf = name.rsplit(".", 1)[-1]
        return leaf.startswith("w")

    def l2(self):
        return sum(float(np.sum(v * v)) for k, v in self.items() if self.is_weight(k))

    def all_finite(self):
        return all(np.all(np.isfinite(v)) for v in self.values())


LatentSample = namedtuple("LatentSample", "mu logvar z")
ContextFeatures = namedtuple("ContextFeatures", "q")


@dataclass(frozen=True)
class Prediction:
    probability: float
    label: int


def param_shapes(hyper: HyperParams, arity: int):
    enc_in = 2 * arity
    H, L, T, E, F = hyper.hidden_dim, hyper.latent_dim, hyper.token_count, hyper.embed_dim, hyper.ffn_dim
    shapes = {
        "enc.w1": (enc_in, H), "enc.b1": (H,),
        "enc.w2": (H, H), "enc.b2": (H,),
        "enc.w_mu": (H, L), "enc.b_mu": (L,),
        "enc.w_lv": (H, L), "enc.b_lv": (L,),
        "dec.w1": (L, H), "dec.b1": (H,),
        "dec.w2": (H, enc_in), "dec.b2": (enc_in,),
        "pos": (T, E),
    }
    block = {
        "wq": (E, E), "wk": (E, E), "wv": (E, E), "wo": (E, E), "bo": (E,),
        "g1": (E,), "c1": (E,), "wf1": (E, F), "bf1": (F,), "wf2": (F, E), "bf2": (E,),
        "g2": (E,), "c2": (E,),
    }
    for layer in range(hyper.n_layers):
        for name in BLOCK_PARAM_NAMES:
            shapes[f"blocks.{layer}.{name}"] = block[name]
    shapes["head.w"] = (E,)
    shapes["head.b"] = (1,)
    return shapes


def init_params(hyper: HyperParams, arity: int, rng) -> ModelParams:
    """Glorot-uniform matrices, zero biases, unit layer-norm gains.

    The log-variance head's bias starts at ``hyper.logvar_bias_init`` so early
    training is not swamped by unit-variance latent noise.
    """
    params = ModelParams()
    for name, shape in param_shapes(hyper, arity).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf.startswith("g"):
            params[name] = np.ones(shape)
        elif leaf.startswith(("b", "c")):
            params[name] = np.zeros(shape)
            if name == "enc.b_lv":
                params[name] += hyper.logvar_bias_init
        else:
            fan_in, fan_out = (shape[0], shape[1]) if len(shape) == 2 else (shape[0], 1)
            s = np.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-s, s, size=shape)
    return params


def zero_params(hyper: HyperParams, arity: int) -> ModelParams:
    return ModelParams((k, np.zeros(s)) for k, s in param_shapes(hyper, arity).items())


def quantum_feature_map(x):
    """Angle encoding: each value becomes the pair (cos(pi*x), sin(pi*x)).

    This is the classical simulation of a product-state qubit encoding; the
    output has twice the input length, pairs interleaved per feature.
    """
    x = np.asarray(x, dtype=np.float64)
    out = np.empty(x.shape[:-1] + (2 * x.shape[-1],))
    out[..., 0::2] = np.cos(np.pi * x)
    out[..., 1::2] = np.sin(np.pi * x)
    return out


# z-scores are squashed by tanh(x / INPUT_SCALE) before the angle map: angles
# stay inside (-pi, pi) so distinct values never alias, and the squash is still
# close to linear over the usual +-3 standard deviations.
INPUT_SCALE = 3.0


def embed_inputs(X):
    return quantum_feature_map(np.tanh(np.asarray(X, dtype=np.float64) / INPUT_SCALE))


def _logistic(a):
    return np.exp(-np.logaddexp(0.0, -a))


def _check_width(a, width, what):
    if a.shape[-1] != width:
        raise ValueError(f"{what} has length {a.shape[-1]}, expected {width}")


def _encode(phi, params, eps):
    _check_width(phi, params["enc.w1"].shape[0], "encoded input")
    _check_width(eps, params["enc.w_mu"].shape[1], "noise vector")
    h1 = np.tanh(phi @ params["enc.w1"] + params["enc.b1"])
    h2 = np.tanh(h1 @ params["enc.w2"] + params["enc.b2"])
    mu = h2 @ params["enc.w_mu"] + params["enc.b_mu"]
    lv = h2 @ params["enc.w_lv"] + params["enc.b_lv"]
    sd = np.exp(0.5 * lv)
    z = mu + sd * eps
    return LatentSample(mu, lv, z), (h1, h2, sd)


def encode(phi, params, eps) -> LatentSample:
    """Variational encoder with the reparameterized sample ``z``."""
    return _encode(np.asarray(phi, float), params, np.asarray(eps, float))[0]


def _decode(z, params):
    _check_width(z, params["dec.w1"].shape[0], "latent vector")
    hd = np.tanh(z @ params["dec.w1"] + params["dec.b1"])
    return hd @ params["dec.w2"] + params["dec.b2"], hd


def decode(z, params):
    return _decode(np.asarray(z, float), params)[0]


def kl_divergence(mu, logvar):
    """KL(N(mu, exp(logvar)) || N(0, I)), summed over the last axis."""
    mu = np.asarray(mu, float)
    logvar = np.asarray(logvar, float)
    if mu.shape != logvar.shape:
        raise ValueError("mu and logvar differ in shape")
    kl = 0.5 * np.sum(mu * mu + np.expm1(logvar) - logvar, axis=-1)
    return float(kl) if np.ndim(kl) == 0 else kl


def _tokens(z, params, hyper, positional=True):
    z = np.atleast_2d(z)
    if z.shape[-1] != hyper.token_count * hyper.embed_dim:
        raise ValueError(f"latent length {z.shape[-1]} != token_count*embed_dim")
    X = z.reshape(z.shape[0], hyper.token_count, hyper.embed_dim)
    return X + params["pos"] if positional else X.copy()


def _transformer(z, params, hyper, positional=True):
    X = _tokens(z, params, hyper, positional)
    caches = []
    for layer in range(hyper.n_layers):
        X, cache = kernels.block_forward(X, params.block(layer), hyper.head_count)
        caches.append(cache)
    return X, caches


def transformer_forward(z, params, hyper, positional=True, return_attention=False):
    """Tokenize ``z``, run the block stack and mean-pool into context features.

    With ``return_attention`` the per-layer attention tensors, shape
    ``(B, heads, T, T)``, are returned as well.
    """
    X, caches = _transformer(np.asarray(z, float), params, hyper, positional)
    q = X.mean(axis=1)
    if np.ndim(z) == 1:
        q = q[0]
    ctx = ContextFeatures(q)
    if return_attention:
        return ctx, [c[4] for c in caches]
    return ctx


def predict_proba_from_q(q, params):
    return _logistic(np.asarray(q) @ params["head.w"] + params["head.b"][0])


def predict(q, params) -> Prediction:
    q = q.q if isinstance(q, ContextFeatures) else q
    p = float(predict_proba_from_q(np.asarray(q, float), params))
    return Prediction(p, int(p >= 0.5))


def predict_proba(X, params, hyper):
    """Deterministic (z = mu) probabilities for a batch of normalized rows."""
    X = np.atleast_2d(np.asarray(X, float))
    latent, _ = _encode(embed_inputs(X), params, np.zeros((X.shape[0], hyper.latent_dim)))
    Xt, _ = _transformer(latent.mu, params, hyper)
    return predict_proba_from_q(Xt.mean(axis=1), params)


def _forward(X, y, params, hyper, eps):
    X = np.atleast_2d(np.asarray(X, float))
    y = np.asarray(y, float).reshape(-1)
    eps = np.atleast_2d(np.asarray(eps, float))
    if X.shape[0] != y.shape[0] or eps.shape[0] != X.shape[0]:
        raise ValueError("batch, labels and noise draws differ in length")
    phi = embed_inputs(X)
    latent, enc_cache = _encode(phi, params, eps)
    Xt, caches = _transformer(latent.z, params, hyper)
    q = Xt.mean(axis=1)
    logit = q @ params["head.w"] + params["head.b"][0]
    bce = np.logaddexp(0.0, logit) - y * logit
    total = bce
    rec = hd = None
    if hyper.recon_weight > 0:
        rec, hd = _decode(latent.z, params)
        total = total + hyper.recon_weight * np.mean((rec - phi) ** 2, axis=1)
    if hyper.kl_weight > 0:
        total = total + hyper.kl_weight * kl_divergence(latent.mu, latent.logvar)
    value = float(np.mean(total))
    if hyper.l2_reg > 0:
        value += hyper.l2_reg * params.l2()
    state = dict(phi=phi, latent=latent, enc_cache=enc_cache, caches=caches, q=q,
                 logit=logit, rec=rec, hd=hd, y=y, eps=eps)
    return value, state


def loss(X, y, params, hyper, eps) -> float:
    """Mean of BCE + recon_weight*MSE(recon, phi) + kl_weight*KL, plus l2_reg*sum(W^2)."""
    return _forward(X, y, params, hyper, eps)[0]


def gradient(X, y, params, hyper, eps):
    """Loss and its exact gradient with respect to every tensor in ``params``.

    ``eps`` is held fixed. Returns ``(loss_value, grads)`` where ``grads`` has
    the same keys and shapes as ``params``.
    """
    value, st = _forward(X, y, params, hyper, eps)
    B = st["phi"].shape[0]
    g = ModelParams((k, np.zeros_like(v)) for k, v in params.items())
    latent = st["latent"]
    h1, h2, sd = st["enc_cache"]

    dlogit = (_logistic(st["logit"]) - st["y"]) / B
    g["head.w"] = st["q"].T @ dlogit
    g["head.b"] = np.array([dlogit.sum()])
    dq = np.outer(dlogit, params["head.w"])
    dX = np.repeat(dq[:, None, :] / hyper.token_count, hyper.token_count, axis=1)
    for layer in reversed(range(hyper.n_layers)):
        dX, gb = kernels.block_backward(dX, st["caches"][layer], params.block(layer), hyper.head_count)
        for name, grad in zip(BLOCK_PARAM_NAMES, gb):
            g[f"blocks.{layer}.{name}"] = grad
    g["pos"] = dX.sum(axis=0)
    dz = dX.reshape(B, hyper.latent_dim)

    if st["rec"] is not None:
        width = st["phi"].shape[1]
        drec = hyper.recon_weight * 2.0 * (st["rec"] - st["phi"]) / (width * B)
        hd = st["hd"]
        g["dec.w2"] = hd.T @ drec
        g["dec.b2"] = drec.sum(axis=0)
        dpre = (drec @ params["dec.w2"].T) * (1.0 - hd * hd)
        g["dec.w1"] = latent.z.T @ dpre
        g["dec.b1"] = dpre.sum(axis=0)
        dz = dz + dpre @ params["dec.w1"].T

    dmu = dz
    dlv = dz * st["eps"] * 0.5 * sd
    if hyper.kl_weight > 0:
        dmu = dmu + hyper.kl_weight * latent.mu / B
        dlv = dlv + hyper.kl_weight * 0.5 * np.expm1(latent.logvar) / B
    g["enc.w_mu"] = h2.T @ dmu
    g["enc.b_mu"] = dmu.sum(axis=0)
    g["enc.w_lv"] = h2.T @ dlv
    g["enc.b_lv"] = dlv.sum(axis=0)
    dpre2 = (dmu @ params["enc.w_mu"].T + dlv @ params["enc.w_lv"].T) * (1.0 - h2 * h2)
    g["enc.w2"] = h1.T @ dpre2
    g["enc.b2"] = dpre2.sum(axis=0)
    dpre1 = (dpre2 @ params["enc.w2"].T) * (1.0 - h1 * h1)
    g["enc.w1"] = st["phi"].T @ dpre1
    g["enc.b1"] = dpre1.sum(axis=0)

    if hyper.l2_reg > 0:
        for k, v in params.items():
            if ModelParams.is_weight(k):
                g[k] = g[k] + 2.0 * hyper.l2_reg * v
    return value, g

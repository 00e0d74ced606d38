"""Backend selection for the transformer-block kernels.

The compiled ``_ckernels`` extension is used when it was built; otherwise
the numpy implementation in ``_pykernels`` is. Set ``SDPM_BACKEND=python``
to force the fallback.
"""
import os

from . import _pykernels

BACKENDS = {"python": _pykernels}

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None
else:
    BACKENDS["cython"] = _ckernels


def _choose():
    wanted = os.environ.get("SDPM_BACKEND", "").strip().lower()
    if wanted:
        if wanted not in BACKENDS:
            raise ImportError(f"SDPM_BACKEND={wanted!r} is not available; have {sorted(BACKENDS)}")
        return wanted
    return "cython" if "cython" in BACKENDS else "python"


BACKEND = _choose()
_impl = BACKENDS[BACKEND]


def get_backend(name=None):
    """Return the kernel module for ``name`` (default: the active backend)."""
    if name is None:
        return _impl
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unbuilt backend {name!r}; have {sorted(BACKENDS)}") from None


def block_forward(X, w, n_heads):
    return _impl.block_forward(X, w, n_heads)


def block_backward(dY, cache, w, n_heads):
    return _impl.block_backward(dY, cache, w, n_heads)

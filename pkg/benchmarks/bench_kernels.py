"""Compare the compiled and numpy transformer-block kernels.

    python benchmarks/bench_kernels.py [--repeat 20] [--train]

Reports the best-of-``repeat`` time for one forward + backward pass at a few
batch/token/width shapes, the speedup of the compiled backend, and the largest
absolute difference between the two backends' outputs. ``--train`` also times
a short end-to-end training run with each backend.
"""
import argparse
import dataclasses
import timeit

import numpy as np

from sdpm.anra import AnraConfig, anra_pipeline
from sdpm.dataset import Dataset, FeatureSchema
from sdpm.model import HyperParams, init_params, train
from sdpm.model import kernels

SHAPES = [  # (batch, tokens, embed_dim, heads)
    (32, 2, 4, 1),
    (32, 4, 8, 2),
    (128, 4, 8, 2),
    (128, 8, 16, 4),
]


def block_weights(T, E, H, rng):
    hyper = HyperParams(latent_dim=T * E, token_count=T, head_count=H)
    return init_params(hyper, 2, rng).block(0)


def time_backend(mod, X, w, H, dY, repeat):
    def step():
        Y, cache = mod.block_forward(X, w, H)
        mod.block_backward(dY, cache, w, H)

    number = max(1, int(2000 // X.shape[0]))
    return min(timeit.repeat(step, number=number, repeat=repeat)) / number


def bench_blocks(repeat):
    rng = np.random.default_rng(0)
    have_c = "cython" in kernels.BACKENDS
    py = kernels.get_backend("python")
    cy = kernels.get_backend("cython") if have_c else None
    print(f"{'B':>5} {'T':>3} {'E':>3} {'H':>3} {'python us':>11} {'cython us':>11} {'speedup':>8} {'max |diff|':>11}")
    for B, T, E, H in SHAPES:
        w = block_weights(T, E, H, rng)
        X = rng.normal(size=(B, T, E))
        dY = rng.normal(size=(B, T, E))
        t_py = time_backend(py, X, w, H, dY, repeat)
        if cy is None:
            print(f"{B:>5} {T:>3} {E:>3} {H:>3} {t_py * 1e6:>11.1f} {'-':>11} {'-':>8} {'-':>11}")
            continue
        t_cy = time_backend(cy, X, w, H, dY, repeat)
        Yp, cp = py.block_forward(X, w, H)
        Yc, cc = cy.block_forward(X, w, H)
        dp, gp = py.block_backward(dY, cp, w, H)
        dc, gc = cy.block_backward(dY, cc, w, H)
        diff = max(np.max(np.abs(Yp - Yc)), np.max(np.abs(dp - dc)),
                   max(np.max(np.abs(a - b)) for a, b in zip(gp, gc)))
        print(f"{B:>5} {T:>3} {E:>3} {H:>3} {t_py * 1e6:>11.1f} {t_cy * 1e6:>11.1f} {t_py / t_cy:>7.1f}x {diff:>11.1e}")
    if cy is None:
        print("compiled backend not built; run `pip install -e . --no-build-isolation` to build it")


def bench_training():
    rng = np.random.default_rng(0)
    y = np.zeros(400, int)
    y[:80] = 1
    rng.shuffle(y)
    X = rng.normal(size=(400, 2)) + 3.0 * y[:, None]
    pre = anra_pipeline(Dataset(FeatureSchema(("a", "b")), X, y), AnraConfig())
    hyper = dataclasses.replace(HyperParams(), n_layers=2, epochs=30)
    print(f"\ntraining {pre.data.n} records, {hyper.epochs} epochs, {hyper.n_layers} blocks:")
    for name in sorted(kernels.BACKENDS):
        kernels._impl = kernels.get_backend(name)
        t = min(timeit.repeat(lambda: train(pre, hyper, 0), number=1, repeat=3))
        print(f"  {name:>7}: {t:.3f}s")
    kernels._impl = kernels.get_backend(kernels.BACKEND)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--train", action="store_true", help="also time end-to-end training")
    args = parser.parse_args()
    print(f"active backend: {kernels.BACKEND}; available: {sorted(kernels.BACKENDS)}\n")
    bench_blocks(args.repeat)
    if args.train:
        bench_training()


if __name__ == "__main__":
    main()

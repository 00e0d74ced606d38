"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v -s``. The default
sweep (criterion 10) dominates the runtime at a few minutes.
"""
import math
import time

import numpy as np
import pytest

from sdpm import ade, evaluation
from sdpm.ade import AdeConfig, Dim, SearchSpace, decode
from sdpm.anra import AnraConfig, anra_pipeline, clean_and_normalize
from sdpm.cli import run
from sdpm.dataset import Dataset, FeatureSchema, write_csv
from sdpm.evaluation import (
    DEFAULT_TPS,
    SweepConfig,
    default_genome,
    evaluate_predictions,
    make_objective,
    read_report_csv,
    tp_sweep,
)
from sdpm.model import (
    HyperParams,
    gradient,
    init_params,
    kl_divergence,
    load_checkpoint,
    loss,
    quantum_feature_map,
    save_checkpoint,
    train,
    transformer_forward,
)
from sdpm.model import kernels

SPHERE = SearchSpace(tuple(Dim(f"x{i}", -5.0, 5.0) for i in range(5)))

# per-generation population-best fitness of every ADE run in this module
ELITISM_TRACES = []


def report(number, ok, detail, capsys):
    with capsys.disabled():
        print(f"\nACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


def recording_optimize(objective, space, config=AdeConfig(), map_fn=map, callback=None):
    trace = []

    def cb(gen, pop, state):
        trace.append(float(pop.fitness.max()))
        if callback is not None:
            callback(gen, pop, state)

    result = ade.optimize(objective, space, config, map_fn, cb)
    ELITISM_TRACES.append(trace)
    return result


@pytest.fixture
def record_sweeps(monkeypatch):
    monkeypatch.setattr(evaluation, "optimize", recording_optimize)


def sphere(g):
    return -sum(v * v for v in decode(g, SPHERE).values())


def blobs(seed, n=400, sep=3.0):
    """Two Gaussian blobs, 20% positives, unit variance, means 0 and (sep, sep)."""
    rng = np.random.default_rng(seed)
    y = np.zeros(n, int)
    y[: n // 5] = 1
    rng.shuffle(y)
    X = rng.normal(size=(n, 2)) + sep * y[:, None]
    return Dataset(FeatureSchema(("loc", "cc"), "defect"), X, y)


def test_criterion_01_ade_sphere(capsys):
    t0 = time.perf_counter()
    fits = [recording_optimize(sphere, SPHERE, AdeConfig(pop_size=30, max_generations=100, seed=s)).best_fitness
            for s in range(10)]
    elapsed = time.perf_counter() - t0
    hits = sum(f >= -1e-3 for f in fits)
    report(1, hits >= 8 and elapsed < 5.0,
           f"{hits}/10 seeds reach >= -1e-3 (worst {min(fits):.2e}) in {elapsed:.2f}s", capsys)


def classic_de(objective, n_dims, pop_size, generations, F, CR, seed):
    rng = np.random.default_rng(seed)
    Y = rng.random((pop_size, n_dims))
    fit = np.array([objective(y) for y in Y])
    out = []
    for _ in range(generations):
        trials = []
        for j in range(pop_size):
            a, b, c = rng.choice([i for i in range(pop_size) if i != j], 3, replace=False)
            x = np.clip(Y[a] + F * (Y[b] - Y[c]), 0.0, 1.0)
            r = rng.random(n_dims)
            k = rng.integers(n_dims)
            trials.append(np.array([x[i] if (r[i] <= CR or i == k) else Y[j, i] for i in range(n_dims)]))
        fv = [objective(v) for v in trials]
        Y, fit = Y.copy(), fit.copy()
        for j in range(pop_size):
            if fv[j] >= fit[j]:
                Y[j], fit[j] = trials[j], fv[j]
        out.append(Y.copy())
    return out


def test_criterion_03_classic_de_oracle(capsys):
    mismatches, compared = 0, 0
    for seed in range(3):
        cfg = AdeConfig(pop_size=10, max_generations=20, c_adapt=0.0, init_mu_f=0.5, init_mu_cr=0.9,
                        f_scale=0.0, cr_sigma=0.0, seed=seed)
        ours = []
        recording_optimize(sphere, SPHERE, cfg, callback=lambda g, pop, st: ours.append(pop.genomes.copy()))
        ref = classic_de(sphere, 5, 10, 20, 0.5, 0.9, seed)
        compared += len(ref)
        mismatches += sum(not np.array_equal(a, b) for a, b in zip(ours, ref)) + abs(len(ours) - len(ref))
    report(3, mismatches == 0, f"{compared} generations compared over 3 seeds, {mismatches} mismatches", capsys)


def _fd_worst(hyper, seed, h=1e-5, batch=8, arity=4):
    rng = np.random.default_rng(seed)
    params = init_params(hyper, arity, rng)
    X = rng.normal(size=(batch, arity))
    y = rng.integers(0, 2, batch)
    eps = rng.standard_normal((batch, hyper.latent_dim))
    _, grads = gradient(X, y, params, hyper, eps)
    worst, worst_name = 0.0, None
    for name, value in params.items():
        num = np.empty_like(value)
        for idx in np.ndindex(value.shape):
            old = value[idx]
            value[idx] = old + h
            up = loss(X, y, params, hyper, eps)
            value[idx] = old - h
            down = loss(X, y, params, hyper, eps)
            value[idx] = old
            num[idx] = (up - down) / (2 * h)
        diff = np.linalg.norm(num - grads[name])
        scale = max(np.linalg.norm(num), np.linalg.norm(grads[name]))
        err = diff / scale if scale > 1e-10 else diff
        if err > worst:
            worst, worst_name = err, name
    return worst, worst_name


def test_criterion_04_gradients(capsys, monkeypatch):
    hyper = HyperParams(n_layers=2)
    results = []
    for backend in sorted(kernels.BACKENDS):
        monkeypatch.setattr(kernels, "_impl", kernels.get_backend(backend))
        for seed in range(3):
            err, name = _fd_worst(hyper, seed)
            results.append((err, name, backend, seed))
    worst = max(results)
    report(4, worst[0] < 1e-4,
           f"worst group relative error {worst[0]:.2e} ({worst[1]}, {worst[2]} backend, seed {worst[3]}) "
           f"over {len(results)} runs", capsys)


def test_criterion_05_normalization(capsys):
    rng = np.random.default_rng(0)
    attn_err = 0.0
    for hyper in (HyperParams(), HyperParams(latent_dim=12, token_count=3, head_count=2, n_layers=3),
                  HyperParams(latent_dim=16, token_count=4, head_count=4, n_layers=2)):
        params = init_params(hyper, 4, rng)
        z = rng.normal(scale=5.0, size=(64, hyper.latent_dim))
        _, attn = transformer_forward(z, params, hyper, return_attention=True)
        attn_err = max(attn_err, max(float(np.max(np.abs(a.sum(-1) - 1.0))) for a in attn))
    mu = rng.uniform(-10, 10, size=(100000, 4))
    lv = rng.uniform(-20, 20, size=(100000, 4))
    kl_min = float(np.min(kl_divergence(mu, lv)))
    x = rng.uniform(-1e3, 1e3, size=100000)
    phi = quantum_feature_map(x)
    map_err = float(np.max(np.abs(phi[0::2] ** 2 + phi[1::2] ** 2 - 1.0)))
    ok = attn_err <= 1e-9 and kl_min >= 0 and map_err <= 1e-12
    report(5, ok, f"attention row error {attn_err:.1e}, min KL {kl_min:.2e}, feature-map error {map_err:.1e}",
           capsys)


def test_criterion_06_anra_balancing(capsys):
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(size=(180, 3)), rng.normal(2.0, 1.0, size=(20, 3))])
    y = np.array([0] * 180 + [1] * 20)
    X = np.vstack([X, X[[3, 50, 190]]])  # planted duplicates
    y = np.concatenate([y, y[[3, 50, 190]]])
    X = np.vstack([X, [[1e4, 0.0, 0.0]]])  # planted outlier
    y = np.append(y, 0)
    pre = anra_pipeline(Dataset(FeatureSchema(("a", "b", "c")), X, y), AnraConfig(seed=0))
    counts = pre.data.class_counts()
    finite = bool(np.all(np.isfinite(pre.data.X)))
    prov = pre.provenance
    ok = prov["rows_dropped_dup"] == 3 and prov["rows_clipped"] >= 1 and abs(counts[0] - counts[1]) <= 1 and finite
    report(6, ok, f"dropped {prov['rows_dropped_dup']}, clipped {prov['rows_clipped']}, "
                  f"final counts {counts}, all finite {finite}", capsys)


def test_criterion_07_end_to_end(capsys, record_sweeps):
    seed = 0
    config = SweepConfig()  # ADE pop 8, 10 generations; ADE-QVAET and logistic regression
    data = blobs(seed)
    t0 = time.perf_counter()
    rep = tp_sweep(data, (50,), config, seed)
    elapsed = time.perf_counter() - t0
    info = rep.details[50]
    clean = clean_and_normalize(data.subset(info["train_rows"]), config.anra)
    objective = make_objective(clean, config.space, config.hyper, info["seed"], config.anra)
    untuned = objective(default_genome(config.hyper, config.space))
    f1 = {r.model: r.metrics.f1 for r in rep.rows}
    ok = (f1["ADE-QVAET"] >= 0.85 and f1["ADE-QVAET"] >= f1["LogReg"] - 0.02
          and info["tuned_fitness"] >= untuned and elapsed < 120)
    report(7, ok, f"test F1 {f1['ADE-QVAET']:.4f} vs LR {f1['LogReg']:.4f}; tuned fitness "
                  f"{info['tuned_fitness']:.4f} vs untuned {untuned:.4f}; {elapsed:.1f}s", capsys)


def test_criterion_08_metric_oracle(capsys):
    rng = np.random.default_rng(0)

    def brute(p, y):
        tp = sum(a == 1 and b == 1 for a, b in zip(p, y))
        fp = sum(a == 1 and b == 0 for a, b in zip(p, y))
        fn = sum(a == 0 and b == 1 for a, b in zip(p, y))
        tn = sum(a == 0 and b == 0 for a, b in zip(p, y))
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        return ((tp + tn) / len(p), prec, rec, 2 * prec * rec / (prec + rec) if prec + rec else 0.0)

    def ours(p, y):
        m = evaluate_predictions(p, y)
        return (m.accuracy, m.precision, m.recall, m.f1)

    p, y = rng.integers(0, 2, 1000), rng.integers(0, 2, 1000)
    bad = int(ours(p, y) != brute(p.tolist(), y.tolist()))
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        p, y = rng.integers(0, 2, n), rng.integers(0, 2, n)
        bad += ours(p, y) != brute(p.tolist(), y.tolist())
    example = evaluation.metrics(evaluation.ConfusionMatrix(tp=3, fp=1, fn=1, tn=5))
    ex = (example.accuracy, example.precision, example.recall, example.f1)
    report(8, bad == 0 and ex == (0.8, 0.75, 0.75, 0.75),
           f"{bad} mismatches over 1000 pairs plus 1000 random vectors; worked example {ex}", capsys)


def test_criterion_09_determinism(capsys, tmp_path, record_sweeps):
    path = tmp_path / "blobs.csv"
    write_csv(blobs(1, n=200), path)
    args = ["sweep", "--data", str(path), "--seed", "7", "--tp", "50", "--tp", "90",
            "--set", "data.features=loc,cc", "--set", "ade.pop_size=4", "--set", "ade.max_generations=3",
            "--set", "model.epochs=20"]
    codes = [run([*args, "--out", str(tmp_path / name)]) for name in ("a", "b")]
    same_csv = (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()

    pre = anra_pipeline(blobs(2, n=200), AnraConfig(seed=2))
    model = train(pre, HyperParams(epochs=20), seed=2)
    save_checkpoint(model, tmp_path / "m.ckpt")
    back = load_checkpoint(tmp_path / "m.ckpt")
    X = np.random.default_rng(3).normal(scale=3.0, size=(500, 2))
    same_inference = model.predict_proba(X).tobytes() == back.predict_proba(X).tobytes()
    ok = codes == [0, 0] and same_csv and same_inference
    report(9, ok, f"sweep exit codes {codes}, byte-identical CSV {same_csv}, "
                  f"bitwise checkpoint inference {same_inference}", capsys)


def test_criterion_10_default_sweep_shape(capsys, tmp_path, record_sweeps):
    path = tmp_path / "blobs.csv"
    write_csv(blobs(3), path)
    out = tmp_path / "sweep"
    t0 = time.perf_counter()
    code = run(["sweep", "--data", str(path), "--out", str(out), "--set", "data.features=loc,cc"])
    elapsed = time.perf_counter() - t0
    rows = read_report_csv(out / "report.csv").rows if code == 0 else []
    models = SweepConfig().models
    expected = [(tp, m) for tp in DEFAULT_TPS for m in models]
    shape_ok = [(r.tp, r.model) for r in rows] == expected
    in_range = all(0 <= v <= 1 for r in rows for v in r.metrics.as_dict().values())
    failed = [r for r in rows if r.flags.startswith("failed")]
    ok = code == 0 and shape_ok and in_range and not failed
    report(10, ok, f"{len(rows)} rows (expected {len(DEFAULT_TPS)} x {len(models)} = {len(expected)}), "
                   f"order ok {shape_ok}, metrics in [0,1] {in_range}, failed cells {len(failed)}, "
                   f"{elapsed:.0f}s", capsys)


def test_criterion_02_elitism(capsys):
    # runs last so it sees every ADE run above; standalone it checks a few of its own
    if not ELITISM_TRACES:
        for s in range(3):
            recording_optimize(sphere, SPHERE, AdeConfig(pop_size=10, max_generations=30, seed=s))
    violations = sum(1 for tr in ELITISM_TRACES for a, b in zip(tr, tr[1:]) if b < a or math.isnan(b))
    generations = sum(len(tr) for tr in ELITISM_TRACES)
    report(2, violations == 0,
           f"{violations} violations over {len(ELITISM_TRACES)} ADE runs / {generations} generations", capsys)

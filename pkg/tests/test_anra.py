import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdpm.anra import (
    AnraConfig,
    NormStats,
    anra_pipeline,
    apply_clip,
    apply_normalize,
    augment_minority,
    clip_outliers,
    deduplicate,
    fit_normalize,
)
from sdpm.dataset import Dataset, FeatureSchema
from sdpm.errors import DatasetError

S1 = FeatureSchema(("a",))
S2 = FeatureSchema(("a", "b"))


def ds(X, y, schema=None):
    X = np.asarray(X, float)
    if X.ndim == 1:
        X = X[:, None]
    schema = schema or FeatureSchema(tuple(f"f{i}" for i in range(X.shape[1])))
    return Dataset(schema, X, y)


def on_segment(p, a, b, tol=1e-9):
    d = b - a
    dd = float(d @ d)
    if dd == 0:
        return np.allclose(p, a, atol=tol)
    u = float((p - a) @ d) / dd
    return -tol <= u <= 1 + tol and np.allclose(a + u * d, p, atol=tol)


class TestDeduplicate:
    def test_drops_repeat(self):
        d = ds([1, 2, 1, 3], [0, 0, 0, 1])
        out, dropped = deduplicate(d)
        assert out.X[:, 0].tolist() == [1, 2, 3] and dropped == 1

    def test_distinct_identity(self):
        d = ds([1, 2, 3], [0, 1, 0])
        out, dropped = deduplicate(d)
        assert dropped == 0 and np.array_equal(out.X, d.X)

    def test_label_is_part_of_key(self):
        out, dropped = deduplicate(ds([5, 5], [0, 1]))
        assert dropped == 0 and out.n == 2

    def test_idempotent(self):
        once, _ = deduplicate(ds([1, 1, 2, 2, 3], [0, 0, 1, 1, 0]))
        _, again = deduplicate(once)
        assert again == 0


class TestClip:
    def test_hand_quartiles(self):
        col = list(range(1, 10)) + [100]
        out, bounds, count = clip_outliers(ds(col, [0] * 5 + [1] * 5), 3.0)
        # Q1 = 3.25, Q3 = 7.75 (linear interpolation), IQR = 4.5
        assert bounds[0].tolist() == [3.25 - 13.5, 7.75 + 13.5]
        assert out.X[:, 0].tolist() == list(range(1, 10)) + [21.25]
        assert count == 1

    def test_constant_column(self):
        out, bounds, count = clip_outliers(ds([7, 7, 7], [0, 1, 0]), 3.0)
        assert count == 0 and bounds[0].tolist() == [7, 7]

    def test_huge_multiplier_noop(self):
        d = ds([[1, -50], [2, 3], [1000, 4]], [0, 1, 0])
        out, _, count = clip_outliers(d, 1e9)
        assert count == 0 and np.array_equal(out.X, d.X)

    def test_labels_untouched_and_idempotent(self):
        rng = np.random.default_rng(0)
        d = ds(rng.standard_cauchy((50, 3)), rng.integers(0, 2, 50))
        out, bounds, _ = clip_outliers(d, 1.5)
        assert np.array_equal(out.y, d.y)
        again, n = apply_clip(out, bounds)
        assert n == 0 and np.array_equal(again.X, out.X)


class TestNormalize:
    def test_two_values(self):
        d = ds([2, 4], [0, 1])
        norm = fit_normalize(d)
        assert norm.mean.tolist() == [3] and norm.std.tolist() == [1]
        assert apply_normalize(d, norm).X[:, 0].tolist() == [-1, 1]

    def test_constant_flag_and_zero_map(self):
        d = ds([[7, 1], [7, 2]], [0, 1])
        norm = fit_normalize(d)
        assert norm.constant.tolist() == [True, False]
        assert apply_normalize(d, norm).X[:, 0].tolist() == [0, 0]

    def test_single_row_all_constant(self):
        norm = fit_normalize(ds([[1.5, 2.5, 3.5]], [1]))
        assert norm.constant.all()

    def test_mean_maps_to_zero(self):
        norm = NormStats(np.array([3.0, 1.0]), np.array([2.0, 0.5]))
        assert norm.transform(np.array([3.0, 1.0])).tolist() == [0, 0]

    def test_arity_mismatch(self):
        norm = fit_normalize(ds([[1, 2], [3, 4]], [0, 1]))
        with pytest.raises(DatasetError):
            apply_normalize(ds([1, 2], [0, 1]), norm)


class TestAugment:
    def imbalanced(self, n_maj, n_min, seed=0, d=2):
        rng = np.random.default_rng(seed)
        X = np.vstack([rng.normal(size=(n_maj, d)), rng.normal(2, 1, size=(n_min, d))])
        return ds(X, [0] * n_maj + [1] * n_min)

    def test_ninety_ten(self):
        out, added = augment_minority(self.imbalanced(90, 10), AnraConfig())
        assert added == 80 and out.class_counts() == {0: 90, 1: 90}
        assert out.synthetic.sum() == 80

    def test_balanced_is_noop(self):
        d = self.imbalanced(50, 50)
        out, added = augment_minority(d, AnraConfig())
        assert added == 0 and out is d

    def test_partial_ratio(self):
        out, added = augment_minority(self.imbalanced(90, 10), AnraConfig(target_ratio=0.3))
        assert added == 17 and out.class_counts()[1] == 27

    def test_singleton_jitter(self):
        d = ds([[0.0, 0.0]] * 5 + [[1.0, 2.0]], [0] * 5 + [1])
        out, added = augment_minority(d, AnraConfig(jitter_sigma=0.01, seed=3))
        syn = out.X[out.synthetic]
        assert added == 4
        assert np.all(np.abs(syn - [1.0, 2.0]) < 0.1)
        assert not np.any(np.all(syn == [1.0, 2.0], axis=1))

    def test_needs_both_classes(self):
        with pytest.raises(DatasetError):
            augment_minority(ds([1, 2], [0, 0]), AnraConfig())

    def test_real_rows_untouched(self):
        d = self.imbalanced(30, 6)
        out, added = augment_minority(d, AnraConfig())
        assert np.array_equal(out.X[: d.n], d.X) and np.array_equal(out.y[: d.n], d.y)
        assert np.all(out.y[d.n:] == 1)

    @settings(max_examples=25, deadline=None)
    @given(n_min=st.integers(2, 6), n_maj=st.integers(7, 25), k=st.integers(1, 6), seed=st.integers(0, 10**6))
    def test_synthetic_on_minority_segments(self, n_min, n_maj, k, seed):
        d = self.imbalanced(n_maj, n_min, seed=seed, d=3)
        out, _ = augment_minority(d, AnraConfig(knn_k=k, seed=seed))
        real = d.X[d.y == 1]
        for p in out.X[out.synthetic]:
            assert any(on_segment(p, real[i], real[j]) for i in range(len(real)) for j in range(len(real)) if i != j)

    def test_deterministic(self):
        d = self.imbalanced(40, 5)
        a, _ = augment_minority(d, AnraConfig(seed=11))
        b, _ = augment_minority(d, AnraConfig(seed=11))
        assert a.X.tobytes() == b.X.tobytes()


class TestPipeline:
    def test_clean_balanced(self):
        rng = np.random.default_rng(1)
        d = ds(rng.normal(size=(20, 2)), [0, 1] * 10)
        pre = anra_pipeline(d, AnraConfig())
        assert pre.provenance == {"rows_dropped_dup": 0, "rows_clipped": 0, "synthetic_added": 0}
        assert np.allclose(pre.data.X, (d.X - d.X.mean(0)) / d.X.std(0))

    def test_planted_artifacts(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(40, 2))
        y = np.array([0] * 36 + [1] * 4)
        X = np.vstack([X, X[[0, 5, 37]], [[500.0, 0.0]]])
        y = np.concatenate([y, y[[0, 5, 37]], [0]])
        pre = anra_pipeline(ds(X, y), AnraConfig())
        assert pre.provenance["rows_dropped_dup"] == 3
        assert pre.provenance["rows_clipped"] == 1
        counts = pre.data.class_counts()
        assert abs(counts[0] - counts[1]) <= 1
        assert np.all(np.isfinite(pre.data.X))

    def test_values_within_clip_bounds(self):
        rng = np.random.default_rng(3)
        d = ds(rng.standard_cauchy((60, 2)), [0] * 50 + [1] * 10)
        pre = anra_pipeline(d, AnraConfig(iqr_multiplier=1.0))
        raw = pre.norm.inverse(pre.data.X)
        lo, hi = pre.clip_bounds[:, 0], pre.clip_bounds[:, 1]
        assert np.all(raw >= lo - 1e-9) and np.all(raw <= hi + 1e-9)

    def test_config_validation(self):
        for bad in (dict(iqr_multiplier=0), dict(knn_k=0), dict(target_ratio=0), dict(target_ratio=1.5),
                    dict(jitter_sigma=-1)):
            with pytest.raises(ValueError):
                AnraConfig(**bad)

import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import madesdr.dimsel as dimsel
from madesdr.dimsel import (
    DimensionWarning,
    augmented_loadings,
    bootstrap_lrt,
    cv_dimension,
    cv_folds,
    lrt_statistic,
    permutation_test,
    sequential_dimension,
)
from madesdr.expfam import Family
from madesdr.made import Dataset, MadeConfig, fit
from madesdr.predict import predict
from madesdr.simbench import SimDesign, generate

FAST = MadeConfig(d=1, outer_tol=1e-3)


def null_poisson(n=60, p=3, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(rng.poisson(3.0, n).astype(float), rng.normal(size=(n, p)))


def signal_poisson(n=100, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    y = rng.poisson(np.exp(0.3 + 0.9 * X[:, 0])).astype(float)
    return Dataset(y, X)


class TestPermutation:
    def test_outcome_fields(self):
        data = null_poisson()
        out = permutation_test(data, Family("poisson"), FAST, d0=0, R=8, seed=1)
        assert out.method == "permutation" and out.d0 == 0
        assert 0 <= out.p_value <= 1
        assert out.replicates.shape == (8,) and out.n_failed == 0
        assert out.statistic == pytest.approx(
            np.mean(augmented_loadings(data, Family("poisson"), FAST, 0)))

    def test_deterministic(self):
        data = null_poisson(seed=2)
        a = permutation_test(data, Family("poisson"), FAST, R=6, seed=7)
        b = permutation_test(data, Family("poisson"), FAST, R=6, seed=7)
        np.testing.assert_array_equal(a.replicates, b.replicates)
        assert a.p_value == b.p_value

    def test_order_independent(self):
        data = null_poisson(seed=2)
        out = permutation_test(data, Family("poisson"), FAST, R=6, seed=7)
        shuffled = np.random.default_rng(0).permutation(out.replicates)
        assert np.mean(np.abs(shuffled) > abs(out.statistic)) == out.p_value

    def test_identity_bound(self):
        data = signal_poisson(n=60, seed=3)
        R = 5
        out = permutation_test(data, Family("poisson"), FAST, R=R, seed=4, include_identity=True)
        assert out.replicates[0] == out.statistic
        assert out.p_value >= 1 / R

    def test_strong_signal_rejects(self):
        out = permutation_test(signal_poisson(seed=5), Family("poisson"), FAST, R=19, seed=5)
        assert out.p_value == 0.0 and out.rejected

    def test_higher_d0_reuses_basis(self):
        data = signal_poisson(n=60, seed=6)
        B0 = fit(data, Family("poisson"), FAST).B
        out = permutation_test(data, Family("poisson"), FAST, d0=1, R=4, seed=6, B0=B0)
        assert out.d0 == 1 and 0 <= out.p_value <= 1

    def test_summaries(self):
        data = null_poisson(seed=7)
        for summary in ("mean", "mean-abs", "median"):
            out = permutation_test(data, Family("poisson"), FAST, R=3, seed=1, summary=summary)
            assert np.isfinite(out.statistic)
        with pytest.raises(ValueError):
            permutation_test(data, Family("poisson"), FAST, R=3, summary="max")

    def test_failed_replicates_dropped(self, monkeypatch):
        data = null_poisson(seed=8)
        calls = []

        def flaky(args):
            calls.append(1)
            return None if len(calls) % 2 else 0.0

        monkeypatch.setattr(dimsel, "_perm_task", flaky)
        with pytest.warns(DimensionWarning, match="dropped"):
            out = permutation_test(data, Family("poisson"), FAST, R=6, seed=1)
        assert out.n_failed == 3 and out.replicates.size == 3

    def test_bad_arguments(self):
        data = null_poisson()
        with pytest.raises(ValueError):
            permutation_test(data, Family("poisson"), FAST, d0=3)
        with pytest.raises(ValueError):
            permutation_test(data, Family("poisson"), FAST, R=0)


class TestBootstrap:
    def test_nesting_nonnegative(self):
        # With an enormous bandwidth the d = 1 model nests the d = 0 model.
        for seed in range(3):
            lam, _ = lrt_statistic(null_poisson(seed=seed), Family("poisson"),
                                   MadeConfig(h=1e6), d0=0)
            assert lam >= -1e-6

    def test_nesting_nonnegative_higher_d0(self):
        lam, _ = lrt_statistic(signal_poisson(n=60, seed=9), Family("poisson"),
                               MadeConfig(h=1e6), d0=1)
        assert lam >= -1e-6

    def test_outcome(self):
        data = signal_poisson(n=60, seed=10)
        a = bootstrap_lrt(data, Family("poisson"), FAST, d0=0, R=5, seed=3)
        b = bootstrap_lrt(data, Family("poisson"), FAST, d0=0, R=5, seed=3)
        assert 0 <= a.p_value <= 1 and a.replicates.shape == (5,)
        np.testing.assert_array_equal(a.replicates, b.replicates)
        assert a.p_value == np.mean(a.replicates >= a.statistic)

    def test_signal_rejects(self):
        out = bootstrap_lrt(signal_poisson(seed=11), Family("poisson"), FAST, R=9, seed=2)
        assert out.rejected

    def test_gaussian_uses_fitted_dispersion(self):
        rng = np.random.default_rng(12)
        data = Dataset(rng.normal(size=50), rng.normal(size=(50, 2)))
        out = bootstrap_lrt(data, Family("gaussian"), MadeConfig(outer_tol=1e-3,
                                                                 dispersion_mode="estimate"),
                            R=3, seed=1)
        assert np.all(np.isfinite(out.replicates))

    def test_split_rejected(self):
        data = null_poisson()
        split = Dataset(data.y, data.X, train=np.arange(40), eval=np.arange(40, 60))
        with pytest.raises(ValueError, match="both roles"):
            bootstrap_lrt(split, Family("poisson"), FAST, R=2)


class TestSequential:
    def test_budget_exhaustion(self):
        out = sequential_dimension(null_poisson(), Family("poisson"), FAST, budget=0.0, seed=1)
        assert out.partial and out.d_hat == 0 and out.records == []
        assert "budget" in out.notes[0]

    def test_stops_at_first_non_rejection(self):
        out = sequential_dimension(signal_poisson(seed=13), Family("poisson"), FAST,
                                   R=19, seed=3)
        assert out.records[0].rejected
        assert out.d_hat == len(out.records) - 1
        assert not out.records[-1].rejected

    def test_bootstrap_method_and_max_d(self):
        out = sequential_dimension(signal_poisson(n=60, seed=14), Family("poisson"), FAST,
                                   method="bootstrap", R=4, seed=3, max_d=1)
        assert out.method == "bootstrap" and out.d_hat <= 1

    def test_serialization(self):
        out = sequential_dimension(null_poisson(seed=15), Family("poisson"), FAST, R=4, seed=5)
        doc = json.loads(json.dumps(out.to_dict()))
        assert doc["d_hat"] == out.d_hat
        assert [r["d0"] for r in doc["records"]] == [r.d0 for r in out.records]
        assert set(out.rows()[0]) == {"method", "d0", "statistic", "p_value"}

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            sequential_dimension(null_poisson(), Family("poisson"), level=1.5)
        with pytest.raises(ValueError):
            sequential_dimension(null_poisson(), Family("poisson"), method="cv")


class TestCrossValidation:
    def test_leave_one_out_matches_direct_loop(self):
        rng = np.random.default_rng(16)
        n = 14
        X = rng.normal(size=(n, 2))
        y = np.sin(X[:, 0]) + 0.1 * rng.normal(size=n)
        data = Dataset(y, X)
        fam = Family("gaussian", 1.0)
        cfg = MadeConfig(outer_tol=1e-3)
        out = cv_dimension(data, fam, cfg, K=n, dims=[0, 1])
        for rec in out.records:
            total = 0.0
            for i in range(n):
                keep = np.array([k for k in range(n) if k != i])
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    res = fit(Dataset(y[keep], X[keep]), fam, cfg, d=rec.d0)
                total += float((y[i] - predict(res, X[i:i + 1], "NW")[0]) ** 2)
            assert rec.statistic == pytest.approx(total, abs=1e-12)
        assert np.isnan(out.records[0].p_value)

    def test_tie_goes_to_smallest(self, monkeypatch):
        monkeypatch.setattr(dimsel, "_cv_task", lambda args: 0.0)
        out = cv_dimension(null_poisson(), Family("poisson"), FAST, K=3, seed=0)
        assert out.d_hat == 0
        assert [r.statistic for r in out.records] == [0.0] * 4

    def test_selects_signal_dimension(self):
        rng = np.random.default_rng(17)
        X = rng.normal(size=(80, 3))
        y = 2 * np.tanh(X[:, 0] - X[:, 1]) + 0.2 * rng.normal(size=80)
        out = cv_dimension(Dataset(y, X), Family("gaussian", 1.0), FAST, K=5, seed=1,
                           dims=[0, 1])
        assert out.d_hat == 1

    def test_degenerate_fold_skipped(self):
        rng = np.random.default_rng(18)
        y = np.zeros(10)
        y[3] = 1.0
        data = Dataset(y, rng.normal(size=(10, 2)))
        with pytest.warns(DimensionWarning, match="skipped"):
            out = cv_dimension(data, Family("binomial"), FAST, K=10, loss="misclass",
                               dims=[0])
        assert out.notes == ["1 fold(s) skipped"]

    def test_losses(self):
        y = np.array([0.0, 1.0, 1.0])
        np.testing.assert_array_equal(dimsel._loss("misclass", y, np.array([0.6, 0.6, 0.4])),
                                      [1, 0, 1])
        np.testing.assert_array_equal(dimsel._loss("absolute", y, y + 0.5), [0.5] * 3)
        with pytest.raises(ValueError):
            cv_dimension(null_poisson(), Family("poisson"), loss="hinge")

    def test_folds_errors(self):
        with pytest.raises(ValueError):
            cv_folds(5, 1)
        with pytest.raises(ValueError):
            cv_folds(5, 6)

    @settings(max_examples=100, deadline=None)
    @given(n=st.integers(2, 60), data=st.data(), seed=st.integers(0, 1000))
    def test_folds_partition(self, n, data, seed):
        K = data.draw(st.integers(2, n))
        folds = cv_folds(n, K, seed)
        assert len(folds) == K
        np.testing.assert_array_equal(np.sort(np.concatenate(folds)), np.arange(n))
        sizes = [len(f) for f in folds]
        assert max(sizes) - min(sizes) <= 1


class TestDesigns:
    def test_binomial_design_runs(self):
        design = SimDesign("binomial-inverse", 60, seed=19)
        train, _ = generate(design)
        out = permutation_test(train, design.family, FAST, R=4, seed=1)
        assert 0 <= out.p_value <= 1

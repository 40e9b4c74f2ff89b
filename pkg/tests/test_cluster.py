import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn import metrics as skm

from vocscreen.cluster import (
    REG_COVAR,
    align_and_score,
    ari,
    contingency,
    fit_gmm,
    n_parameters,
    nmi,
    pca_project,
    select_k,
    silhouette,
)


def _two_blobs(n=400, seed=0):
    rng = np.random.default_rng(seed)
    X = np.r_[rng.normal(0, 1, (n // 2, 2)), rng.normal(10, 1, (n // 2, 2))]
    truth = np.repeat([0, 1], n // 2)
    return X, truth


class TestGmm:
    def test_two_blobs_recovered(self):
        X, _ = _two_blobs()
        fit = fit_gmm(X, 2, seed=0)
        truth = np.array([[0, 0], [10, 10.0]])
        err = min(np.abs(fit.means[list(p)] - truth).max() for p in itertools.permutations(range(2)))
        assert err < 0.3

    def test_k1_closed_form(self):
        X = np.random.default_rng(1).normal(size=(50, 3)) @ [[1, 0.5, 0], [0, 1, 0.2], [0, 0, 2]]
        fit = fit_gmm(X, 1)
        assert fit.weights[0] == pytest.approx(1.0)
        np.testing.assert_allclose(fit.means[0], X.mean(axis=0), atol=1e-12)
        cov = np.cov(X.T, bias=True) + REG_COVAR * np.eye(3)
        np.testing.assert_allclose(fit.covariances[0], cov, atol=1e-12)

    def test_k_equals_n(self):
        with pytest.raises(ValueError):
            fit_gmm(np.zeros((5, 2)), 5)

    def test_bad_tol(self):
        with pytest.raises(ValueError):
            fit_gmm(np.random.default_rng(0).normal(size=(10, 2)), 2, tol=0)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 4))
    def test_fit_invariants(self, seed, k):
        rng = np.random.default_rng(seed)
        X = np.r_[rng.normal(0, 1, (40, 2)), rng.normal(3, 0.5, (40, 2))]
        fit = fit_gmm(X, k, seed=seed, restarts=2)
        assert abs(fit.weights.sum() - 1) < 1e-9
        np.testing.assert_allclose(fit.responsibilities.sum(axis=1), 1, atol=1e-9)
        for cov in fit.covariances:
            np.testing.assert_allclose(cov, cov.T)
            assert np.linalg.eigvalsh(cov).min() >= REG_COVAR * (1 - 1e-6)
        hist = np.array(fit.history)
        assert np.all(np.diff(hist) >= -1e-9 * np.abs(hist[:-1]).clip(1))
        assert fit.log_likelihood == hist[-1]

    def test_deterministic(self):
        X, _ = _two_blobs(100, 3)
        a, b = fit_gmm(X, 3, seed=4), fit_gmm(X, 3, seed=4)
        np.testing.assert_array_equal(a.means, b.means)
        assert a.log_likelihood == b.log_likelihood

    def test_best_restart_kept(self):
        X, _ = _two_blobs(100, 5)
        many = fit_gmm(X, 3, seed=2, restarts=4)
        for r in range(1, 4):
            assert many.log_likelihood >= fit_gmm(X, 3, seed=2, restarts=r).log_likelihood


class TestSelect:
    def test_bic_picks_two(self):
        X, _ = _two_blobs()
        assert select_k(X, range(1, 6)).chosen_k == 2

    def test_single_gaussian(self):
        hits = 0
        for seed in range(20):
            X = np.random.default_rng(200 + seed).normal(size=(300, 2))
            hits += select_k(X, range(1, 5), seed=seed, restarts=1).chosen_k == 1
        assert hits >= 18

    def test_empty_range(self):
        with pytest.raises(ValueError, match="empty"):
            select_k(np.zeros((5, 1)), [])

    def test_table_formulas(self):
        X, _ = _two_blobs(60, 1)
        table = select_k(X, [1, 2, 3], "aic")
        n, d = X.shape
        for row in table.rows:
            k = row["k"]
            assert row["n_parameters"] == (k - 1) + k * d + k * d * (d + 1) // 2 == n_parameters(k, d)
            assert row["bic"] == pytest.approx(-2 * row["log_likelihood"] + row["n_parameters"] * np.log(n))
            assert row["aic"] == pytest.approx(-2 * row["log_likelihood"] + 2 * row["n_parameters"])
        assert table.chosen_k == min(table.rows, key=lambda r: r["aic"])["k"]

    def test_single_k(self):
        X, _ = _two_blobs(60, 1)
        table = select_k(X, [2, 2])
        assert len(table.rows) == 1 and table.chosen_k == 2


class TestPca:
    def test_rank_one(self):
        x = np.arange(10.0)
        res = pca_project(np.column_stack([x, 2 * x]), 1)
        assert res.explained_variance_ratio[0] == pytest.approx(1.0, abs=1e-9)

    def test_hand_example(self):
        res = pca_project(np.array([[1.0, 0], [-1, 0], [0, 0]]), 1)
        np.testing.assert_allclose(res.projection[:, 0], [1, -1, 0], atol=1e-12)

    def test_orthonormal_and_reconstruction(self):
        X = np.random.default_rng(2).normal(size=(30, 4)) @ np.diag([3, 2, 1, 0.5])
        res = pca_project(X, 4)
        np.testing.assert_allclose(res.components @ res.components.T, np.eye(4), atol=1e-9)
        np.testing.assert_allclose(res.projection @ res.components, X - X.mean(axis=0), atol=1e-8)
        assert res.explained_variance_ratio.sum() <= 1 + 1e-12
        for row in res.components:
            assert row[np.argmax(np.abs(row))] > 0

    def test_dims_out_of_range(self):
        with pytest.raises(ValueError):
            pca_project(np.zeros((5, 2)), 0)
        with pytest.raises(ValueError):
            pca_project(np.zeros((5, 2)), 3)


class TestValidity:
    def test_silhouette_well_separated(self):
        rng = np.random.default_rng(3)
        X = np.r_[rng.normal(0, 0.01, (20, 2)), rng.normal(1, 0.01, (20, 2))]
        assert silhouette(X, np.repeat([0, 1], 20)) > 0.9

    def test_silhouette_identical_points(self):
        assert silhouette(np.zeros((6, 2)), [0, 0, 0, 1, 1, 1]) == 0.0

    def test_silhouette_single_cluster(self):
        with pytest.raises(ValueError):
            silhouette(np.zeros((4, 1)), [0, 0, 0, 0])

    def test_silhouette_matches_sklearn(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(120, 3))
        lab = rng.integers(0, 4, size=120)
        lab[0] = 5  # a singleton cluster
        assert silhouette(X, lab, chunk=17) == pytest.approx(skm.silhouette_score(X, lab), abs=1e-9)

    def test_hand_examples(self):
        assert ari([0, 0, 1, 1], [0, 0, 1, 1]) == 1.0
        assert nmi([0, 0, 1, 1], [0, 0, 1, 1]) == pytest.approx(1.0, abs=1e-9)
        assert ari([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0
        assert nmi([0, 0, 1, 1], [1, 1, 0, 0]) == pytest.approx(1.0, abs=1e-9)
        assert ari([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(-0.5, abs=1e-9)
        assert nmi([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(0.0, abs=1e-9)
        assert nmi([3, 3, 3], [1, 1, 1]) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            ari([0, 1], [0, 1, 1])
        with pytest.raises(ValueError):
            nmi([0, 1], [0])

    def test_contingency(self):
        np.testing.assert_array_equal(contingency([0, 0, 1, 1], [0, 1, 0, 1]), np.ones((2, 2)))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000))
    def test_against_sklearn_and_relabeling(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 80))
        a = rng.integers(0, int(rng.integers(1, 6)), size=n)
        b = rng.integers(0, int(rng.integers(1, 6)), size=n)
        assert ari(a, b) == pytest.approx(skm.adjusted_rand_score(a, b), abs=1e-9)
        assert nmi(a, b) == pytest.approx(skm.normalized_mutual_info_score(a, b), abs=1e-9)
        relabel = rng.permutation(10)
        assert ari(relabel[a], b) == pytest.approx(ari(a, b), abs=1e-12)
        assert 0 <= nmi(a, b) <= 1 + 1e-12

    def test_aligned_f1(self):
        assert align_and_score([0, 0, 1, 1], [0, 0, 1, 1])[0] == 1.0
        assert align_and_score([0, 0, 1, 1], [1, 1, 0, 0])[0] == 1.0
        f1, mapping = align_and_score([0, 0, 1, 1], [0, 1, 1, 1])
        assert f1 == pytest.approx(0.8)
        assert mapping == {0: 0, 1: 1}

    def test_aligned_f1_many_clusters(self):
        f1, mapping = align_and_score([0, 0, 1, 1, 2, 2], [1, 1, 0, 0, 1, 0])
        assert 0 <= f1 <= 1
        assert set(mapping) == {0, 1, 2}

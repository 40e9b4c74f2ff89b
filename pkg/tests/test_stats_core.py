import itertools
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vocscreen.stats_core import (
    RankDeficientError,
    exact_u_pvalue,
    logistic_fit,
    mann_whitney_u,
    ols_fit,
    penalized_loglik,
    permutation_test,
    smoothed_pvalue,
    u_null_counts,
)


def _normal_equations(X, y):
    # independent oracle: explicit (A'A)^-1 A'y
    A = np.column_stack([np.ones(len(y)), X])
    return np.linalg.inv(A.T @ A) @ (A.T @ y)


def _gradient_ascent_logistic(x, y, ridge, step=0.5, tol=1e-10, max_iter=500_000):
    A = np.column_stack([np.ones(len(y)), x])
    w = np.zeros(A.shape[1])
    pen = np.array([0.0] + [ridge] * (A.shape[1] - 1))
    for _ in range(max_iter):
        p = 1 / (1 + np.exp(-(A @ w)))
        grad = (A.T @ (y - p) - pen * w) / len(y)
        w_new = w + step * grad
        if np.max(np.abs(w_new - w)) < tol:
            return w_new
        w = w_new
    raise RuntimeError("oracle did not converge")


def _enumerated_u_pvalue(a, b, alternative):
    pooled = np.concatenate([a, b])
    n_a = len(a)
    u_obs = sum((x > y) + 0.5 * (x == y) for x in a for y in b)
    us = []
    for idx in itertools.combinations(range(len(pooled)), n_a):
        rest = [pooled[i] for i in range(len(pooled)) if i not in idx]
        us.append(sum((pooled[i] > y) + 0.5 * (pooled[i] == y) for i in idx for y in rest))
    us = np.array(us)
    upper = np.mean(us >= u_obs)
    lower = np.mean(us <= u_obs)
    if alternative == "greater":
        return upper
    if alternative == "less":
        return lower
    return min(1.0, 2 * min(upper, lower))


class TestOls:
    def test_exact_line(self):
        fit = ols_fit(np.array([[1.0], [2.0], [3.0]]), np.array([2.0, 4.0, 6.0]))
        np.testing.assert_allclose(fit.coefficients, [0.0, 2.0], atol=1e-12)

    def test_duplicated_column_rejected(self):
        x = np.arange(10.0)
        with pytest.raises(RankDeficientError) as err:
            ols_fit(np.column_stack([x, x**2, x]), x + 1)
        assert err.value.column == 2  # 0-based, intercept not counted

    def test_too_few_rows(self):
        with pytest.raises(ValueError):
            ols_fit(np.array([[1.0], [2.0]]), np.array([1.0, 2.0]))

    def test_matches_normal_equations(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=500)
        y = 3 + 1.5 * x + rng.normal(size=500)
        fit = ols_fit(x[:, None], y)
        np.testing.assert_allclose(fit.coefficients, _normal_equations(x[:, None], y), atol=1e-8)

    def test_residuals_orthogonal(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(200, 4)) * [1, 10, 100, 0.1]
        y = X @ [1, 2, 3, 4] + rng.normal(size=200)
        fit = ols_fit(X, y)
        A = np.column_stack([np.ones(200), X])
        for j in range(A.shape[1]):
            assert abs(A[:, j] @ fit.residuals) < 1e-8 * np.linalg.norm(A[:, j]) * np.linalg.norm(y)

    def test_standard_errors_match_textbook(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(100, 2))
        y = X @ [1.0, -1.0] + rng.normal(size=100)
        fit = ols_fit(X, y)
        A = np.column_stack([np.ones(100), X])
        s2 = fit.residuals @ fit.residuals / (100 - 3)
        np.testing.assert_allclose(fit.standard_errors, np.sqrt(np.diag(s2 * np.linalg.inv(A.T @ A))), rtol=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), scale=st.floats(0.01, 100), shift=st.floats(-50, 50))
    def test_affine_reparameterization_keeps_fit(self, seed, scale, shift):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(60, 3))
        y = rng.normal(size=60)
        a = ols_fit(X, y).predict(X)
        b = ols_fit(X * scale + shift, y).predict(X * scale + shift)
        np.testing.assert_allclose(a, b, atol=1e-8)


class TestLogistic:
    def test_symmetric_data_zero_intercept(self):
        x = np.tile([-1.0, 1.0], 50)
        y = np.tile([0.0, 1.0], 50)
        fit = logistic_fit(x[:, None], y, ridge=1e-6)
        assert abs(fit.intercept) < 1e-6

    def test_single_class(self):
        with pytest.raises(ValueError, match="single class"):
            logistic_fit(np.ones((5, 1)), np.ones(5))

    def test_matches_gradient_ascent(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=300)
        y = (rng.random(300) < 1 / (1 + np.exp(-(0.5 + 1.2 * x)))).astype(float)
        fit = logistic_fit(x[:, None], y, ridge=0.1)
        oracle = _gradient_ascent_logistic(x, y, 0.1)
        np.testing.assert_allclose(fit.coefficients, oracle, atol=1e-6)

    def test_separable_unpenalized_reports_nonconvergence(self):
        x = np.array([-3.0, -2.0, -1.0, 1.0, 2.0, 3.0])
        y = np.array([0, 0, 0, 1, 1, 1.0])
        fit = logistic_fit(x[:, None], y, ridge=0.0)
        assert not fit.converged

    def test_probabilities_open_interval(self):
        x = np.linspace(-50, 50, 40)
        fit = logistic_fit(x[:, None], (x > 0).astype(float), ridge=1e-3)
        p = fit.predict_proba(x[:, None] * 10)
        assert np.all((p > 0) & (p < 1))

    def test_history_non_decreasing(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(200, 3))
        y = (X[:, 0] + rng.normal(size=200) > 0).astype(float)
        fit = logistic_fit(X, y, ridge=0.5)
        assert all(b >= a - 1e-12 for a, b in zip(fit.history, fit.history[1:]))

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), ridge=st.floats(0.0, 5.0))
    def test_beats_zero_vector(self, seed, ridge):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(40, 2))
        y = (rng.random(40) < 0.5).astype(float)
        if y.min() == y.max():
            y[0] = 1 - y[0]
        fit = logistic_fit(X, y, ridge=ridge)
        A = np.column_stack([np.ones(40), X])
        assert penalized_loglik(fit.coefficients, A, y, ridge) >= penalized_loglik(np.zeros(3), A, y, ridge) - 1e-12


class TestMannWhitney:
    def test_separated_two_sided(self):
        r = mann_whitney_u([1, 2, 3], [4, 5, 6])
        assert r.u_statistic == 0
        assert r.p_value == pytest.approx(0.1, abs=1e-15)
        assert r.method == "exact"

    def test_identical_samples(self):
        r = mann_whitney_u([1, 2, 3], [1, 2, 3])
        assert r.u_statistic == 4.5
        assert r.p_value == 1.0

    def test_one_sided(self):
        assert mann_whitney_u([3, 4], [1, 2], "greater").p_value == pytest.approx(1 / 6, abs=1e-15)

    def test_empty(self):
        with pytest.raises(ValueError):
            mann_whitney_u([], [1.0])

    def test_null_counts_total(self):
        for n_a in range(1, 9):
            for n_b in range(1, 9):
                counts = u_null_counts(n_a, n_b)
                assert sum(counts) == comb(n_a + n_b, n_a)
                assert counts == counts[::-1]

    def test_large_samples_use_normal(self):
        rng = np.random.default_rng(0)
        r = mann_whitney_u(rng.normal(size=20), rng.normal(size=9))
        assert r.method == "normal-approximation"

    def test_ties_force_normal(self):
        assert mann_whitney_u([1, 2, 2], [2, 3]).method == "normal-approximation"

    def test_normal_matches_scipy(self):
        from scipy.stats import mannwhitneyu

        rng = np.random.default_rng(5)
        a = rng.integers(0, 10, size=30)
        b = rng.integers(2, 12, size=25)
        for alt in ("two-sided", "greater", "less"):
            ours = mann_whitney_u(a, b, alt)
            ref = mannwhitneyu(a, b, alternative=alt, method="asymptotic", use_continuity=True)
            assert ours.u_statistic == ref.statistic
            assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-10)

    @settings(max_examples=60, deadline=None)
    @given(
        a=st.lists(st.floats(-100, 100), min_size=1, max_size=12),
        b=st.lists(st.floats(-100, 100), min_size=1, max_size=12),
    )
    def test_u_complement(self, a, b):
        assert mann_whitney_u(a, b).u_statistic + mann_whitney_u(b, a).u_statistic == len(a) * len(b)

    @settings(max_examples=40, deadline=None)
    @given(
        a=st.lists(st.integers(-30, 30), min_size=1, max_size=10),
        b=st.lists(st.integers(-30, 30), min_size=1, max_size=10),
        alt=st.sampled_from(["two-sided", "greater", "less"]),
    )
    def test_monotone_transform_invariance(self, a, b, alt):
        # integer grid keeps the transform strictly increasing in floating point
        f = lambda v: np.exp(np.asarray(v, dtype=float) / 3.0) * 2 + 1  # noqa: E731
        assert mann_whitney_u(a, b, alt).p_value == mann_whitney_u(f(a), f(b), alt).p_value

    def test_exact_matches_enumeration_small(self):
        rng = np.random.default_rng(11)
        for n_a, n_b in [(1, 1), (2, 3), (3, 3), (4, 2), (5, 4)]:
            pool = rng.permutation(n_a + n_b).astype(float)
            a, b = pool[:n_a], pool[n_a:]
            for alt in ("two-sided", "greater", "less"):
                assert mann_whitney_u(a, b, alt).p_value == _enumerated_u_pvalue(a, b, alt)

    def test_exact_pvalue_bounds(self):
        assert exact_u_pvalue(0, 3, 3, "less") == pytest.approx(0.05)
        assert exact_u_pvalue(9, 3, 3, "greater") == pytest.approx(0.05)


class TestPermutation:
    @staticmethod
    def _mean_diff(d):
        return d[d[:, 1] == 1, 0].mean() - d[d[:, 1] == 0, 0].mean()

    @staticmethod
    def _shuffle_labels(d, idx):
        out = d.copy()
        out[:, 1] = d[idx, 1]
        return out

    def test_separated_groups(self):
        x = np.r_[np.zeros(30), np.full(30, 10.0)] + np.random.default_rng(0).normal(size=60) * 0.1
        d = np.column_stack([x, np.r_[np.zeros(30), np.ones(30)]])
        r = permutation_test(self._mean_diff, d, 999, seed=3, permute=self._shuffle_labels)
        assert r.p_value == 1 / 1000

    def test_noise_calibration(self):
        hits = 0
        for seed in range(20):
            rng = np.random.default_rng(100 + seed)
            d = np.column_stack([rng.normal(size=40), np.r_[np.zeros(20), np.ones(20)]])
            r = permutation_test(self._mean_diff, d, 999, seed=seed, permute=self._shuffle_labels)
            hits += r.p_value > 0.05
        assert hits >= 17

    def test_deterministic_and_parallel_safe(self):
        d = np.column_stack([np.arange(20.0), np.r_[np.zeros(10), np.ones(10)]])
        a = permutation_test(self._mean_diff, d, 200, seed=5, permute=self._shuffle_labels)
        b = permutation_test(self._mean_diff, d, 200, seed=5, permute=self._shuffle_labels)
        c = permutation_test(self._mean_diff, d, 200, seed=5, permute=self._shuffle_labels, n_jobs=4)
        np.testing.assert_array_equal(a.permuted, b.permuted)
        np.testing.assert_array_equal(a.permuted, c.permuted)
        assert a.p_value == c.p_value

    def test_zero_permutations(self):
        with pytest.raises(ValueError):
            permutation_test(np.mean, np.arange(5.0), 0)

    @given(obs=st.floats(-5, 5), perm=st.lists(st.floats(-5, 5), min_size=1, max_size=50))
    def test_smoothed_pvalue_never_zero(self, obs, perm):
        p = smoothed_pvalue(obs, np.array(perm))
        assert 0 < p <= 1
        assert p == (1 + sum(abs(v) >= abs(obs) for v in perm)) / (len(perm) + 1)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vocscreen.attribution import (
    Attribution,
    background_sample,
    shapley_linear,
    shapley_sample,
    summarize,
)
from vocscreen.stats_core import logistic_fit, ols_fit


def _linear(w, b0=0.0):
    w = np.asarray(w, float)
    return lambda X: b0 + np.asarray(X) @ w


def _brute_force_shapley(f, x, background):
    """Exact interventional Shapley values by enumerating feature subsets."""
    from itertools import combinations
    from math import factorial

    d = len(x)

    def value(S):
        Z = background.copy()
        Z[:, list(S)] = x[list(S)]
        return f(Z).mean()

    phi = np.zeros(d)
    for j in range(d):
        rest = [k for k in range(d) if k != j]
        for r in range(d):
            for S in combinations(rest, r):
                weight = factorial(r) * factorial(d - r - 1) / factorial(d)
                phi[j] += weight * (value(S + (j,)) - value(S))
    return phi


class TestLinear:
    def test_closed_form(self):
        att = shapley_linear((0.0, [2.0]), [3.0], [1.0])
        np.testing.assert_array_equal(att.phi, [4.0])

    def test_at_means(self):
        att = shapley_linear((1.0, [2.0, -1.0, 0.5]), [1, 2, 3], [1, 2, 3])
        np.testing.assert_array_equal(att.phi, 0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            shapley_linear((0.0, [1.0, 2.0]), [1.0], [0.0])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 8))
    def test_efficiency(self, seed, d):
        rng = np.random.default_rng(seed)
        att = shapley_linear((rng.normal() * 10, rng.normal(size=d) * 10), rng.normal(size=d) * 5, rng.normal(size=d))
        assert abs(att.efficiency_gap) < 1e-8

    def test_fitted_models(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(100, 3))
        y = X @ [1, 2, 3] + rng.normal(size=100)
        fit = ols_fit(X, y)
        att = shapley_linear(fit, X[0], X.mean(axis=0))
        assert att.prediction == pytest.approx(fit.predict(X[:1])[0])
        lab = (y > 0).astype(float)
        lfit = logistic_fit(X, lab, 1.0)
        latt = shapley_linear(lfit, X[0], X.mean(axis=0))
        p = lfit.predict_proba(X[:1])[0]
        assert latt.prediction == pytest.approx(np.log(p / (1 - p)))


class TestSample:
    def test_matches_exact_linear(self):
        rng = np.random.default_rng(2)
        bg = rng.normal(size=(200, 4)) * [1, 2, 0.5, 3]
        w = np.array([5.4, -2.8, 23.086, 67.109])
        x = np.array([1.5, -1.0, 2.0, 0.3])
        exact = shapley_linear((0.0, w), x, bg.mean(axis=0))
        sampled = shapley_sample(_linear(w), x, bg, n_permutations=2000, seed=0)
        assert np.all(np.abs(sampled.phi - exact.phi) <= 3 * sampled.standard_errors)
        assert abs(sampled.efficiency_gap) <= 3 * sampled.sum_standard_error

    def test_matches_brute_force_nonlinear(self):
        rng = np.random.default_rng(3)
        bg = rng.normal(size=(30, 3))
        f = lambda X: np.tanh(X[:, 0] * X[:, 1]) + X[:, 2] ** 2  # noqa: E731
        x = np.array([1.0, -0.5, 2.0])
        truth = _brute_force_shapley(f, x, bg)
        est = shapley_sample(f, x, bg, n_permutations=4000, seed=1)
        assert np.all(np.abs(est.phi - truth) <= 3.5 * est.standard_errors + 1e-12)

    def test_constant_model(self):
        bg = np.random.default_rng(0).normal(size=(10, 3))
        att = shapley_sample(lambda X: np.full(len(X), 7.0), [1, 2, 3], bg, 100)
        np.testing.assert_array_equal(att.phi, 0)

    def test_symmetry(self):
        rng = np.random.default_rng(4)
        c = rng.normal(size=100)
        bg = np.column_stack([c, c, rng.normal(size=100)])
        att = shapley_sample(_linear([1.5, 1.5, 1.0]), [2.0, 2.0, 0.0], bg, 2000, seed=2)
        diff = abs(att.phi[0] - att.phi[1])
        assert diff <= 3 * np.hypot(att.standard_errors[0], att.standard_errors[1])

    def test_dummy(self):
        rng = np.random.default_rng(5)
        bg = rng.normal(size=(50, 3))
        att = shapley_sample(lambda X: X[:, 0] ** 2 + X[:, 1], [1.0, 2.0, 9.0], bg, 500, seed=3)
        assert att.phi[2] == 0.0

    def test_standard_error_shrinks(self):
        rng = np.random.default_rng(6)
        bg = rng.normal(size=(200, 3))
        f = _linear([1.0, 2.0, 3.0])
        small = shapley_sample(f, [1, 1, 1], bg, 500, seed=4)
        big = shapley_sample(f, [1, 1, 1], bg, 2000, seed=4)
        ratio = small.standard_errors / big.standard_errors
        np.testing.assert_allclose(ratio, 2.0, rtol=0.2)

    def test_deterministic_and_chunk_free(self):
        bg = np.random.default_rng(7).normal(size=(40, 3))
        f = lambda X: np.sin(X).sum(axis=1)  # noqa: E731
        a = shapley_sample(f, [1, 2, 3], bg, 300, seed=5)
        b = shapley_sample(f, [1, 2, 3], bg, 300, seed=5, chunk=7)
        np.testing.assert_array_equal(a.phi, b.phi)

    def test_empty_background(self):
        with pytest.raises(ValueError, match="background"):
            shapley_sample(_linear([1.0]), [1.0], np.empty((0, 1)), 10)

    def test_zero_permutations(self):
        with pytest.raises(ValueError):
            shapley_sample(_linear([1.0]), [1.0], np.zeros((3, 1)), 0)


class TestSummarize:
    def _att(self, phi, subject="s"):
        phi = np.asarray(phi, float)
        names = tuple(f"f{j}" for j in range(len(phi)))
        return Attribution(phi, 0.0, phi.sum(), names, np.zeros(len(phi)), subject)

    def test_single(self):
        s = summarize([self._att([0.5, -3.0, 1.0])])
        assert s.features == ("f1", "f2", "f0")
        np.testing.assert_array_equal(s.mean_abs_phi, [3.0, 1.0, 0.5])

    def test_zero_ranks_last(self):
        s = summarize([self._att([0.1, 0.0, -0.2]), self._att([-0.3, 0.0, 0.1])])
        assert s.features[-1] == "f1"
        assert len(s.long_form) == 6

    def test_inconsistent(self):
        a = self._att([1.0, 2.0])
        b = Attribution(np.ones(2), 0.0, 2.0, ("u", "v"), np.zeros(2))
        with pytest.raises(ValueError):
            summarize([a, b])

    def test_empty(self):
        with pytest.raises(ValueError):
            summarize([])


def test_background_cap():
    X = np.arange(1000.0).reshape(500, 2)
    bg = background_sample(X, 200, seed=1)
    assert bg.shape == (200, 2)
    np.testing.assert_array_equal(bg, background_sample(X, 200, seed=1))
    assert background_sample(X[:50]) is not None and background_sample(X[:50]).shape == (50, 2)

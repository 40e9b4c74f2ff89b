"""Estimators and tests shared by the causal, marker and risk modules."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import stats as _stats
from scipy.special import expit

ALTERNATIVES = ("two-sided", "greater", "less")
EXACT_CAP = 8


class RankDeficientError(ValueError):
    def __init__(self, column: int, message: str | None = None):
        self.column = column
        super().__init__(message or f"design matrix is rank deficient at column {column}")


def _design(X: np.ndarray, intercept: bool) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if intercept:
        X = np.column_stack([np.ones(X.shape[0]), X])
    return X


# --------------------------------------------------------------------------- OLS


@dataclass(frozen=True)
class OlsFit:
    coefficients: np.ndarray
    residuals: np.ndarray
    residual_variance: float
    standard_errors: np.ndarray
    intercept: bool

    def predict(self, X: np.ndarray) -> np.ndarray:
        return _design(X, self.intercept) @ self.coefficients

    @property
    def slopes(self) -> np.ndarray:
        return self.coefficients[1:] if self.intercept else self.coefficients


def ols_fit(X: np.ndarray, y: np.ndarray, intercept: bool = True, rtol: float = 1e-10) -> OlsFit:
    """Least squares through a Householder QR factorization.

    A column whose QR diagonal is negligible relative to its own norm lies in
    the span of the columns before it; its index (in the caller's ``X``, not
    counting the intercept) is reported.
    """
    A = _design(X, intercept)
    y = np.asarray(y, dtype=float)
    n, p = A.shape
    if y.shape != (n,):
        raise ValueError(f"X has {n} rows but y has {y.shape[0]} entries")
    if n <= p:
        raise ValueError(f"too few rows: {n} rows for {p} coefficients")

    Q, R = np.linalg.qr(A, mode="reduced")
    diag = np.abs(np.diag(R))
    norms = np.linalg.norm(A, axis=0)
    for j in range(p):
        if norms[j] == 0 or diag[j] <= rtol * norms[j]:
            col = j - 1 if intercept else j
            raise RankDeficientError(col)

    coef = np.linalg.solve(R, Q.T @ y) if p else np.empty(0)
    resid = y - A @ coef
    sigma2 = float(resid @ resid) / (n - p)
    Rinv = np.linalg.solve(R, np.eye(p))
    se = np.sqrt(sigma2 * np.sum(Rinv**2, axis=1))
    return OlsFit(coef, resid, sigma2, se, intercept)


# ---------------------------------------------------------------- logistic (IRLS)


@dataclass(frozen=True)
class LogisticFit:
    coefficients: np.ndarray
    ridge: float
    converged: bool
    iterations: int
    history: tuple[float, ...] = field(default=(), repr=False)

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return _design(X, True) @ self.coefficients

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        eps = np.finfo(float).eps
        return np.clip(expit(self.decision_function(X)), eps, 1 - eps)

    @property
    def intercept(self) -> float:
        return float(self.coefficients[0])

    @property
    def slopes(self) -> np.ndarray:
        return self.coefficients[1:]


def penalized_loglik(coef: np.ndarray, A: np.ndarray, y: np.ndarray, ridge: float) -> float:
    z = A @ coef
    # y*z - log(1 + e^z), evaluated without overflow
    ll = float(np.sum(y * z - np.logaddexp(0.0, z)))
    return ll - 0.5 * ridge * float(coef[1:] @ coef[1:])


def logistic_fit(
    X: np.ndarray,
    y: np.ndarray,
    ridge: float = 0.0,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> LogisticFit:
    """Ridge-penalized logistic regression by Newton steps with step halving.

    The intercept is not penalized.  A step that would lower the penalized
    log-likelihood is halved until it does not (up to 30 times).  On separable
    data with ``ridge == 0`` the coefficients drift off to infinity; the fit is
    then returned with ``converged=False``.
    """
    A = _design(X, True)
    y = np.asarray(y, dtype=float)
    if ridge < 0:
        raise ValueError("ridge penalty must be non-negative")
    classes = np.unique(y)
    if not np.isin(classes, (0.0, 1.0)).all():
        raise ValueError("labels must be 0/1")
    if len(classes) < 2:
        raise ValueError("single class in y")

    n, p = A.shape
    penalty = np.full(p, ridge)
    penalty[0] = 0.0
    coef = np.zeros(p)
    coef[0] = np.log(y.mean() / (1 - y.mean()))
    ll = penalized_loglik(coef, A, y, ridge)
    history = [ll]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = expit(A @ coef)
        w = mu * (1 - mu)
        grad = A.T @ (y - mu) - penalty * coef
        H = (A * w[:, None]).T @ A + np.diag(penalty)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        for _ in range(30):
            cand = coef + t * step
            cand_ll = penalized_loglik(cand, A, y, ridge)
            if cand_ll >= ll:
                break
            t *= 0.5
        else:
            # no ascent possible along the Newton direction: at the optimum
            # to machine precision
            converged = True
            break
        delta = np.max(np.abs(cand - coef))
        coef, ll = cand, cand_ll
        history.append(ll)
        if delta < tol:
            converged = True
            break
    return LogisticFit(coef, ridge, converged, it, tuple(history))


# ------------------------------------------------------------------ Mann-Whitney


@dataclass(frozen=True)
class UTestResult:
    u_statistic: float
    p_value: float
    alternative: str
    method: str
    n_a: int
    n_b: int

    def to_dict(self) -> dict:
        return {
            "u_statistic": self.u_statistic,
            "p_value": self.p_value,
            "alternative": self.alternative,
            "method": self.method,
            "n_a": self.n_a,
            "n_b": self.n_b,
        }


@lru_cache(maxsize=None)
def u_null_counts(n_a: int, n_b: int) -> tuple[int, ...]:
    """Number of the C(n_a+n_b, n_a) rank assignments giving each U in 0..n_a*n_b.

    Counts come from the recurrence on whether the largest observation belongs
    to sample a (contributing n_b to U) or to sample b.
    """
    if n_a == 0 or n_b == 0:
        return (1,)
    with_a = u_null_counts(n_a - 1, n_b)
    without = u_null_counts(n_a, n_b - 1)
    out = [0] * (n_a * n_b + 1)
    for u, c in enumerate(without):
        out[u] += c
    for u, c in enumerate(with_a):
        out[u + n_b] += c
    return tuple(out)


def exact_u_pvalue(u: float, n_a: int, n_b: int, alternative: str) -> float:
    counts = u_null_counts(n_a, n_b)
    total = sum(counts)
    k = int(round(u))
    upper = sum(counts[k:])  # P(U >= u)
    lower = sum(counts[: k + 1])  # P(U <= u)
    if alternative == "greater":
        return upper / total
    if alternative == "less":
        return lower / total
    return min(1.0, 2 * min(upper, lower) / total)


def mann_whitney_u(a: Sequence[float], b: Sequence[float], alternative: str = "two-sided") -> UTestResult:
    """Mann-Whitney U test of sample ``a`` against sample ``b``.

    ``u_statistic`` is U for ``a``: the number of pairs with ``a > b`` plus half
    the ties.  ``alternative="greater"`` tests whether ``a`` tends to exceed
    ``b``.  Exact p-values come from the full null distribution when both
    samples have at most 8 observations and there are no ties; otherwise a
    normal approximation with tie and continuity corrections is used.
    """
    if alternative not in ALTERNATIVES:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n_a, n_b = len(a), len(b)
    if n_a == 0 or n_b == 0:
        raise ValueError("both samples must be non-empty")
    pooled = np.concatenate([a, b])
    ranks = _stats.rankdata(pooled)
    u = float(ranks[:n_a].sum() - n_a * (n_a + 1) / 2)
    ties = len(np.unique(pooled)) < len(pooled)

    if n_a <= EXACT_CAP and n_b <= EXACT_CAP and not ties:
        p = exact_u_pvalue(u, n_a, n_b, alternative)
        return UTestResult(u, p, alternative, "exact", n_a, n_b)

    n = n_a + n_b
    _, tcounts = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(tcounts**3 - tcounts)) / (n * (n - 1))
    var = n_a * n_b / 12.0 * ((n + 1) - tie_term)
    mean = n_a * n_b / 2.0
    if var <= 0:
        p = 1.0
    elif alternative == "greater":
        p = float(_stats.norm.sf((u - mean - 0.5) / np.sqrt(var)))
    elif alternative == "less":
        p = float(_stats.norm.cdf((u - mean + 0.5) / np.sqrt(var)))
    else:
        z = max(abs(u - mean) - 0.5, 0.0) / np.sqrt(var)
        p = min(1.0, float(2 * _stats.norm.sf(z)))
    return UTestResult(u, p, alternative, "normal-approximation", n_a, n_b)


# ------------------------------------------------------------------ permutations


@dataclass(frozen=True)
class PermutationResult:
    observed: float
    permuted: np.ndarray
    p_value: float
    seed: int

    @property
    def k(self) -> int:
        return len(self.permuted)


def permutation_rng(seed: int, index: int) -> np.random.Generator:
    """Generator for permutation ``index``; independent of evaluation order."""
    return np.random.default_rng([int(seed), int(index)])


def permutation_indices(n: int, seed: int, index: int) -> np.ndarray:
    # Generator.permutation is a Fisher-Yates shuffle
    return permutation_rng(seed, index).permutation(n)


def smoothed_pvalue(observed: float, permuted: np.ndarray) -> float:
    permuted = np.asarray(permuted, dtype=float)
    hits = int(np.sum(np.abs(permuted) >= abs(observed)))
    return (1 + hits) / (len(permuted) + 1)


def permutation_test(
    statistic: Callable[[np.ndarray], float],
    data: np.ndarray,
    k: int = 1000,
    seed: int = 0,
    permute: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
    n_jobs: int = 1,
) -> PermutationResult:
    """Two-sided permutation test on ``|statistic|``.

    By default the rows of ``data`` are permuted; pass ``permute(data, idx)``
    to shuffle only part of it (e.g. a label column).  Permutation ``i`` is
    drawn from an RNG keyed on ``(seed, i)``, so running with ``n_jobs > 1``
    gives the same result as running sequentially.
    """
    if k < 1:
        raise ValueError("need at least one permutation")
    data = np.asarray(data)
    n = data.shape[0]
    permute = permute or (lambda d, idx: d[idx])
    observed = float(statistic(data))

    def one(i: int) -> float:
        return float(statistic(permute(data, permutation_indices(n, seed, i))))

    if n_jobs == 1:
        permuted = np.array([one(i) for i in range(k)])
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            permuted = np.array(list(pool.map(one, range(k))))
    return PermutationResult(observed, permuted, smoothed_pvalue(observed, permuted), int(seed))

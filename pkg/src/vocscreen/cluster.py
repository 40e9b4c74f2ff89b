"""Gaussian mixtures by EM, component-count selection, PCA and cluster validity."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

REG_COVAR = 1e-6


class EMError(RuntimeError):
    pass


@dataclass(frozen=True)
class GmmFit:
    k: int
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    log_likelihood: float
    responsibilities: np.ndarray = field(repr=False)
    iterations: int
    converged: bool
    seed: int
    history: tuple[float, ...] = field(repr=False, default=())

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.responsibilities, axis=1)

    @property
    def n_parameters(self) -> int:
        return n_parameters(self.k, self.means.shape[1])

    def predict(self, X: np.ndarray) -> np.ndarray:
        log_r, _ = _e_step(np.asarray(X, dtype=float), self.weights, self.means, self.covariances)
        return np.argmax(log_r, axis=1)


def n_parameters(k: int, d: int) -> int:
    return (k - 1) + k * d + k * d * (d + 1) // 2


def _log_gauss(X: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    L = np.linalg.cholesky(cov)
    Linv = solve_triangular(L, np.eye(len(mean)), lower=True, check_finite=False)
    sol = (X - mean) @ Linv.T
    maha = np.einsum("ij,ij->i", sol, sol)
    logdet = 2 * np.sum(np.log(np.diag(L)))
    return -0.5 * (X.shape[1] * np.log(2 * np.pi) + logdet + maha)


def _e_step(X, weights, means, covs):
    with np.errstate(divide="ignore"):
        logw = np.log(weights)
    log_p = np.column_stack([_log_gauss(X, means[j], covs[j]) + logw[j] for j in range(len(weights))])
    top = log_p.max(axis=1, keepdims=True)
    norm = (top + np.log(np.exp(log_p - top).sum(axis=1, keepdims=True)))[:, 0]
    return log_p - norm[:, None], float(norm.sum())


def _m_step(X, resp, reg):
    n, d = X.shape
    nk = resp.sum(axis=0)
    means = (resp.T @ X) / nk[:, None]
    covs = np.empty((len(nk), d, d))
    for j in range(len(nk)):
        diff = X - means[j]
        covs[j] = (diff * resp[:, j, None]).T @ diff / nk[j]
        covs[j] = 0.5 * (covs[j] + covs[j].T) + reg * np.eye(d)
    return nk / n, means, covs


def kmeans_plus_plus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers.append(X[idx])
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return np.array(centers)


def _hard_resp(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    dist = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    resp = np.zeros((X.shape[0], len(centers)))
    resp[np.arange(X.shape[0]), np.argmin(dist, axis=1)] = 1.0
    return resp


def _em_run(X, k, rng, tol, max_iter, reg):
    n, d = X.shape
    resp = _hard_resp(X, kmeans_plus_plus(X, k, rng))
    reseeded = False
    history = []
    converged = False
    it = 0
    while True:
        if (resp.sum(axis=0) < 1e-10).any():
            if reseeded:
                raise EMError(f"component collapsed twice with k={k}")
            reseeded = True
            empty = np.nonzero(resp.sum(axis=0) < 1e-10)[0]
            resp = resp.copy()
            for j in empty:
                i = rng.integers(n)
                resp[i, :] = 0.0
                resp[i, j] = 1.0
        weights, means, covs = _m_step(X, resp, reg)
        try:
            log_resp, ll = _e_step(X, weights, means, covs)
        except np.linalg.LinAlgError as exc:
            raise EMError(f"covariance not positive definite: {exc}") from None
        if history:
            prev = history[-1]
            if ll < prev - 1e-9 * max(1.0, abs(prev)):
                raise AssertionError(f"EM log-likelihood decreased: {prev!r} -> {ll!r}")
        history.append(ll)
        resp = np.exp(log_resp)
        it += 1
        if len(history) > 1 and history[-1] - history[-2] < tol:
            converged = True
            break
        if it >= max_iter:
            break
    return weights, means, covs, ll, resp, it, converged, tuple(history)


def fit_gmm(
    X: np.ndarray,
    k: int,
    seed: int = 0,
    restarts: int = 3,
    tol: float = 1e-6,
    max_iter: int = 500,
    reg: float = REG_COVAR,
) -> GmmFit:
    """Full-covariance Gaussian mixture fitted by EM.

    Each restart is seeded by k-means++ from an RNG keyed on ``(seed, restart)``;
    the restart with the highest final log-likelihood wins (earliest on ties).
    A decrease of the log-likelihood between iterations raises AssertionError.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    if d < 1:
        raise ValueError("need at least one feature")
    if k < 1 or k >= n:
        raise ValueError(f"k must satisfy 1 <= k < n (k={k}, n={n})")
    if not tol > 0:
        raise ValueError("tol must be positive")
    best = None
    for r in range(max(1, restarts)):
        rng = np.random.default_rng([int(seed), int(k), r])
        run = _em_run(X, k, rng, tol, max_iter, reg)
        if best is None or run[3] > best[3]:
            best = run
    weights, means, covs, ll, resp, it, conv, hist = best
    return GmmFit(k, weights, means, covs, ll, resp, it, conv, int(seed), hist)


@dataclass(frozen=True)
class SelectionTable:
    rows: tuple[dict, ...]
    chosen_k: int
    criterion: str
    fits: dict = field(repr=False, default_factory=dict)


def select_k(
    X: np.ndarray,
    k_range: Sequence[int],
    criterion: str = "bic",
    seed: int = 0,
    restarts: int = 3,
) -> SelectionTable:
    """Fit each k and keep the smallest criterion value (smaller k on ties)."""
    if criterion not in ("bic", "aic"):
        raise ValueError("criterion must be 'bic' or 'aic'")
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise ValueError("empty k range")
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    rows, fits = [], {}
    for k in ks:
        fit = fit_gmm(X, k, seed=seed, restarts=restarts)
        p = n_parameters(k, d)
        rows.append(
            {
                "k": k,
                "bic": -2 * fit.log_likelihood + p * np.log(n),
                "aic": -2 * fit.log_likelihood + 2 * p,
                "log_likelihood": fit.log_likelihood,
                "n_parameters": p,
            }
        )
        fits[k] = fit
    chosen = min(rows, key=lambda r: (r[criterion], r["k"]))["k"]
    return SelectionTable(tuple(rows), chosen, criterion, fits)


# ------------------------------------------------------------------- PCA


@dataclass(frozen=True)
class PcaResult:
    projection: np.ndarray
    explained_variance_ratio: np.ndarray
    components: np.ndarray  # (dims, d), rows orthonormal
    mean: np.ndarray


def pca_project(X: np.ndarray, dims: int) -> PcaResult:
    """Project centered data onto its leading principal axes.

    Each axis is signed so that its largest-magnitude loading is positive.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if not 1 <= dims <= min(n - 1, d):
        raise ValueError(f"dims must be in [1, {min(n - 1, d)}]")
    mean = X.mean(axis=0)
    Xc = X - mean
    _, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    for i in range(Vt.shape[0]):
        j = np.argmax(np.abs(Vt[i]))
        if Vt[i, j] < 0:
            Vt[i] = -Vt[i]
    var = s**2
    total = var.sum()
    ratio = var / total if total > 0 else np.zeros_like(var)
    comps = Vt[:dims]
    return PcaResult(Xc @ comps.T, ratio[:dims], comps, mean)


# ------------------------------------------------------------------- validity


def silhouette(X: np.ndarray, labels: Sequence[int], chunk: int = 1024) -> float:
    """Mean silhouette with Euclidean distance; singleton clusters score 0."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    _, lab = np.unique(np.asarray(labels), return_inverse=True)
    k = lab.max() + 1
    if k < 2:
        raise ValueError("silhouette needs at least two clusters")
    n = len(lab)
    sizes = np.bincount(lab, minlength=k)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), lab] = 1.0
    sq = np.sum(X**2, axis=1)
    scores = np.empty(n)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        d2 = sq[start:stop, None] + sq[None, :] - 2 * X[start:stop] @ X.T
        dist = np.sqrt(np.maximum(d2, 0.0))
        dist[np.arange(stop - start), np.arange(start, stop)] = 0.0
        sums = dist @ onehot
        own = lab[start:stop]
        own_size = sizes[own]
        a = sums[np.arange(stop - start), own] / np.maximum(own_size - 1, 1)
        other = sums / sizes
        other[np.arange(stop - start), own] = np.inf
        b = other.min(axis=1)
        denom = np.maximum(a, b)
        with np.errstate(invalid="ignore", divide="ignore"):
            s = np.where(denom > 0, (b - a) / denom, 0.0)
        s[own_size == 1] = 0.0
        scores[start:stop] = s
    return float(scores.mean())


def contingency(a: Sequence, b: Sequence) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("label arrays differ in length")
    if len(a) < 2:
        raise ValueError("need at least two labels")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    return table


def _comb2(x):
    x = np.asarray(x, dtype=float)
    return x * (x - 1) / 2


def ari(labels_a: Sequence, labels_b: Sequence) -> float:
    table = contingency(labels_a, labels_b)
    n = table.sum()
    sum_cells = _comb2(table).sum()
    sum_a = _comb2(table.sum(axis=1)).sum()
    sum_b = _comb2(table.sum(axis=0)).sum()
    expected = sum_a * sum_b / _comb2(n)
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def nmi(labels_a: Sequence, labels_b: Sequence) -> float:
    """Mutual information over the arithmetic mean of the two entropies."""
    table = contingency(labels_a, labels_b).astype(float)
    n = table.sum()
    ha, hb = _entropy(table.sum(axis=1)), _entropy(table.sum(axis=0))
    if ha == 0 and hb == 0:
        return 1.0
    pij = table / n
    pa = pij.sum(axis=1, keepdims=True)
    pb = pij.sum(axis=0, keepdims=True)
    nz = pij > 0
    mi = float(np.sum(pij[nz] * np.log(pij[nz] / (pa @ pb)[nz])))
    denom = 0.5 * (ha + hb)
    return float(min(1.0, max(0.0, mi / denom))) if denom > 0 else 0.0


def _f1(pred: np.ndarray, truth: np.ndarray) -> float:
    tp = np.sum((pred == 1) & (truth == 1))
    fp = np.sum((pred == 1) & (truth == 0))
    fn = np.sum((pred == 0) & (truth == 1))
    return float(2 * tp / (2 * tp + fp + fn)) if tp + fp + fn else 1.0


def align_and_score(clusters: Sequence, truth: Sequence[int]) -> tuple[float, dict]:
    """F1 for the positive class after mapping clusters onto true classes.

    With two clusters both label permutations are tried; with more, each
    cluster takes its majority class.  Returns ``(f1, mapping)``.
    """
    clusters = np.asarray(clusters)
    truth = np.asarray(truth)
    if truth.size == 0 or clusters.shape != truth.shape:
        raise ValueError("cluster and true labels must be non-empty and equally long")
    if not np.isin(truth, (0, 1)).all():
        raise ValueError("true labels must be binary")
    ids = list(np.unique(clusters))
    if len(ids) <= 2:
        best = None
        for assignment in itertools.product((0, 1), repeat=len(ids)):
            if len(ids) == 2 and assignment[0] == assignment[1]:
                continue
            mapping = dict(zip(ids, assignment))
            pred = np.array([mapping[c] for c in clusters])
            score = _f1(pred, truth)
            if best is None or score > best[0]:
                best = (score, mapping)
        f1, mapping = best
    else:
        mapping = {c: int(truth[clusters == c].mean() >= 0.5) for c in ids}
        f1 = _f1(np.array([mapping[c] for c in clusters]), truth)
    return f1, {(c.item() if hasattr(c, "item") else c): v for c, v in mapping.items()}

"""Shapley-value attribution of model predictions to input features.

Linear scores have a closed form, ``phi_j = w_j * (x_j - mean_j)``.  Anything
else goes through permutation sampling: each sample draws a feature ordering
and a background row, then walks the ordering swapping background values for
the subject's values, crediting each feature with the change in prediction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .risk import FittedModel
from .stats_core import LogisticFit, OlsFit

BACKGROUND_CAP = 200


@dataclass(frozen=True)
class Attribution:
    phi: np.ndarray
    base_value: float
    prediction: float
    feature_names: tuple[str, ...]
    values: np.ndarray
    subject: str = ""
    standard_errors: np.ndarray | None = None
    sum_standard_error: float = 0.0

    @property
    def efficiency_gap(self) -> float:
        return float(self.base_value + self.phi.sum() - self.prediction)


def linear_parts(model) -> tuple[float, np.ndarray]:
    """``(intercept, slopes)`` of a linear score model on raw feature units."""
    if isinstance(model, FittedModel):
        return model.linear_score()
    if isinstance(model, (OlsFit, LogisticFit)):
        if isinstance(model, OlsFit) and not model.intercept:
            return 0.0, np.asarray(model.coefficients, dtype=float)
        return float(model.coefficients[0]), np.asarray(model.coefficients[1:], dtype=float)
    intercept, coef = model
    return float(intercept), np.asarray(coef, dtype=float)


def shapley_linear(
    model,
    x: Sequence[float],
    background_means: Sequence[float],
    feature_names: Sequence[str] | None = None,
    subject: str = "",
) -> Attribution:
    """Exact attribution of a linear score (the logit, for logistic models)."""
    intercept, w = linear_parts(model)
    x = np.asarray(x, dtype=float)
    mu = np.asarray(background_means, dtype=float)
    if not (len(w) == len(x) == len(mu)):
        raise ValueError(f"dimension mismatch: {len(w)} coefficients, {len(x)} values, {len(mu)} means")
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{j}" for j in range(len(x)))
    phi = w * (x - mu)
    base = intercept + float(w @ mu)
    return Attribution(phi, base, intercept + float(w @ x), names, x, subject, np.zeros(len(x)), 0.0)


def background_sample(X: np.ndarray, cap: int = BACKGROUND_CAP, seed: int = 0) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[0] <= cap:
        return X
    idx = np.sort(np.random.default_rng(seed).choice(X.shape[0], size=cap, replace=False))
    return X[idx]


def shapley_sample(
    predict: Callable[[np.ndarray], np.ndarray],
    x: Sequence[float],
    background: np.ndarray,
    n_permutations: int = 1000,
    seed: int = 0,
    feature_names: Sequence[str] | None = None,
    subject: str = "",
    chunk: int = 256,
) -> Attribution:
    """Monte-Carlo Shapley values for an arbitrary batch predictor.

    Sample ``s`` uses an ordering and background row drawn from an RNG keyed on
    ``(seed, s)``, so chunking does not change the result.  Standard errors are
    the sample sd of the per-sample contributions over ``sqrt(n_permutations)``.
    """
    if n_permutations < 1:
        raise ValueError("n_permutations must be >= 1")
    background = np.asarray(background, dtype=float)
    if background.ndim != 2 or background.shape[0] == 0:
        raise ValueError("background must be a non-empty 2-D array")
    x = np.asarray(x, dtype=float)
    d = len(x)
    if background.shape[1] != d:
        raise ValueError("background and x disagree on feature count")
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{j}" for j in range(d))

    contrib = np.empty((n_permutations, d))
    steps = np.arange(d + 1)
    for start in range(0, n_permutations, chunk):
        stop = min(start + chunk, n_permutations)
        batch = []
        orders = []
        for s in range(start, stop):
            rng = np.random.default_rng([int(seed), s])
            order = rng.permutation(d)
            z = background[rng.integers(background.shape[0])]
            # row r: features order[:r] taken from x, the rest from z
            take_x = np.zeros((d + 1, d), dtype=bool)
            take_x[steps[:, None] > np.argsort(order)[None, :]] = True
            batch.append(np.where(take_x, x, z))
            orders.append(order)
        preds = np.asarray(predict(np.concatenate(batch)), dtype=float).reshape(stop - start, d + 1)
        deltas = np.diff(preds, axis=1)
        for i, order in enumerate(orders):
            contrib[start + i, order] = deltas[i]

    phi = contrib.mean(axis=0)
    ddof = 1 if n_permutations > 1 else 0
    se = contrib.std(axis=0, ddof=ddof) / np.sqrt(n_permutations)
    sum_se = float(contrib.sum(axis=1).std(ddof=ddof) / np.sqrt(n_permutations))
    base = float(np.mean(predict(background)))
    pred = float(np.asarray(predict(x[None, :]), dtype=float)[0])
    return Attribution(phi, base, pred, names, x, subject, se, sum_se)


@dataclass(frozen=True)
class AttributionSummary:
    features: tuple[str, ...]
    mean_abs_phi: np.ndarray
    long_form: tuple[tuple[str, str, float, float], ...]


def summarize(attributions: Sequence[Attribution]) -> AttributionSummary:
    """Features ordered by mean ``|phi|`` (descending, ties by name), plus
    ``(subject, feature, value, phi)`` rows for a beeswarm-style plot."""
    if not attributions:
        raise ValueError("no attributions to summarize")
    names = attributions[0].feature_names
    for a in attributions:
        if a.feature_names != names:
            raise ValueError("attributions use different feature sets")
    mean_abs = np.mean([np.abs(a.phi) for a in attributions], axis=0)
    order = sorted(range(len(names)), key=lambda j: (-mean_abs[j], names[j]))
    rows = tuple(
        (a.subject, names[j], float(a.values[j]), float(a.phi[j])) for a in attributions for j in range(len(names))
    )
    return AttributionSummary(tuple(names[j] for j in order), mean_abs[order], rows)

"""Diabetes risk models, cross-validated metrics, risk ranking and gray zone."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .data_model import AnalysisView
from .forest import Forest, fit_forest
from .stats_core import LogisticFit, logistic_fit

BLOOD_MARKERS = ("glucose", "ketone", "ketones", "blood_glucose", "blood_ketone", "hba1c")


class LeakageError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "logistic"
    ridge: float = 1.0
    n_trees: int = 100
    max_depth: int = 3
    min_leaf: int = 1
    max_features: str | int | None = "sqrt"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("logistic", "forest"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.n_trees < 1 or self.max_depth < 1:
            raise ValueError("forest needs n_trees >= 1 and max_depth >= 1")


@dataclass(frozen=True)
class FittedModel:
    spec: ModelSpec
    feature_names: tuple[str, ...]
    center: np.ndarray
    scale: np.ndarray
    logistic: LogisticFit | None = None
    forest: Forest | None = None

    def _z(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != len(self.feature_names):
            raise ValueError(f"expected {len(self.feature_names)} features, got {X.shape[1]}")
        return (X - self.center) / self.scale

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        Z = self._z(X)
        if self.logistic is not None:
            return self.logistic.predict_proba(Z)
        return self.forest.predict_proba(Z)

    def linear_score(self) -> tuple[float, np.ndarray]:
        """Intercept and slopes of the logit on raw feature units (logistic only)."""
        if self.logistic is None:
            raise TypeError("forest models have no linear score")
        w = self.logistic.slopes / self.scale
        return float(self.logistic.intercept - w @ self.center), w

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        b0, w = self.linear_score()
        return b0 + np.asarray(X, dtype=float) @ w


def check_leakage(feature_names: Sequence[str], outcome: str | None = None) -> None:
    banned = {b.lower() for b in BLOOD_MARKERS}
    if outcome:
        banned.add(outcome.lower())
    for name in feature_names:
        base = name.split("=")[0].lower()
        if base in banned:
            raise LeakageError(f"feature {name!r} is a blood marker / outcome column; it must not be a predictor")


def fit_arrays(X: np.ndarray, y: np.ndarray, spec: ModelSpec, names: Sequence[str]) -> FittedModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(np.unique(y)) < 2:
        raise ValueError("both classes must be present")
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - center) / scale
    if spec.kind == "logistic":
        return FittedModel(spec, tuple(names), center, scale, logistic=logistic_fit(Z, y, spec.ridge))
    forest = fit_forest(Z, y, spec.n_trees, spec.max_depth, spec.min_leaf, spec.max_features, spec.seed)
    return FittedModel(spec, tuple(names), center, scale, forest=forest)


def train(view: AnalysisView, spec: ModelSpec) -> FittedModel:
    """Fit on ``view.X`` against ``view.labels``; blood markers are refused."""
    if view.labels is None:
        raise ValueError("view has no label column")
    check_leakage(view.feature_names, view.roles.outcome)
    X = _raw_features(view)
    return fit_arrays(X, view.labels, spec, view.feature_names)


def _raw_features(view: AnalysisView) -> np.ndarray:
    # models standardize internally; undo any view-level scaling so
    # predictions apply to raw data
    cols = []
    for j, name in enumerate(view.feature_names):
        mean, sd = view.scaling.get(name, (0.0, 1.0))
        cols.append(view.X[:, j] * sd + mean)
    return np.column_stack(cols)


# ----------------------------------------------------------------- metrics


def auc_rank(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney form: (sum of positive midranks - n+(n+ + 1)/2) / (n+ n-)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    n_pos, n_neg = int(labels.sum()), int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes")
    ranks = rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def auc_pairwise(scores: np.ndarray, labels: np.ndarray) -> float:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    pos, neg = scores[labels], scores[~labels]
    diff = pos[:, None] - neg[None, :]
    wins = np.sum(diff > 0) + 0.5 * np.sum(diff == 0)
    return float(wins / (len(pos) * len(neg)))


def classification_metrics(prob: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> dict:
    labels = np.asarray(labels).astype(int)
    pred = (np.asarray(prob) >= threshold).astype(int)
    tp = int(np.sum((pred == 1) & (labels == 1)))
    fp = int(np.sum((pred == 1) & (labels == 0)))
    fn = int(np.sum((pred == 0) & (labels == 1)))
    tn = int(np.sum((pred == 0) & (labels == 0)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    both = labels.min() != labels.max()
    return {
        "auc": auc_rank(prob, labels) if both else None,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "accuracy": (tp + tn) / len(labels),
    }


def stratified_folds(labels: np.ndarray, folds: int, seed: int) -> np.ndarray:
    """Fold index per subject; each class is shuffled and dealt round-robin."""
    labels = np.asarray(labels).astype(int)
    minority = min(int(labels.sum()), int((1 - labels).sum()))
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if folds > minority:
        raise ValueError(f"{folds} folds exceed the minority class count {minority}")
    rng = np.random.default_rng(seed)
    assign = np.empty(len(labels), dtype=np.int64)
    offset = 0
    for cls in (1, 0):
        idx = np.nonzero(labels == cls)[0]
        idx = rng.permutation(idx)
        assign[idx] = (np.arange(len(idx)) + offset) % folds
        offset += len(idx)
    return assign


@dataclass(frozen=True)
class CvMetrics:
    pooled: dict
    per_fold: tuple[dict, ...]
    mean: dict
    folds: np.ndarray = field(repr=False)
    oof_probability: np.ndarray = field(repr=False)
    row_ids: tuple[str, ...] = field(repr=False, default=())
    labels: np.ndarray = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {"pooled": self.pooled, "mean": self.mean, "per_fold": list(self.per_fold)}


def cross_validate(view: AnalysisView, spec: ModelSpec, folds: int = 5, seed: int = 0) -> CvMetrics:
    if view.labels is None:
        raise ValueError("view has no label column")
    check_leakage(view.feature_names, view.roles.outcome)
    X = _raw_features(view)
    y = view.labels
    assign = stratified_folds(y, folds, seed)
    oof = np.empty(len(y))
    per_fold = []
    for f in range(folds):
        test = assign == f
        model = fit_arrays(X[~test], y[~test], spec, view.feature_names)
        oof[test] = model.predict_proba(X[test])
        per_fold.append(classification_metrics(oof[test], y[test]))
    keys = ("auc", "precision", "recall", "f1", "accuracy")
    mean = {
        k: float(np.mean([m[k] for m in per_fold if m[k] is not None])) if any(m[k] is not None for m in per_fold) else None
        for k in keys
    }
    return CvMetrics(classification_metrics(oof, y), tuple(per_fold), mean, assign, oof, view.row_ids, y)


# ----------------------------------------------------------------- ranking


@dataclass(frozen=True)
class RiskRanking:
    ids: tuple[str, ...]
    probability: np.ndarray
    labels: np.ndarray | None
    source: str

    def __len__(self) -> int:
        return len(self.ids)


def rank_probabilities(
    ids: Sequence[str],
    probability: Sequence[float],
    labels: Sequence[int] | None = None,
    source: str = "out-of-fold",
) -> RiskRanking:
    """Descending by probability; ties broken by id in lexicographic order."""
    ids = list(ids)
    prob = np.asarray(probability, dtype=float)
    order = sorted(range(len(ids)), key=lambda i: (-prob[i], ids[i]))
    lab = None if labels is None else np.asarray(labels)[order]
    return RiskRanking(tuple(ids[i] for i in order), prob[order], lab, source)


def risk_rank(model: FittedModel | CvMetrics, view: AnalysisView | None = None) -> RiskRanking:
    """Rank subjects by predicted risk.

    Given cross-validation output the out-of-fold probabilities are used.
    Given a fitted model, probabilities are in-sample and the ranking's
    ``source`` says so.
    """
    if isinstance(model, CvMetrics):
        return rank_probabilities(model.row_ids, model.oof_probability, model.labels, "out-of-fold")
    if view is None:
        raise ValueError("a view is needed to rank with a fitted model")
    if tuple(view.feature_names) != model.feature_names:
        raise ValueError("view features do not match the model's")
    prob = model.predict_proba(_raw_features(view))
    return rank_probabilities(view.row_ids, prob, view.labels, "in-sample")


@dataclass(frozen=True)
class GrayZone:
    ids: tuple[str, ...]
    threshold: float
    used_fallback: bool
    others: tuple[str, ...]


def gray_zone(ranking: RiskRanking, threshold: float = 0.5, fallback_top_k: int | None = 5) -> GrayZone:
    """Non-diabetic subjects whose predicted risk is at least ``threshold``.

    If none qualify and ``fallback_top_k`` is given, the ``k`` highest-ranked
    non-diabetics are flagged instead.  ``others`` lists the remaining
    non-diabetics in rank order.
    """
    if not 0 < threshold < 1:
        raise ValueError("gray-zone threshold must lie in (0, 1)")
    if ranking.labels is None:
        raise ValueError("ranking carries no true labels")
    neg = [(i, p) for i, p, lab in zip(ranking.ids, ranking.probability, ranking.labels) if lab == 0]
    flagged = [i for i, p in neg if p >= threshold]
    fallback = False
    if not flagged and fallback_top_k:
        flagged = [i for i, _ in neg[:fallback_top_k]]
        fallback = True
    chosen = set(flagged)
    return GrayZone(tuple(flagged), threshold, fallback, tuple(i for i, _ in neg if i not in chosen))

"""Bagged CART classification trees with Gini splits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Tree:
    # parallel arrays; feature == -1 marks a leaf
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.nonzero(active)[0]
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return self.value[node]

    @property
    def depth(self) -> int:
        def walk(i: int) -> int:
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))

        return walk(0)


def _best_split(X: np.ndarray, y: np.ndarray, features: np.ndarray, min_leaf: int):
    """Lowest weighted Gini impurity over the candidate features.

    Returns ``(feature, threshold, impurity)`` or ``None`` when no split leaves
    at least ``min_leaf`` rows on each side.
    """
    n = len(y)
    best = None
    best_score = np.inf
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        pos_left = np.cumsum(ys)[:-1]
        n_left = np.arange(1, n)
        n_right = n - n_left
        pos_right = ys.sum() - pos_left
        valid = (xs[1:] > xs[:-1]) & (n_left >= min_leaf) & (n_right >= min_leaf)
        if not valid.any():
            continue
        p_l = pos_left / n_left
        p_r = pos_right / n_right
        gini = n_left * 2 * p_l * (1 - p_l) + n_right * 2 * p_r * (1 - p_r)
        gini = np.where(valid, gini, np.inf)
        i = int(np.argmin(gini))
        if gini[i] < best_score - 1e-12:
            best_score = gini[i]
            best = (int(f), 0.5 * (xs[i] + xs[i + 1]), gini[i] / n)
    return best


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
    max_depth: int = 3,
    min_leaf: int = 1,
    max_features: int | None = None,
) -> Tree:
    d = X.shape[1]
    m = d if max_features is None else max(1, min(d, max_features))
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    stack = [(new_node(), np.arange(len(y)), 0)]
    while stack:
        node, rows, depth = stack.pop()
        ys = y[rows]
        value[node] = float(ys.mean())
        if depth >= max_depth or len(rows) < 2 * min_leaf or ys.min() == ys.max():
            continue
        feats = rng.choice(d, size=m, replace=False) if m < d else np.arange(d)
        split = _best_split(X[rows], ys, np.sort(feats), min_leaf)
        if split is None:
            continue
        f, thr, impurity = split
        parent = 2 * ys.mean() * (1 - ys.mean())
        if impurity >= parent - 1e-15:
            continue
        mask = X[rows, f] <= thr
        feature[node], threshold[node] = f, thr
        left[node], right[node] = new_node(), new_node()
        stack.append((right[node], rows[~mask], depth + 1))
        stack.append((left[node], rows[mask], depth + 1))
    return Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=float),
    )


def resolve_max_features(rule: str | int | None, d: int) -> int:
    if rule is None or rule == "all":
        return d
    if rule == "sqrt":
        return max(1, int(np.sqrt(d)))
    if rule == "log2":
        return max(1, int(np.log2(d)))
    return max(1, min(d, int(rule)))


@dataclass(frozen=True)
class Forest:
    trees: tuple[Tree, ...]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += tree.predict_proba(X)
        return total / len(self.trees)


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    n_trees: int = 100,
    max_depth: int = 3,
    min_leaf: int = 1,
    max_features: str | int | None = "sqrt",
    seed: int = 0,
) -> Forest:
    """Tree ``i`` sees a bootstrap sample drawn from an RNG keyed on
    ``(seed, i)``; trees can therefore be grown in any order."""
    if n_trees < 1 or max_depth < 1:
        raise ValueError("need n_trees >= 1 and max_depth >= 1")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    mf = resolve_max_features(max_features, d)
    trees = []
    for i in range(n_trees):
        rng = np.random.default_rng([int(seed), i])
        rows = rng.integers(0, n, size=n)
        trees.append(grow_tree(X[rows], y[rows], rng, max_depth, min_leaf, mf))
    return Forest(tuple(trees))

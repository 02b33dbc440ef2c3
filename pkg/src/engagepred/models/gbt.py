"""Gradient boosted regression trees for binomial deviance.

Each round fits a shallow regression tree to the residuals ``y - p`` by
exact variance-reduction split search, then replaces every leaf value by the
one-step Newton estimate ``sum(y - p) / sum(p * (1 - p))``.  The ensemble
margin is ``base_score + learning_rate * sum(tree(x))``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ValidationError, check_training_data, sigmoid

LEAF = -1
P_CLIP = 1e-6


@dataclass
class Tree:
    """Flat binary tree.  ``left[i] == -1`` marks node ``i`` as a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray
    default_left: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.left)

    def is_leaf(self, i: int) -> bool:
        return self.left[i] == LEAF

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of X."""
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            internal = self.left[node] != LEAF
            if not internal.any():
                return node
            r = rows[internal]
            n = node[internal]
            go_left = X[r, self.feature[n]] <= self.threshold[n]
            node[internal] = np.where(go_left, self.left[n], self.right[n])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def used_features(self) -> set[int]:
        return {int(f) for f, l in zip(self.feature, self.left) if l != LEAF}

    def to_nested(self, i: int = 0) -> dict:
        if self.left[i] == LEAF:
            return {"value": float(self.value[i]), "cover": float(self.cover[i])}
        return {
            "feature": int(self.feature[i]),
            "threshold": float(self.threshold[i]),
            "default_left": bool(self.default_left[i]),
            "cover": float(self.cover[i]),
            "left": self.to_nested(int(self.left[i])),
            "right": self.to_nested(int(self.right[i])),
        }

    @classmethod
    def from_nested(cls, root: dict) -> "Tree":
        b = _Builder()

        def walk(node: dict) -> int:
            if "value" in node:
                return b.leaf(node["value"], node["cover"])
            i = b.internal(node["feature"], node["threshold"], node["cover"], node.get("default_left", True))
            b.left[i] = walk(node["left"])
            b.right[i] = walk(node["right"])
            return i

        walk(root)
        return b.build()


class _Builder:
    def __init__(self):
        self.feature, self.threshold, self.left, self.right = [], [], [], []
        self.value, self.cover, self.default_left = [], [], []

    def _add(self, feature, threshold, value, cover, default_left) -> int:
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(value)
        self.cover.append(cover)
        self.default_left.append(default_left)
        return len(self.left) - 1

    def leaf(self, value, cover) -> int:
        return self._add(-2, 0.0, float(value), float(cover), True)

    def internal(self, feature, threshold, cover, default_left=True) -> int:
        return self._add(int(feature), float(threshold), 0.0, float(cover), bool(default_left))

    def build(self) -> Tree:
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int64),
            threshold=np.asarray(self.threshold, dtype=float),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            value=np.asarray(self.value, dtype=float),
            cover=np.asarray(self.cover, dtype=float),
            default_left=np.asarray(self.default_left, dtype=bool),
        )


@dataclass
class TreeEnsemble:
    base_score: float
    learning_rate: float
    trees: list[Tree]
    feature_names: list[str]
    params: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValidationError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X

    def decision_function(self, X) -> np.ndarray:
        X = self._check(X)
        total = np.zeros(len(X))
        for t in self.trees:
            total += t.predict(X)
        return self.base_score + self.learning_rate * total

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.decision_function(X))

    def staged_decision_function(self, X):
        X = self._check(X)
        total = np.zeros(len(X))
        yield self.base_score + self.learning_rate * total
        for t in self.trees:
            total += t.predict(X)
            yield self.base_score + self.learning_rate * total


def gbt_predict_proba(m: TreeEnsemble, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValidationError("expected a single row")
    return float(m.predict_proba(x)[0])


def deviance(y: np.ndarray, margin: np.ndarray) -> float:
    """Mean binomial negative log-likelihood of log-odds ``margin``."""
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


def _best_split(X, order, rows_mask, resid, min_leaf):
    """Best (feature, threshold, gain) over all features, or None.

    Ties resolve to the lowest feature index, then the lowest threshold.
    """
    k = int(rows_mask.sum())
    if k < 2 * min_leaf:
        return None
    d = X.shape[1]
    # rows of this node in per-feature sorted order, shape (d, k)
    idx = order[rows_mask[order]].reshape(d, k)
    xs = X[idx, np.arange(d)[:, None]]
    cs = np.cumsum(resid[idx], axis=1)
    total = cs[:, -1:]
    n_left = np.arange(1, k, dtype=float)
    left = cs[:, :-1]
    gain = left**2 / n_left + (total - left) ** 2 / (k - n_left) - total**2 / k
    valid = xs[:, :-1] < xs[:, 1:]
    valid[:, : min_leaf - 1] = False
    if min_leaf > 1:
        valid[:, k - min_leaf:] = False
    gain = np.where(valid, gain, -np.inf)
    flat = int(np.argmax(gain))
    j, pos = divmod(flat, k - 1)
    best = gain[j, pos]
    if not np.isfinite(best) or best <= 1e-12 * max(1.0, float(np.sum(resid[rows_mask] ** 2))):
        return None
    lo, hi = xs[j, pos], xs[j, pos + 1]
    thr = (lo + hi) / 2.0
    if thr >= hi:  # midpoint rounded up onto the next value
        thr = lo
    return j, float(thr), float(best)


def _fit_tree(X, order, resid, hess, max_depth, min_leaf) -> tuple[Tree, np.ndarray]:
    """One regression tree; also returns every training row's leaf value."""
    n = len(X)
    b = _Builder()
    out = np.zeros(n)

    def newton(mask) -> float:
        den = hess[mask].sum()
        return float(resid[mask].sum() / den) if abs(den) >= 1e-150 else 0.0

    def grow(mask: np.ndarray, depth: int) -> int:
        cover = float(mask.sum())
        split = _best_split(X, order, mask, resid, min_leaf) if depth < max_depth else None
        if split is None:
            v = newton(mask)
            out[mask] = v
            return b.leaf(v, cover)
        j, thr, _ = split
        i = b.internal(j, thr, cover)
        go_left = X[:, j] <= thr
        b.left[i] = grow(mask & go_left, depth + 1)
        b.right[i] = grow(mask & ~go_left, depth + 1)
        return i

    grow(np.ones(n, dtype=bool), 0)
    return b.build(), out


DEFAULT_PARAMS = {
    "n_trees": 100,
    "max_depth": 3,
    "learning_rate": 0.1,
    "min_samples_leaf": 2,
    "seed": 0,
}


def gbt_train(X, y, params: dict | None = None, feature_names=None) -> TreeEnsemble:
    """Fit a boosted ensemble of depth-limited trees on 0/1 labels.

    >>> X = np.array([[0.], [1.], [2.], [3.]]); y = np.array([0, 0, 1, 1])
    >>> m = gbt_train(X, y, {"n_trees": 20, "min_samples_leaf": 1})
    >>> (m.predict_proba(X) > 0.5).astype(int).tolist()
    [0, 0, 1, 1]
    """
    p = {**DEFAULT_PARAMS, **(params or {})}
    X, y = check_training_data(X, y)
    n, d = X.shape
    names = list(feature_names) if feature_names is not None else [f"f{j}" for j in range(d)]
    if len(names) != d:
        raise ValidationError(f"{len(names)} feature names for {d} columns")
    if p["n_trees"] < 0 or p["max_depth"] < 1 or p["min_samples_leaf"] < 1:
        raise ValidationError(f"invalid parameters {p}")

    prior = float(np.clip(y.mean(), P_CLIP, 1 - P_CLIP))
    base = float(np.log(prior / (1 - prior)))
    lr = float(p["learning_rate"])
    order = np.argsort(X, axis=0, kind="stable").T.copy()
    margin = np.full(n, base)
    trees = []
    for _ in range(int(p["n_trees"])):
        prob = sigmoid(margin)
        tree, fitted = _fit_tree(X, order, y - prob, prob * (1 - prob),
                                 int(p["max_depth"]), int(p["min_samples_leaf"]))
        trees.append(tree)
        margin = margin + lr * fitted
    return TreeEnsemble(base, lr, trees, names, params=p)

"""Shapley attributions for boosted tree ensembles.

Attributions are path-dependent TreeSHAP values in margin (log-odds) space,
using the training-row covers stored on every node.  For every instance
``base_value + sum(phi) == margin``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import spearmanr

from .models import StateError, ValidationError, sigmoid
from .models.gbt import Tree, TreeEnsemble

OTHER = "other features"


@dataclass
class ShapAttribution:
    community: str
    base_value: float
    contributions: dict[str, float]
    output_margin: float
    output_probability: float
    feature_values: dict[str, float] = field(default_factory=dict)

    def efficiency_gap(self) -> float:
        return abs(self.base_value + sum(self.contributions.values()) - self.output_margin)


# ------------------------------------------------------------- tree shap

def _extend(path, zero, one, feature):
    d, z, o, w = path
    depth = len(d)
    d, z, o, w = d + [feature], z + [zero], o + [one], w + [1.0 if depth == 0 else 0.0]
    for i in range(depth - 1, -1, -1):
        w[i + 1] += one * w[i] * (i + 1) / (depth + 1)
        w[i] = zero * w[i] * (depth - i) / (depth + 1)
    return d, z, o, w


def _unwind(path, k):
    d, z, o, w = (list(a) for a in path)
    depth = len(d) - 1
    one, zero = o[k], z[k]
    nxt = w[depth]
    for i in range(depth - 1, -1, -1):
        if one != 0:
            tmp = w[i]
            w[i] = nxt * (depth + 1) / ((i + 1) * one)
            nxt = tmp - w[i] * zero * (depth - i) / (depth + 1)
        else:
            w[i] = w[i] * (depth + 1) / (zero * (depth - i))
    del d[k], z[k], o[k]
    w.pop()
    return d, z, o, w


def _unwound_sum(path, k) -> float:
    _, z, o, w = path
    depth = len(w) - 1
    one, zero = o[k], z[k]
    nxt = w[depth]
    total = 0.0
    for i in range(depth - 1, -1, -1):
        if one != 0:
            tmp = nxt * (depth + 1) / ((i + 1) * one)
            total += tmp
            nxt = w[i] - tmp * zero * (depth - i) / (depth + 1)
        else:
            total += w[i] / zero / ((depth - i) / (depth + 1))
    return total


def _tree_phi(tree: Tree, goes_left: Mapping[int, bool], n_features: int) -> np.ndarray:
    """TreeSHAP of one tree for one decision pattern (node -> goes left)."""
    phi = np.zeros(n_features)

    def recurse(node, path, zero, one, feature):
        path = _extend(path, zero, one, feature)
        if tree.left[node] < 0:
            _, z, o, _ = path
            for i in range(1, len(z)):
                phi[path[0][i]] += _unwound_sum(path, i) * (o[i] - z[i]) * tree.value[node]
            return
        split = int(tree.feature[node])
        left, right = int(tree.left[node]), int(tree.right[node])
        hot, cold = (left, right) if goes_left[node] else (right, left)
        cover = tree.cover[node]
        in_zero, in_one = 1.0, 1.0
        if split in path[0]:
            k = path[0].index(split)
            in_zero, in_one = path[1][k], path[2][k]
            path = _unwind(path, k)
        recurse(hot, path, tree.cover[hot] / cover * in_zero, in_one, split)
        recurse(cold, path, tree.cover[cold] / cover * in_zero, 0.0, split)

    recurse(0, ([], [], [], []), 1.0, 1.0, -1)
    return phi


def expected_tree_value(tree: Tree) -> float:
    leaves = tree.left < 0
    return float(np.sum(tree.cover[leaves] * tree.value[leaves]) / tree.cover[0])


def expected_margin(m: TreeEnsemble) -> float:
    """Cover-weighted mean margin: the mean training-set margin."""
    return m.base_score + m.learning_rate * sum(expected_tree_value(t) for t in m.trees)


def _check_model(m) -> None:
    if not isinstance(m, TreeEnsemble) or m.trees is None:
        raise StateError("model is not a trained tree ensemble")


def _tree_phi_matrix(tree: Tree, X: np.ndarray, n_features: int) -> np.ndarray:
    internal = np.flatnonzero(tree.left >= 0)
    if len(internal) == 0:
        return np.zeros((len(X), n_features))
    bits = X[:, tree.feature[internal]] <= tree.threshold[internal]
    patterns, inverse = np.unique(bits, axis=0, return_inverse=True)
    per_pattern = np.stack([
        _tree_phi(tree, dict(zip(internal.tolist(), row.tolist())), n_features) for row in patterns
    ])
    return per_pattern[np.ravel(inverse)]


def shap_values(m: TreeEnsemble, X, trees: Sequence[int] | None = None) -> tuple[float, np.ndarray]:
    """(base_value, phi) for every row of X; phi has shape (rows, features)."""
    _check_model(m)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != m.n_features:
        raise ValidationError(f"expected {m.n_features} features, got {X.shape[1]}")
    phi = np.zeros((len(X), m.n_features))
    for t in (m.trees if trees is None else [m.trees[i] for i in trees]):
        phi += _tree_phi_matrix(t, X, m.n_features)
    return expected_margin(m), m.learning_rate * phi


def tree_shap(m: TreeEnsemble, x, community: str = "") -> ShapAttribution:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValidationError("expected a single row")
    return explain_rows(m, x[None, :], [community])[0]


def explain_rows(m: TreeEnsemble, X, communities: Sequence[str]) -> list[ShapAttribution]:
    X = np.asarray(X, dtype=float)
    base, phi = shap_values(m, X)
    margin = m.decision_function(X)
    names = m.feature_names
    return [
        ShapAttribution(
            community=c,
            base_value=base,
            contributions=dict(zip(names, phi[i].tolist())),
            output_margin=float(margin[i]),
            output_probability=float(sigmoid(margin[i])),
            feature_values=dict(zip(names, X[i].tolist())),
        )
        for i, c in enumerate(communities)
    ]


# ------------------------------------------------------------- aggregates

@dataclass
class ShapSummary:
    features: list[str]
    importance: np.ndarray      # mean |phi|
    rank: np.ndarray            # 1 = most important
    correlation: np.ndarray     # Spearman(raw value, phi); 0 when undefined
    phi: np.ndarray             # (instances, features)
    values: np.ndarray          # (instances, features)
    instances: list[str]
    p_values: np.ndarray | None = None

    def order(self) -> list[int]:
        return [int(i) for i in np.argsort(self.rank, kind="stable")]

    def table(self, top: int | None = None) -> list[dict]:
        rows = []
        for j in self.order()[:top]:
            row = {"feature": self.features[j], "rank": int(self.rank[j]),
                   "mean_abs_shap": float(self.importance[j]),
                   "spearman": float(self.correlation[j])}
            if self.p_values is not None:
                row["p_value"] = float(self.p_values[j])
            rows.append(row)
        return rows


def aggregate_shap(attributions: Sequence[ShapAttribution], feature_values=None) -> ShapSummary:
    """Importance ranking and beeswarm point clouds over many instances.

    Ties in importance rank by feature name.
    """
    if not attributions:
        raise ValueError("need at least one attribution")
    features = list(attributions[0].contributions)
    phi = np.array([[a.contributions[f] for f in features] for a in attributions])
    if feature_values is None:
        values = np.array([[a.feature_values.get(f, np.nan) for f in features] for a in attributions])
    else:
        values = np.asarray(feature_values, dtype=float)
    importance = np.abs(phi).mean(axis=0)
    order = sorted(range(len(features)), key=lambda j: (-importance[j], features[j]))
    rank = np.empty(len(features), dtype=int)
    rank[order] = np.arange(1, len(features) + 1)
    corr = np.zeros(len(features))
    if len(phi) > 2:
        for j in range(len(features)):
            if np.ptp(phi[:, j]) > 0 and np.ptp(values[:, j]) > 0:
                corr[j] = spearmanr(values[:, j], phi[:, j]).statistic
    return ShapSummary(features, importance, rank, corr, phi, values,
                       [a.community for a in attributions])


def attribution_significance(phi: np.ndarray, labels, n_permutations: int = 1000,
                             seed: int = 0) -> np.ndarray:
    """Per-feature permutation p-values for class separation of attributions.

    The statistic is ``|mean phi | positive - mean phi | negative|``; the
    null distribution reshuffles the class labels over instances.
    """
    phi = np.asarray(phi, dtype=float)
    y = np.asarray(labels).astype(bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        return np.ones(phi.shape[1])

    def contrast(mask: np.ndarray) -> np.ndarray:
        w = np.where(mask, 1.0 / n_pos, -1.0 / n_neg)
        return np.abs(w @ phi)

    observed = contrast(y)
    rng = np.random.default_rng(seed)
    exceed = np.zeros(phi.shape[1])
    for _ in range(n_permutations):
        exceed += contrast(rng.permutation(y)) >= observed - 1e-12
    return (exceed + 1.0) / (n_permutations + 1.0)


# -------------------------------------------------------------- waterfall

@dataclass
class Waterfall:
    community: str
    base: float
    final: float
    entries: list[dict]

    def to_dict(self) -> dict:
        return {"community": self.community, "base": self.base, "entries": self.entries, "final": self.final}


def waterfall(a: ShapAttribution, top_k: int = 10) -> Waterfall:
    """Largest contributions first, the rest folded into one entry.

    ``base``, ``final`` and each ``cumulative_probability`` are sigmoids of
    the running margin starting from the base value.
    """
    if top_k < 1:
        raise ValueError("top_k must be at least 1")
    items = sorted(a.contributions.items(), key=lambda kv: (-abs(kv[1]), kv[0]))
    shown, rest = items[:top_k], items[top_k:]
    entries = []
    running = a.base_value
    for name, phi in shown:
        running += phi
        entry = {"name": name, "phi": phi, "cumulative_probability": float(sigmoid(running))}
        if name in a.feature_values:
            entry["value"] = a.feature_values[name]
        entries.append(entry)
    if rest:
        phi = float(sum(v for _, v in rest))
        running += phi
        entries.append({"name": f"{len(rest)} {OTHER}", "phi": phi,
                        "cumulative_probability": float(sigmoid(running))})
    return Waterfall(a.community, float(sigmoid(a.base_value)), float(sigmoid(a.output_margin)), entries)


# ---------------------------------------------------------------- exports

def write_beeswarm(path: str | Path, summary: ShapSummary) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "instance", "shap_value", "raw_value"])
        for j in summary.order():
            for i, inst in enumerate(summary.instances):
                w.writerow([summary.features[j], inst, repr(float(summary.phi[i, j])),
                            repr(float(summary.values[i, j]))])


def write_waterfall(path: str | Path, wf: Waterfall) -> None:
    Path(path).write_text(json.dumps(wf.to_dict(), indent=1) + "\n", encoding="utf-8")

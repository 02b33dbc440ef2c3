"""Cross-validated ablation over feature blocks, metrics and error analysis."""
from __future__ import annotations

import csv
import io
import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import CommunityCorpus
from .features import (
    FeatureVector,
    assemble_matrix,
    build_vocabulary,
    normalize_blocks,
    tfidf_vector,
)
from .models import gbt_train, mlp_train

log = logging.getLogger(__name__)

METRICS = ("precision", "recall", "f1", "accuracy")
MODELS = ("gbt", "mlp")
ABLATION_SUBSETS: tuple[tuple[str, ...], ...] = (
    ("L",), ("M",), ("N",), ("M", "N"), ("L", "M"), ("L", "M", "N"),
)
AGGREGATE_ROWS = ("mean", "std")


class FoldError(ValueError):
    """A class has fewer members than there are folds."""


def blocks_key(blocks: Iterable[str]) -> str:
    return "+".join(normalize_blocks(blocks))


# ------------------------------------------------------------------ folds

def stratified_kfold(labels: Mapping[str, int], k: int = 5, seed: int = 0) -> dict[str, int]:
    """Community -> fold index.

    Names are sorted, shuffled with ``seed`` and dealt round-robin one class
    after another, the rotation carrying over between classes so that fold
    sizes stay balanced as well.
    """
    if k < 2:
        raise FoldError("k must be at least 2")
    names = sorted(labels)
    order = np.random.default_rng(seed).permutation(len(names))
    shuffled = [names[i] for i in order]
    counts = Counter(labels.values())
    small = {c: n for c, n in counts.items() if n < k}
    if small:
        raise FoldError(f"class sizes {small} are smaller than k={k}")
    folds: dict[str, int] = {}
    turn = 0
    for cls in sorted(counts):
        for name in shuffled:
            if labels[name] == cls:
                folds[name] = turn % k
                turn += 1
    return folds


# ---------------------------------------------------------------- metrics

def metrics(y_true, y_prob, threshold: float = 0.5) -> dict[str, float]:
    """Precision, recall, F1 and accuracy; predictions are ``prob >= threshold``.

    Undefined ratios (no predicted or no actual positives) are 0.
    """
    y = np.asarray(y_true).astype(int)
    p = np.asarray(y_prob, dtype=float)
    if len(y) != len(p) or len(y) == 0:
        raise ValueError("y_true and y_prob must be equal, non-zero length")
    pred = (p >= threshold).astype(int)
    tp = int(np.sum((pred == 1) & (y == 1)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"precision": precision, "recall": recall, "f1": f1,
            "accuracy": float(np.mean(pred == y))}


# ---------------------------------------------------------------- report

@dataclass
class SettingResult:
    model: str
    blocks: tuple[str, ...]
    folds: list[dict[str, float]]
    probabilities: dict[str, float]

    @property
    def key(self) -> tuple[str, str]:
        return self.model, blocks_key(self.blocks)

    def mean(self, metric: str) -> float:
        return float(np.mean([f[metric] for f in self.folds]))

    def std(self, metric: str) -> float:
        return float(np.std([f[metric] for f in self.folds]))


@dataclass
class EvalReport:
    k: int
    seed: int
    labels: dict[str, int]
    fold_of: dict[str, int]
    settings: list[SettingResult] = field(default_factory=list)

    def get(self, model: str, blocks: Iterable[str] | str) -> SettingResult:
        key = (model, blocks_key(blocks))
        for s in self.settings:
            if s.key == key:
                return s
        raise KeyError(f"no results for {key}")

    @property
    def n_models_fitted(self) -> int:
        return sum(len(s.folds) for s in self.settings)

    def to_dict(self) -> dict:
        return {
            "k": self.k, "seed": self.seed, "labels": self.labels, "folds": self.fold_of,
            "settings": [{"model": s.model, "blocks": list(s.blocks), "folds": s.folds,
                          "probabilities": s.probabilities} for s in self.settings],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EvalReport":
        return cls(int(d["k"]), int(d["seed"]), dict(d["labels"]), dict(d["folds"]),
                   [SettingResult(s["model"], tuple(s["blocks"]), list(s["folds"]), dict(s["probabilities"]))
                    for s in d["settings"]])


def _fmt(x: float) -> str:
    return repr(round(float(x), 12))


def write_report_csv(path: str | Path, report: EvalReport) -> None:
    """Per-fold rows, then ``mean`` and ``std`` rows per setting."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "blocks", "fold", *METRICS])
        for s in report.settings:
            for i, f in enumerate(s.folds):
                w.writerow([s.model, blocks_key(s.blocks), i, *(_fmt(f[m]) for m in METRICS)])
        for s in report.settings:
            w.writerow([s.model, blocks_key(s.blocks), "mean", *(_fmt(s.mean(m)) for m in METRICS)])
            w.writerow([s.model, blocks_key(s.blocks), "std", *(_fmt(s.std(m)) for m in METRICS)])


def results_table(report: EvalReport) -> list[dict]:
    rows = []
    for s in report.settings:
        row = {"model": s.model.upper(), "blocks": blocks_key(s.blocks)}
        for m in METRICS:
            row[m] = (s.mean(m), s.std(m))
        rows.append(row)
    return rows


def format_table(report: EvalReport) -> str:
    """Fixed-width text table: one row per model and block subset, cells ``mean ± std``."""
    out = io.StringIO()
    out.write(f"{'model':<6} {'blocks':<7}" + "".join(f" {m:>15}" for m in METRICS) + "\n")
    for row in results_table(report):
        cells = "".join(f" {f'{mu:.3f} ± {sd:.3f}':>15}" for mu, sd in (row[m] for m in METRICS))
        out.write(f"{row['model']:<6} {row['blocks']:<7}{cells}\n")
    return out.getvalue()


def write_table_csv(path: str | Path, report: EvalReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "blocks", *(f"{m}_{s}" for m in METRICS for s in AGGREGATE_ROWS)])
        for row in results_table(report):
            w.writerow([row["model"], row["blocks"], *(f"{v:.6f}" for m in METRICS for v in row[m])])


# --------------------------------------------------------------- ablation

def _design(vectors, documents, names, blocks, vocabulary):
    blocks = normalize_blocks(blocks)
    overrides = {}
    if "L" in blocks and documents is not None:
        overrides["L"] = {c: tfidf_vector(documents[c], vocabulary) for c in names}
    return assemble_matrix({c: vectors[c] for c in names}, blocks, vocabulary, overrides)


def train_fold(vectors: Mapping[str, FeatureVector], documents: Mapping[str, Counter] | None,
               train: Iterable[str], model: str, blocks: Iterable[str], params: Mapping | None = None):
    """Fit one model reading only the ``train`` communities.

    Returns ``(fitted, vocabulary)``; the vocabulary is None unless the
    linguistic block is refitted from ``documents``.
    """
    train = sorted(train)
    vocabulary = None
    if "L" in normalize_blocks(blocks) and documents is not None:
        vocabulary = build_vocabulary(documents[c] for c in train)
    m = _design(vectors, documents, train, blocks, vocabulary)
    if model == "gbt":
        return gbt_train(m.X, m.y, params, m.columns), vocabulary
    if model == "mlp":
        return mlp_train(m.X, m.y, params, m.columns), vocabulary
    raise ValueError(f"unknown model {model!r}")


def _run_fold(job) -> list[tuple[str, tuple[str, ...], dict, dict]]:
    fold, vectors, documents, fold_of, models, subsets, params = job
    test = sorted(c for c, f in fold_of.items() if f == fold)
    train = sorted(c for c, f in fold_of.items() if f != fold)
    out = []
    for blocks in subsets:
        for model in models:
            fitted, vocabulary = train_fold(vectors, documents, train, model, blocks, params.get(model))
            m = _design(vectors, documents, test, blocks, vocabulary)
            prob = fitted.predict_proba(m.X)
            out.append((model, blocks, metrics(m.y, prob), dict(zip(test, prob.tolist()))))
    return out


def run_ablation(vectors: Mapping[str, FeatureVector], documents: Mapping[str, Counter] | None = None,
                 models: Sequence[str] = MODELS, subsets: Sequence[Iterable[str]] = ABLATION_SUBSETS,
                 k: int = 5, seed: int = 0, params: Mapping[str, Mapping] | None = None,
                 workers: int = 1) -> EvalReport:
    """Stratified k-fold evaluation of every model on every block subset.

    With ``documents`` the linguistic block is rebuilt inside each fold from
    the training communities only; without them the stored ``L`` vectors
    are used as given.
    """
    labels = {c: v.label for c, v in vectors.items()}
    if any(y is None for y in labels.values()):
        raise ValueError("every community needs a label")
    subsets = [normalize_blocks(s) for s in subsets]
    if documents is None and any("L" in s for s in subsets):
        log.warning("no token counts supplied: the linguistic block is not refitted per fold")
    fold_of = stratified_kfold(labels, k, seed)
    jobs = [(f, dict(vectors), documents, fold_of, tuple(models), subsets, dict(params or {}))
            for f in range(k)]
    if workers > 1:
        with ProcessPoolExecutor(min(workers, k)) as pool:
            per_fold = list(pool.map(_run_fold, jobs))
    else:
        per_fold = [_run_fold(j) for j in jobs]

    settings = []
    for model in models:
        for blocks in subsets:
            folds, probs = [], {}
            for results in per_fold:
                for mdl, b, met, pr in results:
                    if mdl == model and b == blocks:
                        folds.append(met)
                        probs.update(pr)
            settings.append(SettingResult(model, blocks, folds, dict(sorted(probs.items()))))
    return EvalReport(k, seed, labels, fold_of, settings)


# ------------------------------------------------------------------ errors

def top_errors(report: EvalReport, model: str = "gbt", blocks: Iterable[str] | str = ("L", "M", "N"),
               n: int = 10, threshold: float = 0.5) -> dict[str, list[tuple[str, float]]]:
    """Most confident out-of-fold mistakes.

    False positives are negatives ranked by descending probability, false
    negatives positives ranked by ascending probability.
    """
    s = report.get(model, blocks)
    fp = [(c, p) for c, p in s.probabilities.items() if report.labels[c] == 0 and p >= threshold]
    fn = [(c, p) for c, p in s.probabilities.items() if report.labels[c] == 1 and p < threshold]
    fp.sort(key=lambda cp: (-cp[1], cp[0]))
    fn.sort(key=lambda cp: (cp[1], cp[0]))
    return {"false_positives": fp[:n], "false_negatives": fn[:n]}


def write_errors_csv(path: str | Path, errors: Mapping[str, list[tuple[str, float]]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "community", "probability"])
        for kind, short in (("false_positives", "FP"), ("false_negatives", "FN")):
            for c, p in errors[kind]:
                w.writerow([short, c, _fmt(p)])


# -------------------------------------------------------------- statistics

STAT_ROWS = ("subscribers", "active_users", "age", "inactive", "submissions", "comments")
_NO_TOTAL = {"age", "inactive", "comments"}


def dataset_statistics(corpora: Mapping[str, CommunityCorpus], labels: Mapping[str, int],
                       cutoff: int) -> dict[str, dict[str, dict[str, float | None]]]:
    """Total/mean/median/std of size and activity per group (positive, negative, all).

    ``comments`` is the per-community mean number of comments per
    submission; ``inactive`` is days from the latest record to ``cutoff``.
    Communities without metadata are left out of the subscriber and age rows.
    """
    groups = {"positive": [c for c, y in labels.items() if y == 1 and c in corpora],
              "negative": [c for c, y in labels.items() if y == 0 and c in corpora],
              "all": sorted(corpora)}
    out = {}
    for g, names in groups.items():
        cols: dict[str, list[float]] = {r: [] for r in STAT_ROWS}
        for c in names:
            corp = corpora[c]
            authors = {r.author for r in (*corp.submissions, *corp.comments)} - {"[deleted]"}
            latest = max(r.created for r in (*corp.submissions, *corp.comments))
            if corp.meta is not None:
                cols["subscribers"].append(corp.meta.subscribers)
                cols["age"].append((cutoff - corp.meta.created) / 86_400)
            cols["active_users"].append(len(authors))
            cols["inactive"].append((cutoff - latest) // 86_400)
            cols["submissions"].append(len(corp.submissions))
            if corp.submissions:
                cols["comments"].append(len(corp.comments) / len(corp.submissions))
        stats = {}
        for r in STAT_ROWS:
            xs = np.asarray(cols[r], dtype=float)
            stats[r] = {
                "total": None if r in _NO_TOTAL or not len(xs) else float(xs.sum()),
                "mean": float(xs.mean()) if len(xs) else None,
                "median": float(np.median(xs)) if len(xs) else None,
                "std": float(xs.std()) if len(xs) else None,
            }
        out[g] = {"count": len(names), **stats}
    return out

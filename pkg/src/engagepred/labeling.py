"""Building the labeled set of communities.

Positives come from an atlas listing and optional regex-seeded
self-training; negatives are size-matched communities drawn from the rest.
"""
from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import DELETED, REMOVED, CommunityCorpus, normalize_text
from .features import Matrix
from .models import gbt_train

log = logging.getLogger(__name__)

POSITIVE, NEGATIVE = 1, 0
ATLAS = "atlas"
MANUAL_SEED = "manual-seed"
MATCHED_NEGATIVE = "matched-negative"
LABEL_NAMES = {POSITIVE: "positive", NEGATIVE: "negative"}
SIZE_METRICS = ("submissions", "subscribers")


class ConfigurationError(ValueError):
    """Invalid labeling configuration (e.g. a bad regex)."""


class LabelConflictError(ValueError):
    """A community would receive both labels."""


class PoolExhaustedError(ValueError):
    """Too few negative candidates to match every positive."""


def bootstrap_provenance(iteration: int) -> str:
    return f"bootstrap-iter-{iteration}"


@dataclass
class LabelSet:
    assignments: dict[str, int] = field(default_factory=dict)
    provenance: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.assignments)

    def __contains__(self, community: str) -> bool:
        return community in self.assignments

    @property
    def positives(self) -> set[str]:
        return {c for c, y in self.assignments.items() if y == POSITIVE}

    @property
    def negatives(self) -> set[str]:
        return {c for c, y in self.assignments.items() if y == NEGATIVE}

    def add(self, community: str, label: int, provenance: str) -> None:
        current = self.assignments.get(community)
        if current is not None and current != label:
            raise LabelConflictError(f"{community!r} already labeled {LABEL_NAMES[current]}")
        if current is None:
            self.assignments[community] = int(label)
            self.provenance[community] = provenance

    def merged(self, other: "LabelSet") -> "LabelSet":
        out = LabelSet(dict(self.assignments), dict(self.provenance))
        for c in sorted(other.assignments):
            out.add(c, other.assignments[c], other.provenance[c])
        return out

    def restricted(self, communities: Iterable[str]) -> "LabelSet":
        keep = set(communities)
        return LabelSet({c: y for c, y in self.assignments.items() if c in keep},
                        {c: p for c, p in self.provenance.items() if c in keep})


# --------------------------------------------------------------- file I/O

def import_atlas(path: str | Path) -> LabelSet:
    """One community name per line; a ``community``/``subreddit`` header is skipped."""
    out = LabelSet()
    with open(path, newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or not row[0].strip():
                continue
            name = row[0].strip()
            if i == 0 and name.lower() in ("community", "subreddit", "name"):
                continue
            out.add(name, POSITIVE, ATLAS)
    return out


def write_labels(path: str | Path, labels: LabelSet) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["community", "label", "provenance"])
        for c in sorted(labels.assignments):
            w.writerow([c, LABEL_NAMES[labels.assignments[c]], labels.provenance[c]])


def read_labels(path: str | Path) -> LabelSet:
    values = {v: k for k, v in LABEL_NAMES.items()}
    out = LabelSet()
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            try:
                label = values[row["label"].strip().lower()]
            except KeyError:
                raise ConfigurationError(f"bad label {row['label']!r} for {row['community']!r}") from None
            out.add(row["community"].strip(), label, (row.get("provenance") or MANUAL_SEED).strip())
    return out


# ------------------------------------------------------------- candidates

def compile_patterns(patterns: Sequence[str]) -> list[re.Pattern]:
    if not patterns:
        raise ConfigurationError("at least one pattern is required")
    compiled = []
    for p in patterns:
        try:
            compiled.append(re.compile(p))
        except re.error as exc:
            raise ConfigurationError(f"invalid pattern {p!r}: {exc}") from None
    return compiled


def _texts(corpus: CommunityCorpus) -> Iterable[str]:
    for s in corpus.submissions:
        yield s.text
    for c in corpus.comments:
        if c.body not in (DELETED, REMOVED):
            yield c.body


def regex_candidates(corpora: Mapping[str, CommunityCorpus], patterns: Sequence[str]) -> set[str]:
    """Communities where any pattern matches any normalized text."""
    compiled = compile_patterns(patterns)
    hits = set()
    for name, corpus in corpora.items():
        for text in _texts(corpus):
            joined = " ".join(normalize_text(text))
            if any(p.search(joined) for p in compiled):
                hits.add(name)
                break
    return hits


# -------------------------------------------------------------- bootstrap

@dataclass(frozen=True)
class BootstrapConfig:
    patterns: tuple[str, ...]
    confidence_threshold: float = 0.95
    max_iterations: int = 3
    gbt_params: Mapping | None = None

    def __post_init__(self):
        if not self.patterns:
            raise ConfigurationError("bootstrap patterns must be non-empty")
        if not 0.0 < self.confidence_threshold < 1.0:
            raise ConfigurationError("confidence_threshold must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be at least 1")


def bootstrap_labels(seed: LabelSet, candidates: Iterable[str], features: Matrix,
                     cfg: BootstrapConfig) -> LabelSet:
    """Self-training: repeatedly promote confidently scored candidates to positives.

    Each iteration fits a fresh GBT on the current labels, scores the still
    unlabeled candidates and adds those at or above the threshold.
    """
    if not seed.positives or not seed.negatives:
        raise ValueError("seed labels must contain both classes")
    row = {c: i for i, c in enumerate(features.communities)}
    missing = sorted(c for c in set(candidates) | set(seed.assignments) if c not in row)
    if missing:
        raise ValueError(f"no feature vector for {missing[:5]}")
    labels = LabelSet(dict(seed.assignments), dict(seed.provenance))
    pool = sorted(set(candidates))
    for it in range(1, cfg.max_iterations + 1):
        unlabeled = [c for c in pool if c not in labels]
        if not unlabeled:
            break
        train = sorted(labels.assignments)
        model = gbt_train(features.X[[row[c] for c in train]],
                          np.array([labels.assignments[c] for c in train]),
                          dict(cfg.gbt_params or {}), features.columns)
        scores = model.predict_proba(features.X[[row[c] for c in unlabeled]])
        added = [c for c, p in zip(unlabeled, scores) if p >= cfg.confidence_threshold]
        log.info("bootstrap iteration %d: %d of %d candidates added", it, len(added), len(unlabeled))
        if not added:
            break
        for c in added:
            labels.add(c, POSITIVE, bootstrap_provenance(it))
    return labels


# --------------------------------------------------------------- matching

def community_sizes(corpora: Mapping[str, CommunityCorpus], metric: str = "submissions") -> dict[str, int]:
    if metric not in SIZE_METRICS:
        raise ConfigurationError(f"size metric must be one of {SIZE_METRICS}")
    if metric == "submissions":
        return {c: len(v.submissions) for c, v in corpora.items()}
    return {c: v.meta.subscribers for c, v in corpora.items() if v.meta is not None}


def match_negatives(positive_sizes: Mapping[str, float], pool_sizes: Mapping[str, float]) -> LabelSet:
    """Greedy nearest-size matching without replacement.

    Positives go largest first (name breaks ties); each takes the unused pool
    community closest in size, preferring the lexicographically smaller name.
    """
    overlap = set(positive_sizes) & set(pool_sizes)
    if overlap:
        raise ValueError(f"pool contains positives: {sorted(overlap)[:5]}")
    if len(pool_sizes) < len(positive_sizes):
        raise PoolExhaustedError(f"{len(positive_sizes)} positives but only {len(pool_sizes)} candidates")
    # pool sorted by (size, name) lets each lookup be a bisection
    pool = sorted(pool_sizes.items(), key=lambda kv: (kv[1], kv[0]))
    sizes = np.array([s for _, s in pool], dtype=float)
    used = np.zeros(len(pool), dtype=bool)
    out = LabelSet()
    for name, size in sorted(positive_sizes.items(), key=lambda kv: (-kv[1], kv[0])):
        best = _nearest_unused(sizes, used, float(size), [n for n, _ in pool])
        used[best] = True
        out.add(pool[best][0], NEGATIVE, MATCHED_NEGATIVE)
    return out


def _nearest_unused(sizes: np.ndarray, used: np.ndarray, target: float, names: list[str]) -> int:
    pos = int(np.searchsorted(sizes, target))
    lo, hi = pos - 1, pos
    while lo >= 0 and used[lo]:
        lo -= 1
    while hi < len(sizes) and used[hi]:
        hi += 1
    candidates = []
    for i in (lo, hi):
        if 0 <= i < len(sizes):
            candidates.append(i)
    # every index with the winning distance may share it; widen over equal sizes
    best_d = min(abs(sizes[i] - target) for i in candidates)
    ties = [i for i in candidates if abs(sizes[i] - target) == best_d]
    widened = set()
    for i in ties:
        j = i
        while j >= 0 and sizes[j] == sizes[i]:
            if not used[j]:
                widened.add(j)
            j -= 1
        j = i
        while j < len(sizes) and sizes[j] == sizes[i]:
            if not used[j]:
                widened.add(j)
            j += 1
    return min(widened, key=lambda i: names[i])

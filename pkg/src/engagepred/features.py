"""Community feature blocks.

* ``L``: 300 TF-IDF values over the most frequent submission tokens.
* ``M``: 25 activity, feedback and age statistics.
* ``N``: 32 reply-graph statistics (see :mod:`engagepred.graph`).
"""
from __future__ import annotations

import csv
import logging
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .corpus import DELETED, REMOVED, CommunityCorpus, normalize_text, strip_kind_prefix
from .graph import NETWORK_FEATURES, build_reply_graph, network_feature_vector

log = logging.getLogger(__name__)

VOCAB_SIZE = 300
SUBMISSION_CAP = 10_000
SECONDS_PER_DAY = 86_400
BLOCK_ORDER = ("L", "M", "N")

META_FEATURES: tuple[str, ...] = (
    "submission_amount",
    "submission_amount_normalized",
    "submission_average_score",
    "submission_median_score",
    "comments_average_score",
    "comments_median_score",
    "comments_submission_ratio",
    "deleted_removed_submission_ratio",
    "distinct_comments_to_submission_ratio",
    "distinct_comments_to_comments_ratio",
    "users_amount",
    "submission_distinct_users",
    "average_submission_per_user",
    "median_submission_per_user",
    "submission_to_comments_users_ratio",
    "submission_users_std",
    "comments_users_std",
    "users_deleted_normalized",
    "submission_title_length",
    "median_submission_title_length",
    "submission_selftext_length",
    "median_submission_selftext_length",
    "empty_selftext_ratio",
    "submissions2comments_words_used",
    "age_days",
)

assert len(META_FEATURES) == 25


class MissingMetadataError(ValueError):
    """A community has no subscriber/creation metadata."""


class AssemblyError(ValueError):
    """A requested feature block is unavailable."""


class MetaFeatures(NamedTuple):
    values: np.ndarray
    degenerate: frozenset[str]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(META_FEATURES, self.values.tolist()))


# ------------------------------------------------------------------- meta

def compute_meta_features(corpus: CommunityCorpus, cutoff: int) -> MetaFeatures:
    """The 25 meta statistics; zero denominators yield 0 and a flag."""
    if len(corpus) == 0:
        raise ValueError(f"{corpus.community}: empty corpus")
    if corpus.meta is None:
        raise MissingMetadataError(f"{corpus.community}: no metadata")
    flags: set[str] = set()

    def ratio(name: str, num: float, den: float) -> float:
        if den == 0:
            flags.add(name)
            return 0.0
        return num / den

    def stat(name: str, xs: Sequence[float], fn) -> float:
        if len(xs) == 0:
            flags.add(name)
            return 0.0
        return float(fn(np.asarray(xs, dtype=float)))

    subs, coms = corpus.submissions, corpus.comments
    n_sub, n_com = len(subs), len(coms)
    subscribers = corpus.meta.subscribers

    sub_ids = {strip_kind_prefix(s.id) for s in subs}
    commented = set()
    for c in coms:
        root = c.link_id or (c.parent_id if c.parent_id.startswith("t3_") else "")
        root = strip_kind_prefix(root)
        if root in sub_ids:
            commented.add(root)

    sub_authors = Counter(s.author for s in subs if s.author != DELETED)
    com_authors = Counter(c.author for c in coms if c.author != DELETED)
    active = set(sub_authors) | set(com_authors)
    deleted_posts = sum(s.author == DELETED for s in subs) + sum(c.author == DELETED for c in coms)

    sub_words = {t for s in subs for t in normalize_text(s.text)}
    com_words = {t for c in coms if c.body not in (DELETED, REMOVED) for t in normalize_text(c.body)}

    title_len = [len(s.title) for s in subs]
    body_len = [len(s.body) for s in subs]
    per_user = list(sub_authors.values())

    v = {
        "submission_amount": n_sub,
        "submission_amount_normalized": ratio("submission_amount_normalized", n_sub, subscribers),
        "submission_average_score": stat("submission_average_score", [s.score for s in subs], np.mean),
        "submission_median_score": stat("submission_median_score", [s.score for s in subs], np.median),
        "comments_average_score": stat("comments_average_score", [c.score for c in coms], np.mean),
        "comments_median_score": stat("comments_median_score", [c.score for c in coms], np.median),
        "comments_submission_ratio": ratio("comments_submission_ratio", n_com, n_sub),
        "deleted_removed_submission_ratio": ratio(
            "deleted_removed_submission_ratio", sum(s.body in (DELETED, REMOVED) for s in subs), n_sub),
        "distinct_comments_to_submission_ratio": ratio(
            "distinct_comments_to_submission_ratio", len(commented), n_sub),
        "distinct_comments_to_comments_ratio": ratio(
            "distinct_comments_to_comments_ratio", len(commented), n_com),
        "users_amount": subscribers,
        "submission_distinct_users": len(sub_authors),
        "average_submission_per_user": stat("average_submission_per_user", per_user, np.mean),
        "median_submission_per_user": stat("median_submission_per_user", per_user, np.median),
        "submission_to_comments_users_ratio": ratio(
            "submission_to_comments_users_ratio", len(com_authors), len(sub_authors)),
        "submission_users_std": stat("submission_users_std", per_user, np.std),
        "comments_users_std": stat("comments_users_std", list(com_authors.values()), np.std),
        "users_deleted_normalized": ratio("users_deleted_normalized", deleted_posts, len(active)),
        "submission_title_length": stat("submission_title_length", title_len, np.mean),
        "median_submission_title_length": stat("median_submission_title_length", title_len, np.median),
        "submission_selftext_length": stat("submission_selftext_length", body_len, np.mean),
        "median_submission_selftext_length": stat("median_submission_selftext_length", body_len, np.median),
        "empty_selftext_ratio": ratio("empty_selftext_ratio", sum(not s.body.strip() for s in subs), n_sub),
        "submissions2comments_words_used": ratio(
            "submissions2comments_words_used", len(com_words), len(sub_words)),
        "age_days": (int(cutoff) - int(corpus.meta.created)) // SECONDS_PER_DAY,
    }
    return MetaFeatures(np.array([float(v[k]) for k in META_FEATURES]), frozenset(flags))


# ------------------------------------------------------------- linguistic

def community_document(corpus: CommunityCorpus, cap: int = SUBMISSION_CAP) -> Counter:
    """Token counts of the ``cap`` most recent submissions (title + body)."""
    recent = sorted(corpus.submissions, key=lambda s: (-s.created, s.id))[:cap]
    counts: Counter = Counter()
    for s in recent:
        counts.update(normalize_text(s.text))
    return counts


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    document_frequency: Mapping[str, int]
    n_documents: int

    def idf(self) -> np.ndarray:
        return np.array([math.log(self.n_documents / self.document_frequency[t]) for t in self.tokens])

    def column_names(self, size: int = VOCAB_SIZE) -> list[str]:
        names = [f"L_{t}" for t in self.tokens]
        return names + [f"L__pad{i}" for i in range(len(names), size)]


def build_vocabulary(documents: Iterable[Counter], k: int = VOCAB_SIZE) -> Vocabulary:
    """Top-k tokens by total count; ties broken lexicographically."""
    total: Counter = Counter()
    df: Counter = Counter()
    n = 0
    for doc in documents:
        n += 1
        total.update(doc)
        df.update(doc.keys())
    if not total:
        raise ValueError("no tokens to build a vocabulary from")
    ranked = sorted(total.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
    tokens = tuple(t for t, _ in ranked)
    return Vocabulary(tokens, {t: df[t] for t in tokens}, n)


def tfidf_vector(document: Counter | CommunityCorpus, vocab: Vocabulary, size: int = VOCAB_SIZE) -> np.ndarray:
    """``count / total_tokens * ln(N / df)`` per vocabulary token, zero padded."""
    if isinstance(document, CommunityCorpus):
        document = community_document(document)
    out = np.zeros(size)
    total = sum(document.values())
    if total == 0:
        return out
    tf = np.array([document.get(t, 0) for t in vocab.tokens], dtype=float) / total
    out[: len(vocab.tokens)] = tf * vocab.idf()
    return out


def linguistic_block(documents: Mapping[str, Counter], train: Iterable[str], size: int = VOCAB_SIZE
                     ) -> tuple[Vocabulary, dict[str, np.ndarray]]:
    """Vocabulary from ``train`` documents only, applied to every document."""
    vocab = build_vocabulary((documents[c] for c in sorted(train)), size)
    return vocab, {c: tfidf_vector(doc, vocab, size) for c, doc in documents.items()}


# ---------------------------------------------------------------- vectors

@dataclass
class FeatureVector:
    community: str
    L: np.ndarray | None = None
    M: np.ndarray | None = None
    N: np.ndarray | None = None
    label: int | None = None
    flags: frozenset[str] = frozenset()

    def block(self, name: str) -> np.ndarray | None:
        return getattr(self, name)


@dataclass
class FeatureSet:
    vectors: dict[str, FeatureVector]
    documents: dict[str, Counter] = field(default_factory=dict)
    vocabulary: Vocabulary | None = None
    dropped: list[str] = field(default_factory=list)

    def column_names(self, blocks: Iterable[str]) -> list[str]:
        return block_columns(blocks, self.vocabulary)


def block_columns(blocks: Iterable[str], vocabulary: Vocabulary | None = None) -> list[str]:
    names: list[str] = []
    chosen = set(blocks)
    for b in BLOCK_ORDER:
        if b not in chosen:
            continue
        if b == "L":
            names += vocabulary.column_names() if vocabulary else [f"L__{i}" for i in range(VOCAB_SIZE)]
        elif b == "M":
            names += [f"M_{n}" for n in META_FEATURES]
        else:
            names += [f"N_{n}" for n in NETWORK_FEATURES]
    return names


def normalize_blocks(blocks: Iterable[str] | str) -> tuple[str, ...]:
    if isinstance(blocks, str):
        blocks = [b.strip() for b in blocks.replace("+", ",").split(",") if b.strip()]
    chosen = set(blocks)
    unknown = chosen - set(BLOCK_ORDER)
    if unknown:
        raise AssemblyError(f"unknown feature block(s) {sorted(unknown)}")
    if not chosen:
        raise AssemblyError("at least one feature block is required")
    return tuple(b for b in BLOCK_ORDER if b in chosen)


@dataclass
class Matrix:
    X: np.ndarray
    y: np.ndarray
    columns: list[str]
    communities: list[str]


def assemble_matrix(vectors: Mapping[str, FeatureVector], blocks: Iterable[str] | str,
                    vocabulary: Vocabulary | None = None,
                    overrides: Mapping[str, Mapping[str, np.ndarray]] | None = None) -> Matrix:
    """Rows sorted by community name; columns are the chosen blocks in L, M, N order.

    ``overrides`` maps a block name to per-community replacement vectors
    (used to swap in a fold-specific linguistic block).
    """
    blocks = normalize_blocks(blocks)
    overrides = overrides or {}
    names = sorted(vectors)
    rows, labels = [], []
    for c in names:
        parts = []
        for b in blocks:
            part = overrides[b].get(c) if b in overrides else vectors[c].block(b)
            if part is None:
                raise AssemblyError(f"community {c!r} lacks feature block {b}")
            parts.append(np.asarray(part, dtype=float))
        rows.append(np.concatenate(parts))
        labels.append(-1 if vectors[c].label is None else vectors[c].label)
    width = len(block_columns(blocks))
    X = np.vstack(rows) if rows else np.zeros((0, width))
    return Matrix(X, np.asarray(labels, dtype=int), block_columns(blocks, vocabulary), names)


def _community_features(args) -> tuple[str, MetaFeatures | None, np.ndarray, Counter, str | None]:
    corpus, cutoff, cap, graph_kwargs = args
    doc = community_document(corpus, cap)
    net = network_feature_vector(build_reply_graph(corpus), **graph_kwargs).values
    try:
        meta = compute_meta_features(corpus, cutoff)
    except MissingMetadataError as exc:
        return corpus.community, None, net, doc, str(exc)
    return corpus.community, meta, net, doc, None


def featurize(corpora: Mapping[str, CommunityCorpus], labels: Mapping[str, int] | None,
              cutoff: int, submission_cap: int = SUBMISSION_CAP, vocab_size: int = VOCAB_SIZE,
              graph_kwargs: Mapping | None = None, workers: int = 1) -> FeatureSet:
    """Compute L/M/N for every labeled community (every community if ``labels`` is None).

    Communities without metadata, or absent from ``corpora``, are dropped
    with a warning.  The vocabulary spans all kept communities.
    """
    graph_kwargs = dict(graph_kwargs or {})
    wanted = sorted(labels) if labels is not None else sorted(corpora)
    dropped = [c for c in wanted if c not in corpora]
    for c in dropped:
        log.warning("%s: labeled but has no records in the window, dropped", c)
    jobs = [(corpora[c], cutoff, submission_cap, graph_kwargs) for c in wanted if c in corpora]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_community_features, jobs, chunksize=8))
    else:
        results = [_community_features(j) for j in jobs]

    vectors: dict[str, FeatureVector] = {}
    documents: dict[str, Counter] = {}
    for name, meta, net, doc, problem in results:
        if meta is None:
            log.warning("%s dropped", problem)
            dropped.append(name)
            continue
        label = None if labels is None else int(labels[name])
        vectors[name] = FeatureVector(name, None, meta.values, net, label, meta.degenerate)
        documents[name] = doc
    vocab = None
    if any(documents.values()):
        vocab, ling = linguistic_block(documents, documents, vocab_size)
        for name, vec in ling.items():
            vectors[name].L = vec
    else:
        for v in vectors.values():
            v.L = np.zeros(vocab_size)
    return FeatureSet(vectors, documents, vocab, sorted(dropped))


# ---------------------------------------------------------------- CSV I/O

LABEL_NAMES = {1: "positive", 0: "negative"}
LABEL_VALUES = {v: k for k, v in LABEL_NAMES.items()}


def write_feature_csv(path: str | Path, fs: FeatureSet) -> None:
    cols = fs.column_names(BLOCK_ORDER)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["community", "label"] + cols)
        for name in sorted(fs.vectors):
            v = fs.vectors[name]
            label = "" if v.label is None else LABEL_NAMES[v.label]
            values = np.concatenate([v.L, v.M, v.N])
            w.writerow([name, label] + [repr(float(x)) for x in values])


def read_feature_csv(path: str | Path) -> tuple[dict[str, FeatureVector], list[str]]:
    """Vectors and column names from a feature matrix CSV."""
    vectors = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols = header[2:]
        n_l = sum(c.startswith("L_") for c in cols)
        n_m = sum(c.startswith("M_") for c in cols)
        for row in reader:
            values = np.array([float(x) for x in row[2:]])
            label = LABEL_VALUES[row[1]] if row[1] else None
            vectors[row[0]] = FeatureVector(row[0], values[:n_l], values[n_l:n_l + n_m],
                                            values[n_l + n_m:], label)
    return vectors, cols

"""Synthetic Pushshift-style corpora with tunable per-block signal.

Positives differ from negatives only through three knobs:

* ``delta_l`` raises the rate of engagement keywords (``vote``,
  ``discussion`` and ``/u/`` mentions) in submission text;
* ``delta_m`` raises the mean comment score;
* ``delta_n`` raises the probability that a reply closes a triad in the
  author graph.

Each positive draws an independent intensity in ``[0, 2)`` per block, so a
single block separates the classes only partly.  All other statistics share
one distribution across classes; with every delta at zero the label carries
no information.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .corpus import DELETED, CommunityMeta, write_meta
from .labeling import ATLAS, MANUAL_SEED, MATCHED_NEGATIVE, LabelSet, write_labels

DAY = 86_400
DS1_START = 1_475_280_000  # 2016-10-01
CUTOFF = 1_491_004_800     # 2017-04-01, end of DS1 and start of DS2
DS2_END = CUTOFF + 3 * DAY
KEYWORDS = ("vote", "discussion")
CAMPAIGN_WORDS = ("pixel", "canvas", "rplace", "draw")
PARTICIPANT_MIX = (0.15, 0.15, 0.55, 0.15)  # participants mostly name the campaign itself
DOMAINS = ("www.youtube.com", "imgur.com", "www.reddit.com", "en.wikipedia.org")
FILES = ("submissions.jsonl", "comments.jsonl", "metadata.csv", "labels.csv", "atlas.csv",
         "seed_labels.csv", "patterns.txt")


@dataclass(frozen=True)
class SynthConfig:
    n_communities: int = 400
    positive_fraction: float = 0.5
    delta_l: float = 0.02
    delta_m: float = 2.5
    delta_n: float = 0.9
    seed: int = 42
    atlas_fraction: float = 0.8
    submissions: tuple[int, int] = (25, 50)
    comments_per_submission: tuple[int, int] = (2, 5)
    users: tuple[int, int] = (20, 60)

    def __post_init__(self):
        if self.n_communities < 4:
            raise ValueError("n_communities must be at least 4")
        if not 0.0 < self.positive_fraction < 1.0:
            raise ValueError("positive_fraction must lie in (0, 1)")
        if min(self.delta_l, self.delta_m, self.delta_n) < 0:
            raise ValueError("signal deltas must be non-negative")
        if not 0.0 <= self.atlas_fraction <= 1.0:
            raise ValueError("atlas_fraction must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


def _filler_vocabulary(rng: np.random.Generator, size: int = 400) -> tuple[list[str], np.ndarray]:
    consonants, vowels = "bcdfghklmnprstvz", "aeiou"
    words: set[str] = set()
    while len(words) < size:
        n = int(rng.integers(2, 4))
        words.add("".join(consonants[rng.integers(16)] + vowels[rng.integers(5)] for _ in range(n)))
    ranked = sorted(words)
    weights = 1.0 / np.arange(1, size + 1) ** 1.1
    return ranked, weights / weights.sum()


class _Ids:
    def __init__(self):
        self.n = 0

    def __call__(self) -> str:
        self.n += 1
        return np.base_repr(self.n + 36**4, 36).lower()


class _Community:
    """Generator state for one community."""

    def __init__(self, cfg: SynthConfig, rng, name: str, label: int, vocab, ids: _Ids):
        self.cfg, self.rng, self.name, self.label, self.ids = cfg, rng, name, label, ids
        self.words, self.word_p = vocab
        lo, hi = cfg.users
        self.users = [f"{name}_u{i}" for i in range(int(rng.integers(lo, hi + 1)))]
        self.activity = rng.pareto(1.5, len(self.users)) + 1.0
        self.activity /= self.activity.sum()
        # per-block engagement intensity, only positives get a shift
        s = rng.uniform(0.0, 2.0, 3) if label else np.zeros(3)
        self.keyword_rate = 0.01 + cfg.delta_l * s[0]
        self.score_mean = rng.uniform(1.5, 5.0) + cfg.delta_m * s[1]
        self.closure = min(0.1 + cfg.delta_n * s[2], 0.95)
        self.partners: dict[str, set[str]] = {}

    def author(self) -> str:
        if self.rng.random() < 0.03:
            return DELETED
        return self.users[int(self.rng.choice(len(self.users), p=self.activity))]

    def text(self, lo: int, hi: int) -> str:
        n = int(self.rng.integers(lo, hi + 1))
        toks = [self.words[j] for j in self.rng.choice(len(self.words), size=n, p=self.word_p)]
        r = self.rng.random(n)
        pick = self.rng.integers(0, 1 << 30, n)
        for i in np.flatnonzero(r < self.keyword_rate * 1.5 + 0.01):
            if r[i] < self.keyword_rate:
                toks[i] = KEYWORDS[pick[i] % 2]
            elif r[i] < self.keyword_rate * 1.5:
                toks[i] = "/u/" + self.users[pick[i] % len(self.users)].lower()
            else:
                toks[i] = f"https://{DOMAINS[pick[i] % len(DOMAINS)]}/x{pick[i] % 997}"
        if toks:
            toks[0] = toks[0].capitalize()
        return " ".join(toks)

    def reply_author(self, parent_author: str) -> str:
        """Close a triad with probability ``closure``, else draw by activity."""
        if parent_author != DELETED and self.rng.random() < self.closure:
            two_hop = sorted({w for p in self.partners.get(parent_author, ())
                              for w in self.partners.get(p, ())} - {parent_author})
            if two_hop:
                return two_hop[int(self.rng.integers(len(two_hop)))]
        return self.author()

    def link(self, a: str, b: str) -> None:
        if DELETED in (a, b) or a == b:
            return
        self.partners.setdefault(a, set()).add(b)
        self.partners.setdefault(b, set()).add(a)

    def records(self, start: int, end: int, n_sub: int, campaign: int = 0):
        """``campaign`` > 0 appends that many campaign words to every title;
        -1 appends a single one to the first title only."""
        rng = self.rng
        subs, coms = [], []
        times = np.sort(rng.integers(start, end - 3600, n_sub))
        for t in times:
            sid = self.ids()
            title = self.text(3, 10)
            if campaign > 0:
                title += " " + " ".join(rng.choice(CAMPAIGN_WORDS, size=campaign, p=PARTICIPANT_MIX))
            elif campaign < 0 and t == times[0]:
                title += " " + str(rng.choice(CAMPAIGN_WORDS))
            r = rng.random()
            body = "" if r < 0.3 else (DELETED if r < 0.33 else "[removed]" if r < 0.35 else self.text(5, 30))
            author = self.author()
            lo, hi = self.cfg.comments_per_submission
            n_com = int(rng.integers(lo, hi + 1))
            subs.append({"id": sid, "subreddit": self.name, "author": author, "title": title,
                         "selftext": body, "score": int(rng.poisson(8)), "created_utc": int(t),
                         "num_comments": n_com})
            thread = [(sid, author, "t3_")]
            for j in range(n_com):
                pid, pauthor, kind = thread[0] if j == 0 or rng.random() < 0.4 else \
                    thread[int(rng.integers(len(thread)))]
                cauthor = self.reply_author(pauthor)
                cid = self.ids()
                score = int(rng.poisson(self.score_mean)) - int(rng.poisson(1.0))
                deleted = rng.random() < 0.02
                coms.append({"id": cid, "subreddit": self.name, "author": cauthor,
                             "body": DELETED if deleted else self.text(2, 15), "score": score,
                             "created_utc": int(min(t + 60 * (j + 1), end - 1)),
                             "parent_id": kind + pid, "link_id": "t3_" + sid})
                self.link(cauthor, pauthor)
                thread.append((cid, cauthor, "t1_"))
        return subs, coms


def generate(cfg: SynthConfig, out_dir: str | Path) -> dict[str, Path]:
    """Write the synthetic dataset into ``out_dir``; returns the file paths.

    Records cover the feature window ``[DS1_START, CUTOFF)`` plus a 72 hour
    campaign window after it in which positives use campaign vocabulary
    heavily and a third of the negatives mention it in passing.

    Besides the ground truth, a manual seed for bootstrapping is written: a
    fifth of the positives and as many negatives, taken from the communities
    that only mention the campaign (the ones a keyword search cannot tell
    apart), topped up from the silent ones if needed.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    vocab = _filler_vocabulary(rng)
    n_pos = int(round(cfg.positive_fraction * cfg.n_communities))
    labels = np.zeros(cfg.n_communities, dtype=int)
    labels[rng.permutation(cfg.n_communities)[:n_pos]] = 1
    width = len(str(cfg.n_communities - 1))
    ids = _Ids()

    subs, coms, meta = [], [], []
    truth = LabelSet()
    atlas, hype = [], []
    for i in range(cfg.n_communities):
        name = f"sub{i:0{width}d}"
        crng = np.random.default_rng([cfg.seed, i])
        c = _Community(cfg, crng, name, int(labels[i]), vocab, ids)
        lo, hi = cfg.submissions
        s, k = c.records(DS1_START, CUTOFF, int(crng.integers(lo, hi + 1)))
        subs += s
        coms += k
        # participants talk about the campaign at length, a third of the rest mention it once
        words = int(crng.integers(3, 6)) if labels[i] else -int(crng.random() < 1 / 3)
        if words < 0:
            hype.append(name)
        s, k = c.records(CUTOFF, DS2_END, int(crng.integers(1, 4)), campaign=words)
        subs += s
        coms += k
        meta.append(CommunityMeta(name, int(crng.lognormal(8.0, 1.5)),
                                  CUTOFF - int(crng.integers(200, 3000)) * DAY))
        if labels[i]:
            listed = crng.random() < cfg.atlas_fraction
            truth.add(name, 1, ATLAS if listed else MANUAL_SEED)
            if listed:
                atlas.append(name)
        else:
            truth.add(name, 0, MATCHED_NEGATIVE)

    n_seed = max(2, n_pos // 5)
    silent = sorted(truth.negatives - set(hype))
    seed = [str(c) for c in rng.choice(sorted(truth.positives), size=n_seed, replace=False)]
    neg = list(rng.permutation(hype)) + list(rng.permutation(silent))
    seed_labels = LabelSet()
    for c in sorted(seed):
        seed_labels.add(c, 1, MANUAL_SEED)
    for c in sorted(str(c) for c in neg[:n_seed]):
        seed_labels.add(c, 0, MANUAL_SEED)

    paths = {f: out / f for f in FILES}
    _write_jsonl(paths["submissions.jsonl"], subs)
    _write_jsonl(paths["comments.jsonl"], coms)
    write_meta(paths["metadata.csv"], meta)
    write_labels(paths["labels.csv"], truth)
    paths["atlas.csv"].write_text("community\n" + "".join(f"{a}\n" for a in atlas), encoding="utf-8")
    write_labels(paths["seed_labels.csv"], seed_labels)
    paths["patterns.txt"].write_text("pixel\ncanvas\nrplace\n", encoding="utf-8")
    return paths


def _write_jsonl(path: Path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in rows:
            fh.write(json.dumps(r, ensure_ascii=False))
            fh.write("\n")
